"""End-to-end pipeline orchestration: simulate, observe, deriv, fit, evaluate, saddle."""

import logging
import math
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from . import __version__
from .basis import GridSpec, select_centers
from .config import ExperimentConfig
from .csv_io import prediction_frame, save_csv, save_embedded, save_trajectory, sidecar_path
from .deriv import DerivativeConfig, estimate_derivative
from .dynamics import simulate
from .errors import RfrError, SaddleEscape, StageFailed
from .evaluate import EvaluationSettings, evaluate_model
from .model import RfrModel, save
from .observe import (add_observation_noise, autocorrelation, embed, select_tau, split_holdout,
                      standardize)
from .paths import (autocorrelation_path, config_path, derivatives_path, embedded_path,
                    ensure_run_dirs, get_evaluation_dir, lambda_ladder_path, manifest_path,
                    model_path, report_path, saddle_segments_path, saddle_summary_path,
                    saddle_trajectory_path,
                    trajectory_path)
from .regress import RegressionProblem, fit_all, lambda_ladder, sample_rows
from .reporting import RunManifest, generate_run_report
from .saddle import SaddleConfig, calibrate_threshold, compare_with_plain, stagger_step
from .utils import named_rng, write_json

logger = logging.getLogger(__name__)

STAGES = ("simulate", "observe", "deriv", "fit", "evaluate", "saddle")

# Keys that do not influence any computed artifact
_NON_PROVENANCE_KEYS = ("run.output_dir", "run.workers")


def model_provenance(cfg: ExperimentConfig, n_centers: int) -> Dict[str, str]:
    """String snapshot of the effective config stored inside the model file."""
    flat = cfg.to_flat()
    provenance = {k: str(v) for k, v in sorted(flat.items()) if k not in _NON_PROVENANCE_KEYS}
    for key, value in sorted(cfg.overrides.items()):
        if key not in _NON_PROVENANCE_KEYS:
            provenance[f"override.{key}"] = str(value)
    provenance["fit.J"] = str(n_centers)
    provenance["tool_version"] = __version__
    return provenance


class Pipeline:
    """Runs one experiment into cfg.output_dir.

    Every stage writes its artifacts and records their checksums in the
    manifest; rerunning with the same config overwrites them with
    identical bytes.
    """

    def __init__(self, config: ExperimentConfig, progress: bool = False):
        self.config = config
        self.progress = progress
        self.run_dir = Path(config.output_dir)
        self.stats: Dict[str, Dict] = {}
        self.manifest = RunManifest(config=config.to_flat(), tool_version=__version__)
        self.series = None
        self.standardization = None
        self.embedded = None
        self.held_out = None
        self.samples = None
        self.targets = None
        self.model: Optional[RfrModel] = None

    def run(self) -> RunManifest:
        """Execute all stages.

        Raises:
            ValidationError: Invalid config, before any compute
            StageFailed: A stage raised; carries the stage name and the partial manifest
        """
        cfg = self.config
        cfg.validate()
        ensure_run_dirs(self.run_dir)
        cfg.to_yaml(config_path(self.run_dir))
        logger.info(f"=== Starting {cfg.system} run ({cfg.preset}) in {self.run_dir} ===")

        steps: List[tuple] = [
            ("simulate", self._simulate),
            ("observe", self._observe),
            ("deriv", self._deriv),
            ("fit", self._fit),
            ("evaluate", self._evaluate),
            ("saddle", self._saddle),
        ]
        for number, (name, fn) in enumerate(steps, start=1):
            logger.info(f"--- Step {number}: {name} ---")
            self._run_stage(name, fn)

        self._finish()
        logger.info(f"=== Run complete: {self.run_dir} ===")
        return self.manifest

    def _run_stage(self, name: str, fn: Callable[[], List[Path]]):
        record = self.manifest.stage(name)
        start = time.time()
        try:
            written = fn()
        except RfrError as e:
            record.status = "failed"
            record.time = time.time() - start
            record.error = str(e)
            self._finish()
            raise StageFailed(name, e, self.manifest) from e
        except (ValueError, ArithmeticError, OSError) as e:
            record.status = "failed"
            record.time = time.time() - start
            record.error = f"{type(e).__name__}: {e}"
            self._finish()
            raise StageFailed(name, e, self.manifest) from e
        record.time = time.time() - start
        if written is None:
            record.status = "skipped"
            return
        record.status = "ok"
        self.manifest.add_files(name, written, self.run_dir)
        self.stats.setdefault(name, {})['time'] = record.time

    def _finish(self):
        self.manifest.write(manifest_path(self.run_dir))
        generate_run_report(report_path(self.run_dir), self.stats, self.manifest)

    def _simulate(self) -> List[Path]:
        cfg = self.config
        simulation = simulate(cfg.simulator, cfg.duration, cfg.dt, dt_int=cfg.dt_int,
                              transient=cfg.transient, seed=cfg.seed, params=cfg.system_params,
                              progress=self.progress)
        series = simulation.series
        if cfg.noise_std_ratio > 0:
            series = add_observation_noise(series, cfg.noise_std_ratio, seed=cfg.seed)
        metadata = dict(simulation.metadata)
        metadata['noise_std_ratio'] = cfg.noise_std_ratio
        self.series = series
        path = save_trajectory(series, trajectory_path(self.run_dir), metadata)
        self.stats['simulate'] = {'n_samples': series.n_samples,
                                  'noise_std_ratio': cfg.noise_std_ratio}
        return [path, sidecar_path(path)]

    def _observe(self) -> List[Path]:
        cfg = self.config
        standardized, transform = standardize(self.series)
        max_lag = min(5.0 * cfg.tau, (self.series.n_samples // 2 - 1) * cfg.dt)
        acf = autocorrelation(standardized, max_lag)
        chosen = select_tau(acf, target=cfg.tau_target, override=cfg.tau)
        suggested = select_tau(acf, target=cfg.tau_target)
        if cfg.reference_correlation is not None:
            logger.info(f"Autocorrelation at tau={chosen.tau:g}: {chosen.correlation:.4f} "
                        f"(reference {cfg.reference_correlation:.4f})")

        embedded = embed(standardized, cfg.dimension, cfg.tau, layout=cfg.layout)
        self.standardization = transform
        self.embedded, self.held_out = split_holdout(embedded, cfg.holdout_fraction)
        n_held = embedded.n_samples - self.embedded.n_samples

        acf_path = autocorrelation_path(self.run_dir)
        save_csv(pd.DataFrame({'lag': acf.lags, 'acf': acf.values}), acf_path)
        path = save_embedded(embedded, embedded_path(self.run_dir), transform,
                             {'system': cfg.system, 'correlation_at_tau': chosen.correlation,
                              'n_train': self.embedded.n_samples, 'n_held_out': n_held})
        self.stats['observe'] = {
            'tau': chosen.tau,
            'lag': chosen.lag,
            'correlation': chosen.correlation,
            'reference_correlation': cfg.reference_correlation,
            'tau_target': cfg.tau_target,
            'suggested_tau': suggested.tau if suggested.crossed else None,
            'std': float(transform.std[0]),
            'n_embedded': embedded.n_samples,
            'n_held_out': n_held,
        }
        return [acf_path, path, sidecar_path(path)]

    def _deriv(self) -> List[Path]:
        cfg = self.config
        stencil = DerivativeConfig(order=cfg.deriv_order, l=cfg.l, dt=cfg.dt)
        estimate = estimate_derivative(self.embedded.samples, stencil)
        self.samples = self.embedded.samples[estimate.index]
        self.targets = estimate.values

        columns = {'t': self.embedded.times[estimate.index]}
        for i in range(self.embedded.dimension):
            columns[f"dX{i + 1}"] = estimate.values[:, i]
        path = derivatives_path(self.run_dir)
        save_csv(pd.DataFrame(columns), path)
        self.stats['deriv'] = {'order': cfg.deriv_order, 'l': cfg.l,
                               'n_usable': int(estimate.values.shape[0])}
        return [path]

    def _fit(self) -> List[Path]:
        cfg = self.config
        grid = GridSpec(delta_grid=cfg.delta_grid, m=cfg.m, p=cfg.p, anchor=cfg.anchor,
                        norm=cfg.norm, max_centers=cfg.max_centers)
        centers = select_centers(self.samples, grid, progress=self.progress)
        rows = sample_rows(self.samples.shape[0], cfg.n_samples, named_rng(cfg.seed, "sample_rows"))
        problem = RegressionProblem.from_samples(self.samples[rows], self.targets[rows], centers,
                                                 cfg.lam, workers=cfg.workers,
                                                 progress=self.progress)
        coefficients = fit_all(problem)
        model = RfrModel(
            centers=centers,
            coefficients=coefficients,
            standardization=self.standardization.expand(cfg.dimension),
            tau=self.embedded.tau,
            dimension=cfg.dimension,
            dt=cfg.dt,
            n_obs=self.embedded.n_obs,
            layout=self.embedded.layout,
            provenance=model_provenance(cfg, centers.count),
        )
        self.model = model
        path = save(model, model_path(self.run_dir))

        ladder = [cfg.lam * 10.0 ** k for k in range(-2, 3)] if cfg.lam > 0 else [0.0, 1e-9, 1e-7, 1e-5]
        ladder_path = lambda_ladder_path(self.run_dir)
        save_csv(lambda_ladder(problem, ladder), ladder_path)

        self.stats['fit'] = {
            'J': centers.count,
            'n': problem.n,
            'lambda': cfg.lam,
            'sigma2': centers.sigma2,
            'residual_mse': float(np.mean(coefficients.residual_mse)),
        }
        logger.info(f"Fitted model: J={centers.count}, n={problem.n}, "
                    f"residual MSE={self.stats['fit']['residual_mse']:.4g}")
        return [path, ladder_path]

    def _evaluate(self) -> List[Path]:
        cfg = self.config
        settings = EvaluationSettings(
            long_horizon=cfg.long_horizon,
            density_bins=cfg.density_bins,
            n_init=cfg.n_init,
            forecast_horizon=cfg.forecast_horizon,
            seed=cfg.seed,
            laminar_threshold=cfg.laminar_threshold,
            tail_min=cfg.tail_min,
            workers=cfg.workers,
        )
        result = evaluate_model(self.model, self.held_out, settings, progress=self.progress)
        self.stats['evaluate'] = dict(result.metrics)
        return result.write(get_evaluation_dir(self.run_dir))

    def _saddle_config(self, threshold: float) -> SaddleConfig:
        cfg = self.config
        return SaddleConfig(segment_length=cfg.segment_length, keep_length=cfg.keep_length,
                            trials_max=cfg.trials_max, threshold=threshold,
                            total_length=cfg.saddle_length, seed=cfg.seed, refine=cfg.refine,
                            workers=cfg.workers)

    def _saddle(self) -> Optional[List[Path]]:
        cfg = self.config
        if not cfg.saddle_enabled:
            logger.info("Stagger-and-step disabled; skipping")
            return None
        threshold = cfg.saddle_threshold
        if threshold is None:
            threshold = calibrate_threshold(self.model, self.held_out, self._saddle_config(math.inf))
        saddle_cfg = self._saddle_config(threshold)
        x0 = self.held_out.samples[0]
        try:
            run = stagger_step(self.model, x0, saddle_cfg, progress=self.progress)
        except SaddleEscape as e:
            if e.run is not None:
                self._write_saddle(e.run)
            raise
        written = self._write_saddle(run)
        comparison = compare_with_plain(self.model, x0, run)
        written.append(write_json(saddle_summary_path(self.run_dir), comparison.to_dict()))
        self.stats['saddle'] = {'threshold': threshold, 'segments': len(run.segments),
                                'perturbed': run.perturbed_segments, 'success': run.success,
                                'plain_valid_time': comparison.plain_valid_time,
                                'saddle_valid_time': comparison.saddle_valid_time}
        return written

    def _write_saddle(self, run) -> List[Path]:
        trajectory = saddle_trajectory_path(self.run_dir)
        segments = saddle_segments_path(self.run_dir)
        save_csv(prediction_frame(run.times, run.states, run.x1_destd), trajectory)
        save_csv(run.segments_frame(), segments)
        return [trajectory, segments]


def run_pipeline(config: ExperimentConfig, progress: bool = False) -> RunManifest:
    """Run every stage for `config` and return the manifest."""
    return Pipeline(config, progress=progress).run()
