"""Command-line interface for rfr_modeler."""

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .basis import GridSpec, select_centers
from .config import SYSTEMS, SYSTEM_DEFAULTS, ExperimentConfig, apply_preset, system_defaults, with_overrides
from .csv_io import (load_embedded, load_trajectory, prediction_frame, save_csv, save_embedded,
                     save_trajectory)
from .deriv import DerivativeConfig, estimate_derivative, scan_stride
from .dynamics import SYSTEM_TAGS, observable_derivative, simulate
from .errors import InvalidParams, NonFiniteState, RfrError, SaddleEscape, StageFailed
from .evaluate import EvaluationSettings, evaluate_model
from .model import RfrModel, load, predict, save
from .observe import (Standardization, add_observation_noise, autocorrelation, embed, select_tau,
                      standardize)
from .pipeline import run_pipeline
from .regress import RegressionProblem, fit_all, sample_rows
from .saddle import SaddleConfig, calibrate_threshold, compare_with_plain, stagger_step
from .utils import named_rng, setup_logging, write_json

logger = logging.getLogger(__name__)

EPILOG = """
Examples:
  # Full desk-scale KS experiment (simulate -> observe -> deriv -> fit -> evaluate)
  python -m rfr_modeler run --system ks --preset desk --output-dir runs/ks

  # Same, from a config file, with stagger-and-step and a calibrated threshold
  python -m rfr_modeler run --config runs/ks/config.yaml --saddle --threshold auto

  # Step by step
  python -m rfr_modeler simulate --system ks --T 1000 --dt 0.01 --out ks.csv
  python -m rfr_modeler embed --in ks.csv --dim 5 --tau 0.12 --out ks_emb.csv
  python -m rfr_modeler fit --in ks_emb.csv --grid 1.0 --lambda 1e-7 --n-samples 10000 --out ks.rfr
  python -m rfr_modeler predict --model ks.rfr --init-from ks_emb.csv --horizon 100 --out pred.csv
  python -m rfr_modeler evaluate --model ks.rfr --actual ks_emb.csv --report eval/
  python -m rfr_modeler saddle --model ks.rfr --init-from ks_emb.csv --length 1000 --threshold auto --out saddle.csv

  # Derivative error against the finite-difference stride, 10% observation noise
  python -m rfr_modeler deriv-scan --system ks --noise-std-ratio 0.1 --l-max 15 --out scan.csv
"""


def _threshold(value: str):
    if value == 'auto':
        return value
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'auto', got {value!r}")
    if not number > 0:
        raise argparse.ArgumentTypeError("threshold must be positive")
    return number


def _add_simulate(subparsers):
    p = subparsers.add_parser('simulate', help='Generate an observed trajectory of a reference system')
    p.add_argument('--system', choices=SYSTEM_TAGS, required=True, help='Reference system')
    p.add_argument('--T', dest='duration', type=float, required=True, help='Observation length in time units')
    p.add_argument('--dt', type=float, help='Observation step (default: per-system value)')
    p.add_argument('--dt-int', type=float, help='Integration step (default: per-system value)')
    p.add_argument('--transient', type=float, default=1000.0, help='Discarded warm-up (default: 1000)')
    p.add_argument('--noise-std-ratio', type=float, default=0.0,
                   help='Observation noise relative to the signal std (default: 0)')
    p.add_argument('--seed', type=int, default=0, help='Root seed (default: 0)')
    p.add_argument('--out', type=Path, required=True, help='Output CSV (t,w1[,w2])')


def _add_embed(subparsers):
    p = subparsers.add_parser('embed', help='Standardize and build delay coordinates')
    p.add_argument('--in', dest='input', type=Path, required=True, help='Trajectory CSV')
    p.add_argument('--out', type=Path, required=True, help='Embedded CSV (t,X1..XD)')
    p.add_argument('--dim', type=int, required=True, help='Embedding dimension D')
    p.add_argument('--tau', type=float,
                   help='Delay in time units (default: first crossing of --tau-target)')
    p.add_argument('--tau-target', type=float, default=0.5,
                   help='Autocorrelation target for automatic tau (default: 0.5)')
    p.add_argument('--closer-bracket', action='store_true',
                   help='Use the lag just before the crossing when its correlation is nearer the target')
    p.add_argument('--layout', choices=['single', 'interleaved'], default='single',
                   help='single observable, or all observables interleaved (default: single)')


def _add_fit(subparsers):
    p = subparsers.add_parser('fit', help='Fit an RfR model to an embedded series')
    p.add_argument('--in', dest='input', type=Path, required=True, help='Embedded CSV')
    p.add_argument('--out', type=Path, required=True, help='Model file')
    p.add_argument('--lambda', dest='lam', type=float, default=1e-7, help='Ridge parameter (default: 1e-7)')
    p.add_argument('--n-samples', type=int, default=50_000, help='Regression samples n (default: 50000)')
    p.add_argument('--grid', type=float, required=True, help='Lattice spacing delta_grid')
    p.add_argument('--m', type=int, default=3, help='Neighborhood size (default: 3)')
    p.add_argument('--p', type=float, default=0.1, help='RBF value at the neighborhood radius (default: 0.1)')
    p.add_argument('--norm', choices=['l2', 'linf'], default='l2', help='Center retention norm (default: l2)')
    p.add_argument('--max-centers', type=int, default=1_000_000, help='Cap on J (default: 1000000)')
    p.add_argument('--deriv-order', type=int, choices=[2, 6], default=6, help='Stencil order (default: 6)')
    p.add_argument('--deriv-stride', type=int, default=1, help='Stencil stride l (default: 1)')
    p.add_argument('--seed', type=int, default=0, help='Root seed (default: 0)')


def _add_predict(subparsers):
    p = subparsers.add_parser('predict', help='Integrate a model from an embedded state')
    p.add_argument('--model', type=Path, required=True, help='Model file')
    p.add_argument('--init-from', type=Path, required=True, help='Embedded CSV with the initial state')
    p.add_argument('--row', type=int, default=0, help='Row of --init-from to start from (default: 0)')
    p.add_argument('--horizon', type=float, required=True, help='Prediction length in time units')
    p.add_argument('--dt-int', type=float, help='Integration step (default: model dt)')
    p.add_argument('--out', type=Path, required=True, help='Output CSV (t,X1..XD,X1_destd)')


def _add_evaluate(subparsers):
    p = subparsers.add_parser('evaluate', help='Compare a model against actual embedded data')
    p.add_argument('--model', type=Path, required=True, help='Model file')
    p.add_argument('--actual', type=Path, required=True, help='Embedded CSV of actual data')
    p.add_argument('--report', type=Path, required=True, help='Output directory for metrics')
    p.add_argument('--long-horizon', type=float, default=1000.0, help='Long model run length (default: 1000)')
    p.add_argument('--forecast-horizon', type=float, default=5.0, help='Forecast length (default: 5)')
    p.add_argument('--n-init', type=int, default=10, help='Forecast initial conditions (default: 10)')
    p.add_argument('--bins', type=int, default=100, help='Density bins (default: 100)')
    p.add_argument('--laminar-threshold', type=float, default=1.0,
                   help='C in |x1 - x2| < C for two-observable models (default: 1)')
    p.add_argument('--seed', type=int, default=0, help='Root seed (default: 0)')


def _add_saddle(subparsers):
    p = subparsers.add_parser('saddle', help='Stagger-and-step trajectory on the model saddle')
    p.add_argument('--model', type=Path, required=True, help='Model file')
    p.add_argument('--init-from', type=Path, required=True,
                   help='Embedded CSV; its first --row state starts the run, all rows feed auto threshold')
    p.add_argument('--row', type=int, default=0, help='Starting row (default: 0)')
    p.add_argument('--length', type=float, required=True, help='Total trajectory length')
    p.add_argument('--threshold', type=_threshold, required=True, help="Delay-error threshold or 'auto'")
    p.add_argument('--segment-length', type=float, default=50.0, help='Segment length (default: 50)')
    p.add_argument('--keep-length', type=float, default=25.0, help='Kept prefix (default: 25)')
    p.add_argument('--trials', type=int, default=100, help='Trials per segment (default: 100)')
    p.add_argument('--refine', action='store_true', help='Local noise search when no trial passes')
    p.add_argument('--seed', type=int, default=0, help='Root seed (default: 0)')
    p.add_argument('--out', type=Path, required=True, help='Output CSV (t,X1..XD,X1_destd)')
    p.add_argument('--segments-out', type=Path,
                   help='Per-segment log CSV (default: <out stem>_segments.csv)')


def _add_run(subparsers):
    p = subparsers.add_parser('run', help='Full pipeline from a config')
    p.add_argument('--config', type=Path, help='YAML config (flat namespaced keys)')
    p.add_argument('--system', choices=SYSTEMS, default='ks',
                   help='System when no --config is given (default: ks)')
    p.add_argument('--preset', choices=['full', 'desk'],
                   help='Scale preset (default: desk without --config, unchanged with it)')
    p.add_argument('--seed', type=int, help='Root seed')
    p.add_argument('--output-dir', type=Path, help='Run directory (default: runs/<system>)')
    p.add_argument('--saddle', action='store_true', help='Also run stagger-and-step')
    p.add_argument('--threshold', type=_threshold, help="Saddle threshold or 'auto' (default: auto)")
    p.add_argument('--workers', type=int, help='Worker threads (capped by RFR_THREADS)')


def _add_deriv_scan(subparsers):
    p = subparsers.add_parser('deriv-scan', help='Derivative error std against the stencil stride')
    p.add_argument('--system', choices=SYSTEM_TAGS, default='ks', help='Reference system (default: ks)')
    p.add_argument('--T', dest='duration', type=float, default=1000.0, help='Series length (default: 1000)')
    p.add_argument('--dt', type=float, help='Observation step (default: per-system value)')
    p.add_argument('--noise-std-ratio', type=float, default=0.1, help='Observation noise (default: 0.1)')
    p.add_argument('--l-max', type=int, default=15, help='Largest stride (default: 15)')
    p.add_argument('--transient', type=float, default=100.0, help='Discarded warm-up (default: 100)')
    p.add_argument('--seed', type=int, default=0, help='Root seed (default: 0)')
    p.add_argument('--out', type=Path, required=True, help='Output CSV (order,l,error_std)')


def parse_args(argv=None):
    """Parse command line arguments.

    Returns:
        Parsed arguments namespace
    """
    parser = argparse.ArgumentParser(
        prog='rfr_modeler',
        description='Reconstruct ODE models of chaotic systems from time series with radial-function regression.',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--verbose', '-v', action='store_true', help='Debug logging')
    parser.add_argument('--quiet', '-q', action='store_true', help='Warnings and errors only')
    parser.add_argument('--progress', action='store_true', help='Show progress bars')

    subparsers = parser.add_subparsers(dest='command', required=True)
    _add_simulate(subparsers)
    _add_embed(subparsers)
    _add_fit(subparsers)
    _add_predict(subparsers)
    _add_evaluate(subparsers)
    _add_saddle(subparsers)
    _add_run(subparsers)
    _add_deriv_scan(subparsers)
    return parser.parse_args(argv)


def _system_dt(system: str, dt):
    return dt if dt is not None else SYSTEM_DEFAULTS[system]['dt']


def cmd_simulate(args) -> int:
    dt = _system_dt(args.system, args.dt)
    simulation = simulate(args.system, args.duration, dt, dt_int=args.dt_int, transient=args.transient,
                          seed=args.seed, progress=args.progress)
    series = simulation.series
    if args.noise_std_ratio > 0:
        series = add_observation_noise(series, args.noise_std_ratio, seed=args.seed)
    metadata = dict(simulation.metadata)
    metadata['noise_std_ratio'] = args.noise_std_ratio
    save_trajectory(series, args.out, metadata)
    print(f"Simulated {args.system}: {series.n_samples} samples at dt={dt} -> {args.out}")
    return 0


def cmd_embed(args) -> int:
    series, _ = load_trajectory(args.input)
    standardized, transform = standardize(series)
    max_lag = (series.n_samples // 2 - 1) * series.dt
    if args.tau is not None:
        max_lag = min(max_lag, 5.0 * args.tau)
    acf = autocorrelation(standardized, max_lag)
    selection = select_tau(acf, target=args.tau_target, override=args.tau, closer=args.closer_bracket)
    embedded = embed(standardized, args.dim, selection.tau, layout=args.layout)
    save_embedded(embedded, args.out, transform, {'correlation_at_tau': selection.correlation})
    print(f"Embedded D={args.dim}, tau={selection.tau:g} (acf {selection.correlation:.4f}): "
          f"{embedded.n_samples} vectors -> {args.out}")
    return 0


def cmd_fit(args) -> int:
    embedded, transform, _ = load_embedded(args.input)
    if transform is None:
        logger.warning(f"{args.input} has no standardization in its sidecar; assuming identity")
        transform = Standardization(np.zeros(embedded.n_obs), np.ones(embedded.n_obs))
    estimate = estimate_derivative(embedded.samples,
                                   DerivativeConfig(order=args.deriv_order, l=args.deriv_stride,
                                                    dt=embedded.dt))
    samples = embedded.samples[estimate.index]
    grid = GridSpec(delta_grid=args.grid, m=args.m, p=args.p, norm=args.norm,
                    max_centers=args.max_centers)
    centers = select_centers(samples, grid, progress=args.progress)
    rows = sample_rows(samples.shape[0], args.n_samples, named_rng(args.seed, "sample_rows"))
    problem = RegressionProblem.from_samples(samples[rows], estimate.values[rows], centers, args.lam,
                                             progress=args.progress)
    coefficients = fit_all(problem)
    provenance = {
        'fit.delta_grid': str(args.grid), 'fit.m': str(args.m), 'fit.p': str(args.p),
        'fit.lambda': str(args.lam), 'fit.n_samples': str(args.n_samples), 'fit.norm': args.norm,
        'deriv.order': str(args.deriv_order), 'deriv.stride': str(args.deriv_stride),
        'run.seed': str(args.seed), 'fit.J': str(centers.count), 'tool_version': __version__,
    }
    model = RfrModel(centers=centers, coefficients=coefficients,
                     standardization=transform.expand(embedded.dimension), tau=embedded.tau,
                     dimension=embedded.dimension, dt=embedded.dt, n_obs=embedded.n_obs,
                     layout=embedded.layout, provenance=provenance)
    save(model, args.out)
    print(f"Fitted model: J={centers.count}, n={problem.n}, "
          f"residual MSE={float(np.mean(coefficients.residual_mse)):.4g} -> {args.out}")
    return 0


def _initial_state(path: Path, row: int):
    embedded, _, _ = load_embedded(path)
    if not 0 <= row < embedded.n_samples:
        raise InvalidParams(f"row {row} outside {path} ({embedded.n_samples} rows)")
    return embedded, embedded.samples[row]


def cmd_predict(args) -> int:
    model = load(args.model)
    _, x0 = _initial_state(args.init_from, args.row)
    try:
        prediction = predict(model, x0, args.horizon, dt_int=args.dt_int, progress=args.progress)
    except NonFiniteState as e:
        partial = e.partial if e.partial is not None else x0.reshape(1, -1)
        times = model.dt * np.arange(partial.shape[0])
        save_csv(prediction_frame(times, partial, model.destandardize_x1(partial)), args.out)
        print(f"Model trajectory blew up after t={times[-1]:g}; partial result -> {args.out}")
        return e.exit_code
    save_csv(prediction_frame(prediction.times, prediction.states, prediction.x1_destd), args.out)
    print(f"Predicted {prediction.states.shape[0]} samples (dt_int={prediction.dt_int:g}) -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load(args.model)
    actual, _, _ = load_embedded(args.actual)
    settings = EvaluationSettings(long_horizon=args.long_horizon, density_bins=args.bins,
                                  n_init=args.n_init, forecast_horizon=args.forecast_horizon,
                                  seed=args.seed, laminar_threshold=args.laminar_threshold)
    result = evaluate_model(model, actual, settings, progress=args.progress)
    result.write(args.report)
    metrics = result.metrics
    print(f"Median E: {metrics['median_E']:.4g}")
    print(f"Density overlap: {metrics['density_overlap']:.3f}")
    print(f"Forecasts with positive valid time: {metrics['valid_time_positive']}/{metrics['n_init']}")
    print(f"Report written to: {args.report}")
    return 0


def _segments_path(args) -> Path:
    if args.segments_out is not None:
        return args.segments_out
    return args.out.with_name(f"{args.out.stem}_segments.csv")


def cmd_saddle(args) -> int:
    model = load(args.model)
    actual, x0 = _initial_state(args.init_from, args.row)
    base = dict(segment_length=args.segment_length, keep_length=args.keep_length,
                trials_max=args.trials, total_length=args.length, seed=args.seed, refine=args.refine)
    threshold = args.threshold
    if threshold == 'auto':
        threshold = calibrate_threshold(model, actual, SaddleConfig(threshold=math.inf, **base))
    cfg = SaddleConfig(threshold=threshold, **base)
    exit_code = 0
    try:
        run = stagger_step(model, x0, cfg, progress=args.progress)
    except SaddleEscape as e:
        if e.run is None:
            raise
        run = e.run
        exit_code = e.exit_code
        print(f"Saddle escape: {e}")
    save_csv(prediction_frame(run.times, run.states, run.x1_destd), args.out)
    save_csv(run.segments_frame(), _segments_path(args))
    print(f"Stagger-and-step: {len(run.segments)} segments, {run.perturbed_segments} perturbed, "
          f"threshold {threshold:.4g}, success={run.success} -> {args.out}")
    comparison = compare_with_plain(model, x0, run)
    write_json(args.out.with_name(f"{args.out.stem}_summary.json"), comparison.to_dict())
    print(f"Valid time: plain {comparison.plain_valid_time:.4g}, "
          f"stagger-and-step {comparison.saddle_valid_time:.4g}")
    return exit_code


def build_run_config(args) -> ExperimentConfig:
    """Config file (or per-system defaults plus preset), then CLI flag overrides."""
    if args.config is not None:
        cfg = ExperimentConfig.from_yaml(args.config)
        if args.preset is not None:
            cfg = apply_preset(cfg, args.preset)
    else:
        cfg = apply_preset(system_defaults(args.system), args.preset or 'desk')
    changes = {}
    if args.seed is not None:
        changes['seed'] = args.seed
    if args.output_dir is not None:
        changes['output_dir'] = args.output_dir
    if args.workers is not None:
        changes['workers'] = args.workers
    if args.saddle:
        changes['saddle_enabled'] = True
    if args.threshold is not None and args.threshold != 'auto':
        changes['saddle_threshold'] = args.threshold
    return with_overrides(cfg, **changes)


def cmd_run(args) -> int:
    cfg = build_run_config(args)
    manifest = run_pipeline(cfg, progress=args.progress)
    print(f"\n=== Run complete: {cfg.system} ({cfg.preset}) ===")
    for record in manifest.stages:
        print(f"  {record.name:<9} {record.status:<8} {record.time:8.2f}s  {len(record.files)} files")
    print(f"Results saved to: {cfg.output_dir}")
    return 0


def cmd_deriv_scan(args) -> int:
    dt = _system_dt(args.system, args.dt)
    simulation = simulate(args.system, args.duration, dt, transient=args.transient, seed=args.seed,
                          progress=args.progress)
    clean = simulation.series
    truth = observable_derivative(simulation)[:, 0]
    noisy = add_observation_noise(clean, args.noise_std_ratio, seed=args.seed)
    _, transform = standardize(noisy)
    scale = float(transform.std[0])
    signal = (noisy.column(0) - transform.mean[0]) / scale
    frames = []
    for order in (2, 6):
        scan = scan_stride(signal, truth / scale, order, range(1, args.l_max + 1), dt,
                           progress=args.progress)
        frame = scan.to_frame()
        frame.insert(0, 'order', order)
        frames.append(frame)
        print(f"Order {order}: minimum error std {scan.best_error:.4g} at l={scan.best_l}")
    save_csv(pd.concat(frames, ignore_index=True), args.out)
    print(f"Scan written to: {args.out}")
    return 0


COMMANDS = {
    'simulate': cmd_simulate,
    'embed': cmd_embed,
    'fit': cmd_fit,
    'predict': cmd_predict,
    'evaluate': cmd_evaluate,
    'saddle': cmd_saddle,
    'run': cmd_run,
    'deriv-scan': cmd_deriv_scan,
}


def main(argv=None) -> int:
    """Main entry point; returns the process exit code."""
    args = parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level)

    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("\n\nInterrupted by user")
        return 130
    except StageFailed as e:
        logger.error(str(e))
        print(f"\nError in stage '{e.stage}': {e.cause}", file=sys.stderr)
        return e.exit_code
    except RfrError as e:
        logger.error(str(e))
        print(f"\nError: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(str(e))
        print(f"\nI/O error: {e}", file=sys.stderr)
        return 4


if __name__ == '__main__':
    sys.exit(main())
