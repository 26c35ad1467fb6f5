"""Generate run_report.md and manifest.json."""

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

from .utils import file_sha1


@dataclass
class StageRecord:
    name: str
    status: str = "pending"
    time: float = 0.0
    files: Dict[str, str] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class RunManifest:
    """Config snapshot, tool version, and per-stage file checksums and wall-times."""

    config: Dict[str, object]
    tool_version: str
    stages: List[StageRecord] = field(default_factory=list)

    def stage(self, name: str) -> StageRecord:
        for record in self.stages:
            if record.name == name:
                return record
        record = StageRecord(name=name)
        self.stages.append(record)
        return record

    def add_files(self, name: str, paths: List[Path], root: Path):
        record = self.stage(name)
        for path in paths:
            path = Path(path)
            record.files[str(path.relative_to(root))] = file_sha1(path)

    @property
    def files(self) -> Dict[str, str]:
        out = {}
        for record in self.stages:
            out.update(record.files)
        return out

    def to_dict(self) -> Dict:
        return {
            'tool_version': self.tool_version,
            'config': self.config,
            'stages': [
                {'name': s.name, 'status': s.status, 'time': round(s.time, 3),
                 'files': dict(sorted(s.files.items())), 'error': s.error}
                for s in self.stages
            ],
        }

    def write(self, path: Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, default=str)


def load_manifest(path: Path) -> Dict:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def _fmt(value, spec: str = ".4g") -> str:
    if value is None:
        return "n/a"
    try:
        return format(value, spec)
    except (TypeError, ValueError):
        return str(value)


def generate_run_report(output_path: Path, stats: Dict, manifest: RunManifest):
    """
    Generate run_report.md.

    Expected stats keys:
    - simulate: {n_samples, noise_std_ratio, time}
    - observe: {tau, lag, correlation, reference_correlation, std, n_embedded, time}
    - deriv: {order, l, n_usable, time}
    - fit: {J, n, lambda, sigma2, residual_mse, time}
    - evaluate: {median_E, density_overlap, valid_time_mean, valid_time_positive, n_init, time}
    - saddle: {threshold, segments, perturbed, success, plain_valid_time, saddle_valid_time, time}
      (absent when disabled)
    """
    cfg = manifest.config
    sim = stats.get('simulate', {})
    obs = stats.get('observe', {})
    der = stats.get('deriv', {})
    fit = stats.get('fit', {})
    ev = stats.get('evaluate', {})

    report_lines = [
        f"# Run Report: {cfg.get('system.name', '?')}",
        f"",
        f"**Generated:** {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}",
        f"",
        f"## Configuration",
        f"- **System:** {cfg.get('system.name')}",
        f"- **Preset:** {cfg.get('run.preset')}",
        f"- **Seed:** {cfg.get('run.seed')}",
        f"- **N_T / dt:** {cfg.get('system.n_total')} / {cfg.get('system.dt')}",
        f"- **D / tau / I:** {cfg.get('observe.dimension')} / {cfg.get('observe.tau')} / {cfg.get('observe.n_obs')}",
        f"- **delta_grid / m / p:** {cfg.get('fit.delta_grid')} / {cfg.get('fit.m')} / {cfg.get('fit.p')}",
        f"- **lambda / n:** {cfg.get('fit.lambda')} / {cfg.get('fit.n_samples')}",
        f"- **Tool version:** {manifest.tool_version}",
        f"",
        f"## Simulation",
        f"- **Samples:** {sim.get('n_samples', 0)}",
        f"- **Observation noise ratio:** {sim.get('noise_std_ratio', 0)}",
        f"- **Time:** {sim.get('time', 0):.2f}s",
        f"",
        f"## Observation and Embedding",
        f"- **tau:** {obs.get('tau')} ({obs.get('lag')} samples)",
        f"- **Correlation at tau:** {_fmt(obs.get('correlation'))} "
        f"(reference {_fmt(obs.get('reference_correlation'))})",
        f"- **Suggested tau (target {obs.get('tau_target')}):** {_fmt(obs.get('suggested_tau'))}",
        f"- **Signal std before standardization:** {_fmt(obs.get('std'))}",
        f"- **Embedded samples:** {obs.get('n_embedded', 0)}",
        f"- **Time:** {obs.get('time', 0):.2f}s",
        f"",
        f"## Derivatives",
        f"- **Order / stride:** {der.get('order')} / {der.get('l')}",
        f"- **Usable samples:** {der.get('n_usable', 0)}",
        f"- **Time:** {der.get('time', 0):.2f}s",
        f"",
        f"## Regression",
        f"- **Centers J:** {fit.get('J', 0)}",
        f"- **sigma^2:** {_fmt(fit.get('sigma2'))}",
        f"- **Samples n:** {fit.get('n', 0)}",
        f"- **Residual MSE (mean over components):** {_fmt(fit.get('residual_mse'))}",
        f"- **Time:** {fit.get('time', 0):.2f}s",
        f"",
        f"## Evaluation",
        f"- **Median delay error E:** {_fmt(ev.get('median_E'))}",
        f"- **Density overlap:** {_fmt(ev.get('density_overlap'), '.3f')}",
        f"- **Mean forecast valid time:** {_fmt(ev.get('valid_time_mean'))}",
        f"- **Forecasts with positive valid time:** {ev.get('valid_time_positive', 0)}/{ev.get('n_init', 0)}",
    ]
    if ev.get('blowup_time') is not None:
        report_lines.append(f"- **Long model run blew up at:** t={_fmt(ev.get('blowup_time'))}")
    if 'laminar_tail_slope_model' in ev:
        report_lines.append(f"- **Laminar tail slope (model / actual):** "
                            f"{_fmt(ev.get('laminar_tail_slope_model'))} / {_fmt(ev.get('laminar_tail_slope_actual'))}")
    report_lines.extend([f"- **Time:** {ev.get('time', 0):.2f}s", f""])

    saddle = stats.get('saddle')
    report_lines.append("## Stagger-and-Step")
    if saddle:
        report_lines.extend([
            f"- **Threshold:** {_fmt(saddle.get('threshold'))}",
            f"- **Segments / perturbed:** {saddle.get('segments', 0)} / {saddle.get('perturbed', 0)}",
            f"- **Success:** {saddle.get('success')}",
            f"- **Valid time (plain / stagger-and-step):** {_fmt(saddle.get('plain_valid_time'))} / "
            f"{_fmt(saddle.get('saddle_valid_time'))}",
            f"- **Time:** {saddle.get('time', 0):.2f}s",
        ])
    else:
        report_lines.append("- skipped")
    report_lines.append("")

    report_lines.append("## Stages")
    for record in manifest.stages:
        line = f"- **{record.name}:** {record.status} ({record.time:.2f}s, {len(record.files)} files)"
        if record.error:
            line += f" - {record.error}"
        report_lines.append(line)
    report_lines.append("")

    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, 'w', encoding='utf-8') as f:
        f.write('\n'.join(report_lines))
