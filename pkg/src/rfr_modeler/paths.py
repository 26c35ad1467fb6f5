"""Path management for the run layout: data/, model/, evaluation/, saddle/."""

from pathlib import Path


def get_data_dir(run_dir: Path) -> Path:
    return Path(run_dir) / "data"


def get_model_dir(run_dir: Path) -> Path:
    return Path(run_dir) / "model"


def get_evaluation_dir(run_dir: Path) -> Path:
    return Path(run_dir) / "evaluation"


def get_saddle_dir(run_dir: Path) -> Path:
    return Path(run_dir) / "saddle"


def trajectory_path(run_dir: Path) -> Path:
    return get_data_dir(run_dir) / "trajectory.csv"


def embedded_path(run_dir: Path) -> Path:
    return get_data_dir(run_dir) / "embedded.csv"


def derivatives_path(run_dir: Path) -> Path:
    return get_data_dir(run_dir) / "derivatives.csv"


def autocorrelation_path(run_dir: Path) -> Path:
    return get_data_dir(run_dir) / "autocorrelation.csv"


def model_path(run_dir: Path) -> Path:
    return get_model_dir(run_dir) / "model.rfr"


def lambda_ladder_path(run_dir: Path) -> Path:
    return get_model_dir(run_dir) / "lambda_ladder.csv"


def saddle_trajectory_path(run_dir: Path) -> Path:
    return get_saddle_dir(run_dir) / "trajectory.csv"


def saddle_segments_path(run_dir: Path) -> Path:
    return get_saddle_dir(run_dir) / "segments.csv"


def saddle_summary_path(run_dir: Path) -> Path:
    return get_saddle_dir(run_dir) / "summary.json"


def config_path(run_dir: Path) -> Path:
    return Path(run_dir) / "config.yaml"


def manifest_path(run_dir: Path) -> Path:
    return Path(run_dir) / "manifest.json"


def report_path(run_dir: Path) -> Path:
    return Path(run_dir) / "run_report.md"


def ensure_run_dirs(run_dir: Path):
    """Create all stage directories of a run."""
    for directory in (get_data_dir(run_dir), get_model_dir(run_dir),
                      get_evaluation_dir(run_dir), get_saddle_dir(run_dir)):
        directory.mkdir(parents=True, exist_ok=True)
