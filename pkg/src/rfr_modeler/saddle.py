"""Stagger-and-step: long model trajectories patched from valid segments.

Each round integrates a segment from the current point and scores it
with the maximum delay error E. A segment with E below the threshold is
kept as is; otherwise the current point is staggered by random
perturbations until a trial segment passes (or the best of `trials_max`
is taken). The first `keep_length` of the winning segment is appended
and the next round starts from the winner's state at `keep_length`.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .errors import InvalidParams, NonFiniteState, SaddleEscape
from .evaluate import delay_discrepancy
from .model import RfrModel, integrate_model
from .observe import EmbeddedSeries
from .utils import child_seed, named_rng, named_seed, spawn_rngs, worker_count

logger = logging.getLogger(__name__)


@dataclass
class SaddleConfig:
    """Stagger-and-step settings (times in model time units).

    Attributes:
        segment_length: Length of each integrated segment
        keep_length: Prefix of the winning segment that is kept
        trials_max: Perturbed trials per segment
        threshold: Delay-error threshold for a valid segment
        total_length: Target length of the patched trajectory
        seed: Root seed (the "saddle" sub-stream is used)
        refine: Search around the best perturbation when no trial passes
        a_exp: Perturbation magnitudes are noise_scale * 10^(-u), u ~ U[a_exp, b_exp]
        b_exp: See a_exp
        noise_scale: Overall perturbation scale (0 disables staggering)
        refine_shrink: Relative size of refinement perturbations
        hard_fail_multiple: Segments with E above this multiple of the threshold count as hard failures
        max_fail_rounds: Consecutive hard failures that abort the run
        workers: Parallel trial integrations
    """

    segment_length: float = 50.0
    keep_length: float = 25.0
    trials_max: int = 100
    threshold: float = math.inf
    total_length: float = 1000.0
    seed: int = 0
    refine: bool = False
    a_exp: float = 1.0
    b_exp: float = 8.0
    noise_scale: float = 1.0
    refine_shrink: float = 0.1
    hard_fail_multiple: float = 10.0
    max_fail_rounds: int = 3
    workers: Optional[int] = None

    def __post_init__(self):
        if not self.threshold > 0:
            raise InvalidParams(f"threshold must be positive, got {self.threshold}")
        if not 0 < self.keep_length <= self.segment_length / 2:
            raise InvalidParams("keep_length must be in (0, segment_length/2]")
        if self.trials_max < 1:
            raise InvalidParams(f"trials_max must be >= 1, got {self.trials_max}")
        if self.a_exp > self.b_exp:
            raise InvalidParams(f"a_exp ({self.a_exp}) must not exceed b_exp ({self.b_exp})")
        if self.noise_scale < 0:
            raise InvalidParams("noise_scale must be >= 0")
        if self.total_length <= 0:
            raise InvalidParams("total_length must be positive")


@dataclass
class Trial:
    index: int
    start: np.ndarray
    perturbation: np.ndarray
    magnitude: float
    states: np.ndarray
    score: float


@dataclass
class SegmentRecord:
    index: int
    trials: int
    score: float
    noise_mag: float
    valid: bool
    refined: bool = False


@dataclass
class SaddleRun:
    times: np.ndarray
    states: np.ndarray
    segments: List[SegmentRecord]
    threshold: float
    success: bool = True
    x1_destd: Optional[np.ndarray] = None

    def segments_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{'segment': s.index, 'trials': s.trials, 'E': s.score,
              'noise_mag': s.noise_mag, 'valid': s.valid} for s in self.segments],
            columns=['segment', 'trials', 'E', 'noise_mag', 'valid'],
        )

    @property
    def perturbed_segments(self) -> int:
        return sum(1 for s in self.segments if s.trials > 0)


def segment_score(states: np.ndarray, lag: int, n_obs: int = 1) -> float:
    """Maximum delay absolute error over a segment; the final `lag` samples have no partner."""
    diff = delay_discrepancy(states, lag, n_obs)
    if diff.size == 0:
        return 0.0
    score = float(diff.max())
    return score if math.isfinite(score) else math.inf


def draw_stagger(current: np.ndarray, rng: np.random.Generator, a_exp: float = 1.0,
                 b_exp: float = 8.0, noise_scale: float = 1.0) -> Tuple[np.ndarray, float]:
    """Perturb `current` in a uniformly random direction by noise_scale * 10^(-u).

    Returns:
        (perturbed point, perturbation norm)
    """
    direction = rng.standard_normal(current.shape[0])
    norm = np.linalg.norm(direction)
    direction = direction / norm if norm > 0 else direction
    magnitude = noise_scale * 10.0 ** (-rng.uniform(a_exp, b_exp))
    return current + magnitude * direction, float(magnitude)


def _run_segment(model: RfrModel, start: np.ndarray, steps: int) -> Tuple[np.ndarray, float]:
    try:
        states = integrate_model(model, start, steps, model.dt)
        return states, segment_score(states, model.lag, model.n_obs)
    except NonFiniteState as e:
        partial = e.partial if e.partial is not None else start.reshape(1, -1)
        return partial, math.inf


def refine_noise(model: RfrModel, best: Trial, cfg: SaddleConfig, steps: int,
                 rng: np.random.Generator) -> Tuple[Trial, int]:
    """Perturb around the best trial's perturbation; keep only improvements.

    At most trials_max // 4 extra integrations, stopping early once the
    threshold is met.

    Returns:
        (possibly improved trial, integrations used)
    """
    if not cfg.refine:
        return best, 0
    budget = cfg.trials_max // 4
    origin = best.start - best.perturbation
    scale = cfg.refine_shrink * best.magnitude
    used = 0
    for k in range(budget):
        if best.score < cfg.threshold:
            break
        step, _ = draw_stagger(np.zeros_like(origin), rng, 0.0, 0.0, scale)
        perturbation = best.perturbation + step
        start = origin + perturbation
        states, score = _run_segment(model, start, steps)
        used += 1
        if score < best.score:
            best = Trial(index=best.index, start=start, perturbation=perturbation,
                         magnitude=float(np.linalg.norm(perturbation)), states=states, score=score)
    return best, used


def _best_trial(model: RfrModel, current: np.ndarray, cfg: SaddleConfig, steps: int,
                segment: int, seed_seq, executor: ThreadPoolExecutor, batch: int) -> Tuple[Trial, int]:
    """Lowest-index trial below the threshold, else the minimum-E trial."""
    rngs = spawn_rngs(seed_seq, cfg.trials_max, segment)

    def run(i):
        start, magnitude = draw_stagger(current, rngs[i], cfg.a_exp, cfg.b_exp, cfg.noise_scale)
        states, score = _run_segment(model, start, steps)
        return Trial(index=i, start=start, perturbation=start - current, magnitude=magnitude,
                     states=states, score=score)

    trials: List[Trial] = []
    for first in range(0, cfg.trials_max, batch):
        trials.extend(executor.map(run, range(first, min(first + batch, cfg.trials_max))))
        passing = [t for t in trials if t.score < cfg.threshold]
        if passing:
            winner = passing[0]
            return winner, winner.index + 1
    winner = min(trials, key=lambda t: (t.score, t.index))
    return winner, cfg.trials_max


def stagger_step(model: RfrModel, x0: np.ndarray, cfg: SaddleConfig,
                 progress: bool = False) -> SaddleRun:
    """Build a patched trajectory of cfg.total_length from x0.

    Raises:
        SaddleEscape: Hard failures in cfg.max_fail_rounds consecutive
            segments, or no trial survives a full segment; `run` holds
            the partial trajectory.
    """
    dt = model.dt
    seg_steps = int(round(cfg.segment_length / dt))
    keep_steps = int(round(cfg.keep_length / dt))
    total_samples = int(round(cfg.total_length / dt)) + 1
    if keep_steps < 1 or seg_steps <= model.lag:
        raise InvalidParams(f"segment of {seg_steps} steps too short for delay lag {model.lag}")

    seed_seq = named_seed(cfg.seed, "saddle")
    current = np.asarray(x0, dtype=float).reshape(-1)
    pieces: List[np.ndarray] = []
    collected = 0
    records: List[SegmentRecord] = []
    fail_rounds = 0
    batch = worker_count(cfg.workers)
    n_segments = math.ceil((total_samples - 1) / keep_steps) if total_samples > 1 else 1

    def partial_run(success: bool) -> SaddleRun:
        states = np.concatenate(pieces) if pieces else current.reshape(1, -1)
        return SaddleRun(times=dt * np.arange(states.shape[0]), states=states, segments=records,
                         threshold=cfg.threshold, success=success,
                         x1_destd=model.destandardize_x1(states))

    with ThreadPoolExecutor(max_workers=batch) as executor:
        for segment in tqdm(range(n_segments), desc="Stagger-and-step", disable=not progress):
            states, score = _run_segment(model, current, seg_steps)
            winner = Trial(index=-1, start=current, perturbation=np.zeros_like(current),
                           magnitude=0.0, states=states, score=score)
            used = 0
            refined = False
            if not score < cfg.threshold:
                winner, used = _best_trial(model, current, cfg, seg_steps, segment, seed_seq,
                                           executor, batch)
                if winner.score >= cfg.threshold and cfg.refine:
                    rng = np.random.default_rng(child_seed(seed_seq, segment, cfg.trials_max))
                    winner, extra = refine_noise(model, winner, cfg, seg_steps, rng)
                    used += extra
                    refined = extra > 0

            valid = winner.score <= cfg.threshold
            records.append(SegmentRecord(index=segment, trials=used, score=winner.score,
                                         noise_mag=winner.magnitude, valid=valid, refined=refined))
            if not valid:
                logger.warning(f"Segment {segment}: best E={winner.score:.4g} above threshold "
                               f"{cfg.threshold:.4g} after {used} trials")

            if winner.states.shape[0] <= keep_steps:
                raise SaddleEscape(f"segment {segment}: every trial blew up before keep_length",
                                   run=partial_run(False))

            take = min(keep_steps, total_samples - collected)
            pieces.append(winner.states[:take])
            collected += take
            current = winner.states[keep_steps]

            if winner.score > cfg.hard_fail_multiple * cfg.threshold:
                fail_rounds += 1
                if fail_rounds >= cfg.max_fail_rounds:
                    raise SaddleEscape(
                        f"{fail_rounds} consecutive segments above {cfg.hard_fail_multiple}x threshold",
                        run=partial_run(False),
                    )
            else:
                fail_rounds = 0

    if collected < total_samples:
        pieces.append(current.reshape(1, -1))
    run = partial_run(all(r.valid for r in records))
    logger.info(f"Stagger-and-step: {len(records)} segments, {run.perturbed_segments} perturbed, "
                f"success={run.success}")
    return run


def valid_duration(states: np.ndarray, lag: int, n_obs: int, threshold: float, dt: float) -> float:
    """Time until the pointwise delay error of a trajectory first exceeds `threshold`."""
    if states.shape[0] <= lag:
        return 0.0
    diff = delay_discrepancy(states, lag, n_obs)
    errors = diff.max(axis=1) if diff.shape[1] else np.zeros(diff.shape[0])
    above = np.flatnonzero(~(errors <= threshold))
    return float(above[0] * dt) if above.size else float(errors.shape[0] * dt)


@dataclass
class ValidityComparison:
    """Valid durations of plain integration and of the patched trajectory from one start."""

    plain_valid_time: float
    saddle_valid_time: float
    threshold: float
    plain_blowup_time: Optional[float] = None

    @property
    def ratio(self) -> Optional[float]:
        if self.plain_valid_time <= 0:
            return None
        return self.saddle_valid_time / self.plain_valid_time

    def to_dict(self) -> dict:
        return {'threshold': self.threshold, 'plain_valid_time': self.plain_valid_time,
                'saddle_valid_time': self.saddle_valid_time, 'ratio': self.ratio,
                'plain_blowup_time': self.plain_blowup_time}


def compare_with_plain(model: RfrModel, x0: np.ndarray, run: SaddleRun,
                       threshold: Optional[float] = None) -> ValidityComparison:
    """Integrate the model without staggering over the span of `run` and compare valid times.

    A plain trajectory that blows up is scored up to its last finite state.
    """
    threshold = run.threshold if threshold is None else threshold
    steps = max(run.states.shape[0] - 1, 1)
    blowup = None
    try:
        plain = integrate_model(model, x0, steps, model.dt)
    except NonFiniteState as e:
        plain = e.partial if e.partial is not None else np.asarray(x0, dtype=float).reshape(1, -1)
        blowup = e.step * model.dt
    comparison = ValidityComparison(
        plain_valid_time=valid_duration(plain, model.lag, model.n_obs, threshold, model.dt),
        saddle_valid_time=valid_duration(run.states, model.lag, model.n_obs, threshold, model.dt),
        threshold=threshold,
        plain_blowup_time=blowup,
    )
    logger.info(f"Valid time plain={comparison.plain_valid_time:.4g}, "
                f"stagger-and-step={comparison.saddle_valid_time:.4g}")
    return comparison


def calibrate_threshold(model: RfrModel, actual: EmbeddedSeries, cfg: SaddleConfig,
                        n_segments: int = 20, quantile: float = 0.95) -> float:
    """Threshold for `--threshold auto`.

    Launches model segments of cfg.segment_length from `n_segments` random
    actual states and returns the `quantile` of their scores E.
    """
    steps = int(round(cfg.segment_length / model.dt))
    if actual.n_samples < 1:
        raise InvalidParams("no actual states to calibrate from")
    rng = named_rng(cfg.seed, "calibrate")
    picks = rng.choice(actual.n_samples, size=min(n_segments, actual.n_samples), replace=False)
    scores = np.array([_run_segment(model, actual.samples[i], steps)[1] for i in np.sort(picks)])
    finite = scores[np.isfinite(scores)]
    if finite.size == 0:
        raise SaddleEscape("every calibration segment blew up; cannot set a threshold")
    threshold = float(np.quantile(finite, quantile))
    if threshold <= 0:
        threshold = float(np.finfo(float).eps)
    logger.info(f"Calibrated threshold {threshold:.4g} from {finite.size} segments (q={quantile})")
    return threshold
