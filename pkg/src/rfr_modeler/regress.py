"""Ridge regression of standardized derivatives onto the RBF design matrix."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from tqdm import tqdm

from .basis import CenterSet, eval_rows
from .errors import InvalidParams, NotEnoughSamples, SingularSystem
from .utils import worker_count

logger = logging.getLogger(__name__)

# smallest acceptable ratio of Cholesky diagonal entries when lambda = 0
RANK_TOLERANCE = 1e-8


def sample_rows(n_available: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of `n` distinct row indices, returned sorted.

    Raises:
        NotEnoughSamples: n exceeds the usable sample count
    """
    if n < 1:
        raise InvalidParams(f"sample count must be >= 1, got {n}")
    if n > n_available:
        raise NotEnoughSamples(f"requested n={n} samples but only {n_available} are usable")
    return np.sort(rng.choice(n_available, size=n, replace=False))


@dataclass
class RegressionProblem:
    """Accumulated normal equations for all D targets.

    Attributes:
        gram: A^T A, shape (P, P)
        moment: A^T y, shape (P, D)
        target_sq: Column sums of y^2, shape (D,)
        n: Number of rows in A
        lam: Ridge parameter lambda
    """

    gram: np.ndarray
    moment: np.ndarray
    target_sq: np.ndarray
    n: int
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidParams(f"lambda must be >= 0, got {self.lam}")
        if self.moment.ndim == 1:
            self.moment = self.moment.reshape(-1, 1)
        self.target_sq = np.atleast_1d(self.target_sq)

    @property
    def n_columns(self) -> int:
        return self.gram.shape[0]

    @property
    def n_targets(self) -> int:
        return self.moment.shape[1]

    def with_lambda(self, lam: float) -> "RegressionProblem":
        return replace(self, lam=lam)

    @classmethod
    def from_design(cls, design: np.ndarray, targets: np.ndarray, lam: float) -> "RegressionProblem":
        design = np.asarray(design, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if targets.ndim == 1:
            targets = targets.reshape(-1, 1)
        if design.shape[0] != targets.shape[0]:
            raise InvalidParams(f"design has {design.shape[0]} rows, targets {targets.shape[0]}")
        return cls(gram=design.T @ design, moment=design.T @ targets,
                   target_sq=np.sum(targets ** 2, axis=0), n=design.shape[0], lam=lam)

    @classmethod
    def from_samples(cls, samples: np.ndarray, targets: np.ndarray, centers: CenterSet,
                     lam: float, block_size: int = 2048, workers: Optional[int] = None,
                     progress: bool = False) -> "RegressionProblem":
        """Accumulate A^T A and A^T y block by block without materializing A.

        Row blocks are evaluated in a thread pool; the reduction runs in
        block order so the result does not depend on the worker count.
        """
        samples = np.asarray(samples, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if targets.ndim == 1:
            targets = targets.reshape(-1, 1)
        n = samples.shape[0]
        if targets.shape[0] != n:
            raise InvalidParams(f"{n} samples but {targets.shape[0]} targets")
        p = 1 + samples.shape[1] + centers.count
        gram = np.zeros((p, p))
        moment = np.zeros((p, targets.shape[1]))
        starts = list(range(0, n, block_size))
        workers = worker_count(workers)
        logger.info(f"Accumulating normal equations: n={n}, P={p}, blocks={len(starts)}, workers={workers}")

        def rows(start):
            return eval_rows(samples[start:start + block_size], centers)

        with ThreadPoolExecutor(max_workers=workers) as executor:
            with tqdm(total=len(starts), desc="Accumulating A^T A", disable=not progress) as pbar:
                for window in range(0, len(starts), workers):
                    batch = starts[window:window + workers]
                    for start, block in zip(batch, executor.map(rows, batch)):
                        gram += block.T @ block
                        moment += block.T @ targets[start:start + block_size]
                        pbar.update(1)

        return cls(gram=gram, moment=moment, target_sq=np.sum(targets ** 2, axis=0), n=n, lam=lam)


@dataclass
class Coefficients:
    """beta[k] is the coefficient vector of model component k over [1, X, phi]."""

    beta: np.ndarray
    residual_mse: np.ndarray

    def __post_init__(self):
        self.beta = np.atleast_2d(self.beta)
        if not np.all(np.isfinite(self.beta)):
            raise SingularSystem("regression produced non-finite coefficients")

    @property
    def n_components(self) -> int:
        return self.beta.shape[0]


def _factorize(problem: RegressionProblem):
    system = problem.gram + problem.n * problem.lam * np.eye(problem.n_columns)
    try:
        factor = cho_factor(system, lower=True, check_finite=True)
    except LinAlgError as e:
        raise SingularSystem(
            f"A^T A + n*lambda*I is not positive definite (lambda={problem.lam}): {e}"
        ) from None
    if problem.lam == 0:
        diag = np.abs(np.diag(factor[0]))
        if diag.min() <= RANK_TOLERANCE * diag.max():
            raise SingularSystem("design matrix is rank deficient and lambda = 0")
    return factor


def _residual_mse(problem: RegressionProblem, beta: np.ndarray) -> np.ndarray:
    # ||y - A b||^2 = y^T y - 2 b^T A^T y + b^T A^T A b, per component
    cross = np.einsum('kp,pk->k', beta, problem.moment)
    quad = np.einsum('kp,pq,kq->k', beta, problem.gram, beta)
    return np.maximum(problem.target_sq - 2.0 * cross + quad, 0.0) / problem.n


def fit_all(problem: RegressionProblem) -> Coefficients:
    """Solve (A^T A + n lambda I) b_k = A^T y_k for every component with one factorization."""
    factor = _factorize(problem)
    beta = cho_solve(factor, problem.moment).T
    coefficients = Coefficients(beta=beta, residual_mse=_residual_mse(problem, beta))
    logger.info(f"Ridge fit lambda={problem.lam:g}: residual MSE {coefficients.residual_mse}")
    return coefficients


def ridge_solve(design: np.ndarray, target: np.ndarray, lam: float) -> np.ndarray:
    """Minimizer of (1/2n)||y - A b||^2 + (lambda/2)||b||^2 for a single target y."""
    problem = RegressionProblem.from_design(design, np.asarray(target).reshape(-1, 1), lam)
    return fit_all(problem).beta[0]


def lambda_ladder(problem: RegressionProblem, lambdas: Iterable[float]) -> pd.DataFrame:
    """Coefficient norm and training residual across a sequence of lambda values."""
    records = []
    for lam in lambdas:
        try:
            coefficients = fit_all(problem.with_lambda(float(lam)))
        except SingularSystem as e:
            logger.warning(f"lambda={lam:g}: {e}")
            continue
        records.append({
            'lambda': float(lam),
            'coef_norm': float(np.linalg.norm(coefficients.beta)),
            'residual_mse': float(np.mean(coefficients.residual_mse)),
        })
    return pd.DataFrame(records, columns=['lambda', 'coef_norm', 'residual_mse'])
