"""Classical block iterative shrinkage thresholding (BISTA).

One iteration from the zero start:

    x <- eta_lam( x - 2*gamma * adjoint(apply(x) - t) )

with eta the block soft threshold.  The literal 2*gamma factor is kept;
the objective is guaranteed nonincreasing when the effective step
2*gamma is at most 1/lipschitz_bound(model).
"""

import csv
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blocksparse import block_soft_threshold, objective
from .metrics import nmse_db

DEFAULT_LAMBDA = 4e-3


@dataclass
class SolveTrace:
    """Per-iteration objective / NMSE / wall-time, including the start point."""

    objective: np.ndarray
    seconds: np.ndarray
    nmse_db: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.objective)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "objective", "nmse_db", "seconds"])
            for i in range(len(self.objective)):
                nm = "" if self.nmse_db is None else repr(float(self.nmse_db[i]))
                writer.writerow([i, repr(float(self.objective[i])), nm,
                                 repr(float(self.seconds[i]))])


def bista_solve(model, t, lam=DEFAULT_LAMBDA, gamma=None, n_iter=500,
                ground_truth=None):
    """Run ``n_iter`` BISTA iterations from the zero start.

    gamma defaults to 1/lipschitz_bound(model); values above that bound
    only warn (convergence may still hold, monotonicity may not).
    Returns (estimate, SolveTrace); the trace has n_iter + 1 entries.

    The traced objective is the one the iteration descends,
    ``||model(x) - t||_F^2 + (lam/gamma) * ||x||_2,1``: thresholding row
    norms by ``lam`` after a gradient step of size ``gamma`` is the exact
    proximal step for that regularization weight, which is what makes the
    trace nonincreasing whenever the effective step 2*gamma is at most
    1/lipschitz_bound.
    """
    t = np.asarray(t, dtype=float)
    if t.shape != model.data_shape:
        raise ValueError(
            f"data shape {t.shape} does not match model {model.data_shape}")
    n_iter = int(n_iter)
    if n_iter < 1:
        raise ValueError("n_iter must be a positive integer")
    lam = float(lam)
    if not np.isfinite(lam):
        raise ValueError("lam must be finite")
    lip = model.lipschitz_bound()
    if gamma is None:
        gamma = 1.0 / lip
    gamma = float(gamma)
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    if lip > 0 and gamma > 1.0 / lip * (1.0 + 1e-9):
        warnings.warn(
            f"gamma={gamma:.4g} exceeds 1/L={1.0 / lip:.4g}; "
            "convergence is not guaranteed", RuntimeWarning)

    x = np.zeros(model.signal_shape)
    objs = np.empty(n_iter + 1)
    secs = np.empty(n_iter + 1)
    nmses = None if ground_truth is None else np.empty(n_iter + 1)
    start = time.perf_counter()

    lam_objective = lam / gamma

    def record(i):
        objs[i] = objective(model, x, t, lam_objective)
        secs[i] = time.perf_counter() - start
        if nmses is not None:
            nmses[i] = nmse_db(x, ground_truth)

    record(0)
    for i in range(1, n_iter + 1):
        grad = model.adjoint(model.apply(x) - t)
        x = block_soft_threshold(x - 2.0 * gamma * grad, lam)
        record(i)
    return x, SolveTrace(objective=objs, seconds=secs, nmse_db=nmses)
