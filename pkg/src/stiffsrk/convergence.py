"""Empirical strong order from coupled Brownian paths.

All step sizes integrate the same Brownian path: increments are drawn once
per path on the finest grid and summed for the coarser ones.
"""

from __future__ import annotations

import contextlib
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFit, ValidationError
from .solver import (
    NewtonConfig,
    SdaeProblem,
    brownian_increments,
    coarsen_i1,
    exact_reference,
    simulate_batch,
)
from .tableau import SrkTableau

DEFAULT_EXPONENTS = tuple(range(4, 10))
DEFAULT_PATHS = 2000


@contextlib.contextmanager
def _open_text(target):
    """Yield ``target`` if it is writable, else open it as a path."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="") as fh:
            yield fh


@dataclass
class ConvergenceStudy:
    h_list: np.ndarray
    n_paths: int
    errors: np.ndarray
    slope: float
    seed: int
    constraint_residual: float = field(default=0.0)

    def write_csv(self, path):
        with _open_text(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["h", "rms_error"])
            for h, e in zip(self.h_list, self.errors):
                w.writerow([repr(float(h)), repr(float(e))])

    def summary(self) -> dict:
        return {"slope": self.slope, "n_paths": self.n_paths, "seed": self.seed}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def fit_slope(h_list, errors) -> float:
    """Least-squares slope of ``log2(error)`` against ``log2(h)``."""
    h = np.asarray(h_list, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.size < 3:
        raise DegenerateFit("need at least 3 step sizes to fit a slope")
    if np.any(~np.isfinite(e)) or np.any(e <= 0) or np.any(h <= 0):
        raise DegenerateFit("errors and step sizes must be finite and positive")
    return float(np.polyfit(np.log2(h), np.log2(e), 1)[0])


def default_h_list(horizon: float = 1.0, exponents=DEFAULT_EXPONENTS) -> np.ndarray:
    return np.array([horizon * 2.0 ** -p for p in exponents])


def _step_counts(horizon, h_list):
    h = np.asarray(h_list, dtype=float)
    if h.size and np.any(np.diff(h) >= 0):
        raise ValidationError("step sizes must be strictly decreasing")
    counts = np.rint(horizon / h).astype(int)
    if np.any(counts < 1) or np.any(np.abs(counts * h - horizon) > 1e-9 * horizon):
        raise ValidationError("every step size must divide the time horizon")
    finest = counts[-1]
    if np.any(finest % counts):
        raise ValidationError("step sizes must share a common finest grid")
    return counts, finest


def strong_order_estimate(problem: SdaeProblem, kind: str, params: dict, tableau: SrkTableau,
                          h_list=None, n_paths: int = DEFAULT_PATHS, seed: int = 0,
                          cfg: NewtonConfig | None = None) -> ConvergenceStudy:
    """RMS endpoint error against the closed-form solution ``kind`` for each step size.

    ``params`` are passed to ``exact_reference``.  For a singular mass
    matrix the largest algebraic residual over all steps and paths is
    stored in ``constraint_residual``.
    """
    horizon = problem.T - problem.t0
    h_list = default_h_list(horizon) if h_list is None else np.asarray(h_list, dtype=float)
    if h_list.size < 3:
        raise DegenerateFit("need at least 3 step sizes to fit a slope")
    if n_paths < 1:
        raise ValidationError("n_paths must be positive")
    counts, finest = _step_counts(horizon, h_list)

    fine = brownian_increments(seed, n_paths, finest, horizon / finest)
    times = problem.t0 + (horizon / finest) * np.arange(finest + 1)
    exact = exact_reference(kind, params, times, fine)
    exact_T = exact[:, -1] if exact.ndim == 3 else exact[:, -1, None]

    errors = []
    worst = 0.0
    alg = list(problem.algebraic)
    for n in counts:
        i1 = coarsen_i1(fine, finest // n)
        states, _ = simulate_batch(problem, tableau, i1, cfg, record=bool(alg))
        if alg:
            h = horizon / n
            for m in range(1, n + 1):
                r = problem.f_batch(problem.t0 + m * h, states[:, m])[:, alg]
                worst = max(worst, float(np.max(np.abs(r))))
            states = states[:, -1]
        sq = np.sum((states - exact_T) ** 2, axis=1)
        errors.append(math.sqrt(float(np.mean(sq))))
    errors = np.array(errors)
    return ConvergenceStudy(h_list, int(n_paths), errors, fit_slope(h_list, errors), int(seed), worst)
