"""Fixed-step integration of ``M dX = f(t, X) dt + g(t, X) dW`` with stiffly
accurate SRK methods.

Stages are solved in order.  Implicit stages use a (simplified) Newton
iteration on

    M (H_i - y) - h A_ii f(t_i, H_i) - sqrt(h) B3_ii g(t_i, H_i) - r_i = 0,

where ``r_i`` collects the already computed stages.  The step output is the
last stage.  Internally every step works on a batch of paths of shape
``(n_paths, d)`` so Monte Carlo studies run vectorized; the single-path
functions are thin wrappers over the batch code.
"""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    EmptyInput,
    InconsistentInitialValue,
    NewtonDiverged,
    NonpositiveStep,
    SingularIteration,
    StructureError,
    ValidationError,
)
from .tableau import SrkTableau, validate_structure

logger = logging.getLogger(__name__)

CONSISTENCY_TOL = 1e-8


@contextlib.contextmanager
def _open_text(target):
    """Yield ``target`` if it is writable, else open it as a path."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="") as fh:
            yield fh


# --------------------------------------------------------------------------
# problem definition


@dataclass
class SdaeProblem:
    """Drift, diffusion and mass matrix of an index-1 SDAE with scalar noise.

    ``f`` and ``g`` map ``(t, x) -> R^d``.  With ``vectorized=True`` they
    also accept a batch ``x`` of shape ``(n, d)`` and return ``(n, d)``;
    the Jacobians then return ``(n, d, d)``.  Missing Jacobians are replaced
    by central finite differences.

    Rows of ``M`` listed in ``algebraic`` (default: the all-zero rows) are
    constraints ``0 = f_k(t, x)``; ``g`` must vanish on them.
    """

    f: Callable
    g: Callable
    x0: np.ndarray
    t0: float = 0.0
    T: float = 1.0
    M: Optional[np.ndarray] = None
    f_jacobian: Optional[Callable] = None
    g_jacobian: Optional[Callable] = None
    algebraic: Optional[tuple] = None
    vectorized: bool = False
    consistency_tol: float = CONSISTENCY_TOL

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        d = self.x0.size
        self.M = np.eye(d) if self.M is None else np.asarray(self.M, dtype=float)
        if self.M.shape != (d, d):
            raise ValidationError(f"M has shape {self.M.shape}, expected {(d, d)}")
        if not self.T > self.t0:
            raise ValidationError("T must be larger than t0")
        if self.algebraic is None:
            self.algebraic = tuple(int(k) for k in np.nonzero(~self.M.any(axis=1))[0])
        else:
            self.algebraic = tuple(int(k) for k in self.algebraic)
            if np.any(self.M[list(self.algebraic)] != 0):
                raise ValidationError("declared algebraic rows of M must be zero")
        if __debug__:
            rank = np.linalg.matrix_rank(self.M)
            if rank != d - len(self.algebraic):
                logger.debug("rank(M)=%d but %d algebraic rows declared", rank, len(self.algebraic))
        self.differential = tuple(k for k in range(d) if k not in self.algebraic)
        self._check_consistency()

    @property
    def dim(self) -> int:
        return self.x0.size

    @property
    def singular(self) -> bool:
        return bool(self.algebraic)

    def _check_consistency(self):
        if not self.algebraic:
            return
        alg = list(self.algebraic)
        fx = self.f_batch(self.t0, self.x0[None, :])[0]
        gx = self.g_batch(self.t0, self.x0[None, :])[0]
        res = np.max(np.abs(fx[alg]))
        if res > self.consistency_tol:
            raise InconsistentInitialValue(f"algebraic residual {res:.3e} at x0 exceeds {self.consistency_tol}")
        if np.any(gx[alg] != 0):
            raise ValidationError("diffusion must vanish in the algebraic rows")

    # batched wrappers

    def f_batch(self, t, X):
        if self.vectorized:
            return np.asarray(self.f(t, X), dtype=float).reshape(X.shape)
        return np.stack([np.asarray(self.f(t, x), dtype=float).reshape(-1) for x in X])

    def g_batch(self, t, X):
        if self.vectorized:
            return np.asarray(self.g(t, X), dtype=float).reshape(X.shape)
        return np.stack([np.asarray(self.g(t, x), dtype=float).reshape(-1) for x in X])

    def jacobian_batch(self, which, t, X, mode="analytic"):
        jac = self.f_jacobian if which == "f" else self.g_jacobian
        fun = self.f_batch if which == "f" else self.g_batch
        n, d = X.shape
        if jac is not None and mode == "analytic":
            if self.vectorized:
                return np.asarray(jac(t, X), dtype=float).reshape(n, d, d)
            return np.stack([np.asarray(jac(t, x), dtype=float).reshape(d, d) for x in X])
        return finite_difference_jacobian(fun, t, X)


def finite_difference_jacobian(fun, t, X):
    """Central differences with step ``sqrt(eps) * (1 + |x_j|)``, batched over rows of ``X``."""
    n, d = X.shape
    J = np.empty((n, d, d))
    root_eps = math.sqrt(np.finfo(float).eps)
    for j in range(d):
        step = root_eps * (1.0 + np.abs(X[:, j]))
        Xp = X.copy()
        Xm = X.copy()
        Xp[:, j] += step
        Xm[:, j] -= step
        J[:, :, j] = (fun(t, Xp) - fun(t, Xm)) / (2.0 * step)[:, None]
    return J


# --------------------------------------------------------------------------
# Wiener increments


@dataclass(frozen=True)
class NoiseIncrement:
    """Wiener increment ``i1`` over a step ``h`` and its double integral ``i11``."""

    i1: float
    i11: float
    h: float

    @classmethod
    def from_i1(cls, i1: float, h: float) -> "NoiseIncrement":
        if not h > 0:
            raise NonpositiveStep(f"step size must be positive, got {h}")
        return cls(float(i1), 0.5 * (float(i1) ** 2 - h), float(h))

    @property
    def xi(self) -> float:
        return self.i1 / math.sqrt(self.h)


def draw_increments(rng: np.random.Generator, h: float) -> NoiseIncrement:
    """``i1 = sqrt(h) * xi`` with ``xi ~ N(0, 1)`` drawn from ``rng``."""
    if not h > 0:
        raise NonpositiveStep(f"step size must be positive, got {h}")
    return NoiseIncrement.from_i1(math.sqrt(h) * rng.standard_normal(), h)


def coarsen_increments(fine) -> NoiseIncrement:
    """Merge contiguous increments into one over the union of their steps.

    Sums run left to right; ``coarsen_i1`` reproduces them bit for bit.
    """
    fine = list(fine)
    if not fine:
        raise EmptyInput("no increments to coarsen")
    if len(fine) == 1:
        return fine[0]
    i1 = 0.0
    h = 0.0
    for inc in fine:
        i1 += inc.i1
        h += inc.h
    return NoiseIncrement(i1, 0.5 * (i1 * i1 - h), h)


def coarsen_i1(i1: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` increments along the last axis."""
    i1 = np.asarray(i1, dtype=float)
    if factor == 1:
        return i1.copy()
    if i1.shape[-1] % factor:
        raise ValidationError("number of increments is not a multiple of the coarsening factor")
    out = i1[..., 0::factor] + 0.0
    for r in range(1, factor):
        out += i1[..., r::factor]
    return out


def path_rng(seed: int, path: int) -> np.random.Generator:
    """Independent counter-based stream for path number ``path``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(path,))))


def brownian_increments(seed: int, n_paths: int, n_steps: int, h: float) -> np.ndarray:
    """``(n_paths, n_steps)`` Wiener increments, row ``p`` drawn from ``path_rng(seed, p)``."""
    out = np.empty((n_paths, n_steps))
    sq = math.sqrt(h)
    for p in range(n_paths):
        out[p] = sq * path_rng(seed, p).standard_normal(n_steps)
    return out


# --------------------------------------------------------------------------
# stepping


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 25
    simplified: bool = True
    jacobian_mode: str = "analytic"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValidationError("Newton tol must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if self.jacobian_mode not in ("analytic", "finite_difference"):
            raise ValidationError(f"unknown jacobian_mode {self.jacobian_mode!r}")


@dataclass
class StageStats:
    """Work done in one step (or accumulated over many).

    ``f_evals``/``g_evals`` count stage evaluations ``f(t_j, H_j)`` that
    enter the stage sums, excluding values reused through FSAL.
    ``f_calls``/``g_calls`` count every call including Newton residuals.
    """

    f_evals: int = 0
    g_evals: int = 0
    newton_iters: int = 0
    lu_factorizations: int = 0
    f_calls: int = 0
    g_calls: int = 0
    jac_evals: int = 0

    def __iadd__(self, other):
        for k in self.__dataclass_fields__:
            setattr(self, k, getattr(self, k) + getattr(other, k))
        return self

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _nonzero_columns(*mats):
    out = np.zeros(mats[0].shape[1], dtype=bool)
    for m in mats:
        out |= np.any(m != 0, axis=0)
    return out


class _Stepper:
    """One-step map of a tableau on a batch of paths."""

    def __init__(self, problem: SdaeProblem, tableau: SrkTableau, cfg: NewtonConfig, fsal: bool = False):
        rep = validate_structure(tableau)
        if not rep.ok:
            raise StructureError("tableau must be diagonally implicit in A, B3 and explicit in B1, B2")
        if problem.singular and not rep.sdae_applicable:
            raise StructureError(f"tableau cannot be applied to a singular mass matrix: {rep.sdae_reason}")
        self.p = problem
        self.t = tableau
        self.cfg = cfg
        self.s = tableau.s
        self.need_f = _nonzero_columns(tableau.A)
        self.need_g = _nonzero_columns(tableau.B1, tableau.B2, tableau.B3)
        self.explicit = [(tableau.A[i, i] == 0 and tableau.B3[i, i] == 0) for i in range(self.s)]
        self.fsal = bool(
            fsal and self.explicit[0] and rep.explicit_first_stage
            and tableau.c[0] == 0.0 and tableau.c[-1] == 1.0
        )
        self.M = problem.M
        self.identity_mass = np.array_equal(self.M, np.eye(problem.dim))
        self._Minv = None if (self.identity_mass or problem.singular) else np.linalg.inv(self.M)
        self.alg = list(problem.algebraic)
        self.diff = list(problem.differential)

    # helpers

    def _f(self, t, X, st):
        st.f_calls += 1
        return self.p.f_batch(t, X)

    def _g(self, t, X, st):
        st.g_calls += 1
        G = self.p.g_batch(t, X)
        if self.alg and np.any(G[:, self.alg] != 0):
            raise ValidationError("diffusion does not vanish in the algebraic rows")
        return G

    def _jac(self, which, t, X, st):
        st.jac_evals += 1
        return self.p.jacobian_batch(which, t, X, self.cfg.jacobian_mode)

    def _factor(self, K, stage, st, step):
        st.lu_factorizations += 1
        try:
            Kinv = np.linalg.inv(K)
        except np.linalg.LinAlgError:
            raise SingularIteration(stage + 1, step) from None
        cond = np.linalg.norm(K, 1, axis=(1, 2)) * np.linalg.norm(Kinv, 1, axis=(1, 2))
        if not np.all(np.isfinite(cond)) or np.any(cond > 1e14):
            raise SingularIteration(stage + 1, step)
        return Kinv

    # stage solvers

    def _newton(self, stage, ti, Y, H, rhs, a, b3, h, sq, frozen, factors, st, step):
        """Solve M(H - Y) - h a f - sqrt(h) b3 g - rhs = 0 starting from H."""
        need_g = b3 != 0.0
        it = 0
        while True:
            F = self._f(ti, H, st)
            G = self._g(ti, H, st) if need_g else None
            R = (H - Y) @ self.M.T - h * a * F - rhs
            if need_g:
                R -= sq * b3 * G
            res = float(np.max(np.abs(R))) if R.size else 0.0
            if not np.isfinite(res):
                raise NewtonDiverged(stage + 1, res, step)
            # always take one correction so linear stages are solved to roundoff
            if res <= self.cfg.tol and it > 0:
                return H, F, G, it
            if it >= self.cfg.max_iter:
                raise NewtonDiverged(stage + 1, res, step)
            if self.cfg.simplified:
                key = (a, b3)
                if key not in factors:
                    Jf, Jg = frozen()
                    K = self.M[None] - h * a * Jf
                    if need_g:
                        K = K - sq * b3 * Jg
                    factors[key] = self._factor(K, stage, st, step)
                Kinv = factors[key]
            else:
                K = self.M[None] - h * a * self._jac("f", ti, H, st)
                if need_g:
                    K = K - sq * b3 * self._jac("g", ti, H, st)
                Kinv = self._factor(K, stage, st, step)
            H = H - np.einsum("nij,nj->ni", Kinv, R)
            it += 1

    def _constraint_solve(self, ti, Y, st, step):
        """First explicit stage with singular M: keep M H = M Y, enforce f_alg(t, H) = 0."""
        H = Y.copy()
        it = 0
        Md = self.M[self.diff]
        while True:
            F = self._f(ti, H, st)
            R = np.concatenate([(H - Y) @ Md.T, F[:, self.alg]], axis=1)
            res = float(np.max(np.abs(R)))
            if not np.isfinite(res):
                raise NewtonDiverged(1, res, step)
            if res <= self.cfg.tol:
                return H, F, it
            if it >= self.cfg.max_iter:
                raise NewtonDiverged(1, res, step)
            Jf = self._jac("f", ti, H, st)
            K = np.concatenate([np.broadcast_to(Md, (H.shape[0],) + Md.shape), Jf[:, self.alg]], axis=1)
            H = H - np.einsum("nij,nj->ni", self._factor(K, 0, st, step), R)
            it += 1

    def step(self, tn, Y, i1, i11, h, cache=None, step=None):
        """Advance the batch ``Y`` by one step.  Returns ``(Y_next, stats, cache)``."""
        t = self.t
        st = StageStats()
        sq = math.sqrt(h)
        i1 = np.asarray(i1, dtype=float).reshape(-1, 1)
        i11 = np.asarray(i11, dtype=float).reshape(-1, 1)
        n, d = Y.shape
        Hs, Fs, Gs = [], [], []
        factors = {}
        frozen_jac = {}

        def frozen():
            if not frozen_jac:
                frozen_jac["f"] = self._jac("f", tn, Y, st)
                if np.any(np.diag(t.B3) != 0):
                    frozen_jac["g"] = self._jac("g", tn, Y, st)
            return frozen_jac["f"], frozen_jac.get("g")

        for i in range(self.s):
            ti = tn + t.c[i] * h
            rhs = np.zeros((n, d))
            for j in range(i):
                if t.A[i, j] != 0:
                    rhs += (h * t.A[i, j]) * Fs[j]
                w = t.B1[i, j] * i1 + t.B2[i, j] * i11 / sq + t.B3[i, j] * sq
                if np.any(w != 0):
                    rhs += w * Gs[j]
            F = G = None
            reuse = i == 0 and self.fsal and cache is not None
            if self.explicit[i]:
                if i == 0:
                    if self.p.singular:
                        H, F, it = self._constraint_solve(ti, Y, st, step)
                        st.newton_iters += it
                        reuse = reuse and it == 0
                        if self.need_f[0] and not reuse:
                            st.f_evals += 1
                    else:
                        H = Y
                elif self.identity_mass:
                    H = Y + rhs
                else:
                    H = Y + rhs @ self._Minv.T
            else:
                H0 = Hs[-1] if i > 0 else Y
                H, F, G, it = self._newton(i, ti, Y, H0, rhs, t.A[i, i], t.B3[i, i], h, sq, frozen, factors, st, step)
                st.newton_iters += it
                if self.need_f[i]:
                    st.f_evals += 1
                if G is not None and self.need_g[i]:
                    st.g_evals += 1
            if reuse:
                F = cache.get("F") if F is None else F
                G = cache.get("G") if G is None else G
            if F is None and self.need_f[i]:
                F = self._f(ti, H, st)
                st.f_evals += 1
            if G is None and self.need_g[i]:
                G = self._g(ti, H, st)
                st.g_evals += 1
            Hs.append(H)
            Fs.append(F)
            Gs.append(G)
        new_cache = {"F": Fs[-1], "G": Gs[-1]} if self.fsal else None
        return Hs[-1], st, new_cache


# --------------------------------------------------------------------------
# public API


def srk_step(problem: SdaeProblem, tableau: SrkTableau, y, tn: float, inc: NoiseIncrement,
             cfg: NewtonConfig | None = None):
    """One step from ``y`` at ``tn``.  Returns ``(y_next, StageStats)``."""
    stepper = _Stepper(problem, tableau, cfg or NewtonConfig())
    Y = np.atleast_1d(np.asarray(y, dtype=float))[None, :]
    Yn, st, _ = stepper.step(tn, Y, inc.i1, inc.i11, inc.h)
    return Yn[0].copy(), st


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    stage_stats: list = field(default_factory=list)

    def totals(self) -> dict:
        tot = StageStats()
        for s in self.stage_stats:
            tot += s
        return tot.to_dict()

    def write_csv(self, path):
        d = self.states.shape[1]
        with _open_text(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"x{k + 1}" for k in range(d)])
            for t, x in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x])

    def write_stats(self, path):
        tot = self.totals()
        keys = ("f_evals", "g_evals", "newton_iters", "lu_factorizations")
        with open(path, "w") as fh:
            json.dump({k: tot[k] for k in keys}, fh, indent=2, sort_keys=True)


def simulate_batch(problem: SdaeProblem, tableau: SrkTableau, i1: np.ndarray,
                   cfg: NewtonConfig | None = None, fsal: bool = True, record: bool = False,
                   x0: np.ndarray | None = None):
    """Integrate many paths at once on the uniform grid implied by ``i1``.

    ``i1`` has shape ``(n_paths, n_steps)``.  Returns ``(states, stats)``
    where ``states`` is ``(n_paths, d)`` at ``T`` or ``(n_paths, n_steps+1, d)``
    with ``record=True``; ``stats`` is a list of per-step ``StageStats``.
    """
    i1 = np.atleast_2d(np.asarray(i1, dtype=float))
    n_paths, n_steps = i1.shape
    if n_steps < 1:
        raise ValidationError("n_steps must be at least 1")
    stepper = _Stepper(problem, tableau, cfg or NewtonConfig(), fsal=fsal)
    h = (problem.T - problem.t0) / n_steps
    start = problem.x0 if x0 is None else np.asarray(x0, dtype=float)
    Y = np.broadcast_to(start, (n_paths, problem.dim)).copy()
    out = np.empty((n_paths, n_steps + 1, problem.dim)) if record else None
    if record:
        out[:, 0] = Y
    stats = []
    cache = None
    for n in range(n_steps):
        tn = problem.t0 + n * h
        inc_i1 = i1[:, n]
        inc_i11 = 0.5 * (inc_i1 * inc_i1 - h)
        Y, st, cache = stepper.step(tn, Y, inc_i1, inc_i11, h, cache, step=n)
        stats.append(st)
        if record:
            out[:, n + 1] = Y
    return (out if record else Y), stats


def simulate_path(problem: SdaeProblem, tableau: SrkTableau, n_steps: int, rng,
                  cfg: NewtonConfig | None = None, fsal: bool = True) -> Trajectory:
    """Single path on a uniform grid with ``n_steps`` steps.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    if n_steps < 1:
        raise ValidationError("n_steps must be at least 1")
    if not isinstance(rng, np.random.Generator):
        rng = path_rng(int(rng), 0)
    h = (problem.T - problem.t0) / n_steps
    i1 = np.array([draw_increments(rng, h).i1 for _ in range(n_steps)])
    states, stats = simulate_batch(problem, tableau, i1[None, :], cfg, fsal=fsal, record=True)
    times = problem.t0 + h * np.arange(n_steps + 1)
    return Trajectory(times, states[0], stats)


# --------------------------------------------------------------------------
# test problems and closed-form solutions


def gbm_problem(lam: float = -1.0, mu: float = 0.5, x0: float = 1.0, t0: float = 0.0, T: float = 1.0):
    """Scalar linear test equation ``dX = lam X dt + mu X dW``."""
    return SdaeProblem(
        f=lambda t, x: lam * x,
        g=lambda t, x: mu * x,
        x0=[x0], t0=t0, T=T,
        f_jacobian=lambda t, x: np.full((np.shape(x)[0], 1, 1), lam),
        g_jacobian=lambda t, x: np.full((np.shape(x)[0], 1, 1), mu),
        vectorized=True,
    )


def reduced_sdae_problem(lam: float = -1.0, mu: float = 0.5, c: float = 0.5, x0: float = 1.0,
                         t0: float = 0.0, T: float = 1.0):
    """``M = diag(1, 0)``, ``f = (lam x1 + x2, x2 - c x1)``, ``g = (mu x1, 0)``.

    The constraint forces ``x2 = c x1`` so ``x1`` is a geometric Brownian
    motion with drift ``lam + c``.
    """
    Jf = np.array([[lam, 1.0], [-c, 1.0]])
    Jg = np.array([[mu, 0.0], [0.0, 0.0]])

    def f(t, x):
        return np.stack([lam * x[..., 0] + x[..., 1], x[..., 1] - c * x[..., 0]], axis=-1)

    def g(t, x):
        return np.stack([mu * x[..., 0], np.zeros_like(x[..., 0])], axis=-1)

    return SdaeProblem(
        f=f, g=g, x0=[x0, c * x0], t0=t0, T=T, M=np.diag([1.0, 0.0]),
        f_jacobian=lambda t, x: np.broadcast_to(Jf, (np.shape(x)[0], 2, 2)),
        g_jacobian=lambda t, x: np.broadcast_to(Jg, (np.shape(x)[0], 2, 2)),
        vectorized=True,
    )


def exact_reference(kind: str, params: dict, times, i1_path) -> np.ndarray:
    """Closed-form solution along the Brownian path with increments ``i1_path``.

    ``times`` has one more entry than ``i1_path``.  ``params`` holds
    ``lam``, ``mu``, ``x0`` and, for ``reduced_sdae``, ``c``.
    """
    times = np.asarray(times, dtype=float)
    i1_path = np.asarray(i1_path, dtype=float)
    if i1_path.shape[-1] != times.size - 1:
        raise ValidationError("increments must align with the time grid")
    W = np.concatenate([np.zeros(i1_path.shape[:-1] + (1,)), np.cumsum(i1_path, axis=-1)], axis=-1)
    lam, mu, x0 = params["lam"], params["mu"], params.get("x0", 1.0)
    dt = times - times[0]
    if kind == "gbm":
        return x0 * np.exp((lam - 0.5 * mu * mu) * dt + mu * W)
    if kind == "reduced_sdae":
        c = params["c"]
        x1 = x0 * np.exp((lam + c - 0.5 * mu * mu) * dt + mu * W)
        return np.stack([x1, c * x1], axis=-1)
    raise ValidationError(f"unknown reference kind {kind!r}")
