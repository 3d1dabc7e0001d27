"""Extended Butcher tableaus for stiffly accurate stochastic Runge-Kutta methods.

A tableau holds the drift weights ``A`` and the three diffusion weight
matrices ``B1``, ``B2``, ``B3`` that multiply ``I_(1)``, ``I_(1,1)/sqrt(h)``
and ``sqrt(h)`` respectively.  The step output is the last stage, so the
quadrature weights are simply the last rows of the matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, StructureError, ValidationError

DEFAULT_TOL = 1e-12
C_TOL = 1e-12


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SrkTableau:
    """Coefficients of an ``s``-stage stiffly accurate SRK method.

    ``c`` defaults to the row sums of ``A``.  Arrays are stored read-only.
    Equality and hashing compare fields exactly.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    B3: np.ndarray
    c: Optional[np.ndarray] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        mats = {}
        for key in ("A", "B1", "B2", "B3"):
            m = np.array(getattr(self, key), dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DimensionMismatch(f"{key} must be square, got shape {m.shape}")
            mats[key] = m
        s = mats["A"].shape[0]
        for key, m in mats.items():
            if m.shape != (s, s):
                raise DimensionMismatch(f"{key} has shape {m.shape}, expected {(s, s)}")
            if not np.all(np.isfinite(m)):
                raise ValidationError(f"{key} has non-finite entries")
            object.__setattr__(self, key, _freeze(m))
        if self.c is None:
            c = mats["A"].sum(axis=1)
        else:
            c = np.array(self.c, dtype=float).reshape(-1)
            if c.shape != (s,):
                raise DimensionMismatch(f"c has length {c.size}, expected {s}")
        object.__setattr__(self, "c", _freeze(c))

    @property
    def s(self) -> int:
        return self.A.shape[0]

    @property
    def e(self) -> np.ndarray:
        return np.ones(self.s)

    @property
    def alpha(self) -> np.ndarray:
        return self.A[-1]

    def beta(self, k: int) -> np.ndarray:
        return (self.B1, self.B2, self.B3)[k - 1][-1]

    def __eq__(self, other):
        if not isinstance(other, SrkTableau):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, key), getattr(other, key))
            for key in ("A", "B1", "B2", "B3", "c")
        )

    def __hash__(self):
        return hash(tuple(getattr(self, key).tobytes() for key in ("A", "B1", "B2", "B3", "c")))

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<SrkTableau{label} s={self.s}>"

    # serialization

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "A": self.A.tolist(),
            "B1": self.B1.tolist(),
            "B2": self.B2.tolist(),
            "B3": self.B3.tolist(),
            "c": self.c.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "SrkTableau":
        missing = {"A", "B1", "B2", "B3"} - set(data)
        if missing:
            raise ValidationError(f"tableau is missing keys: {sorted(missing)}")
        c = data.get("c")
        t = cls(data["A"], data["B1"], data["B2"], data["B3"])
        if "s" in data and int(data["s"]) != t.s:
            raise DimensionMismatch(f"s={data['s']} but matrices have {t.s} stages")
        if c is not None:
            c = np.array(c, dtype=float).reshape(-1)
            if c.shape != (t.s,):
                raise DimensionMismatch(f"c has length {c.size}, expected {t.s}")
            if not np.all(np.isfinite(c)):
                raise ValidationError("c has non-finite entries")
            if np.max(np.abs(c - t.c)) > C_TOL:
                raise ValidationError("c does not equal the row sums of A")
        return t

    @classmethod
    def from_json(cls, text: str) -> "SrkTableau":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class StructureReport:
    diagonally_implicit: bool
    noise_explicit: bool
    sdae_applicable: bool
    sdae_reason: str
    explicit_first_stage: bool
    singly_diagonal: bool

    @property
    def ok(self) -> bool:
        return self.diagonally_implicit and self.noise_explicit


@dataclass(frozen=True)
class OrderReport:
    order_tested: float
    residuals: dict
    lam: Optional[float] = None

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    def to_dict(self) -> dict:
        return {
            "order_tested": self.order_tested,
            "residuals": dict(self.residuals),
            "lambda": self.lam,
            "max_residual": self.max_residual,
        }


def _nonsingular(m: np.ndarray, tol: float) -> bool:
    if m.size == 0:
        return True
    scale = np.max(np.abs(m))
    if scale == 0.0:
        return False
    return abs(np.linalg.det(m)) > tol * scale ** m.shape[0]


def validate_structure(t: SrkTableau, tol: float = DEFAULT_TOL) -> StructureReport:
    """Inspect the triangular structure of ``t`` and whether it applies to SDAEs.

    A method applies to systems with a singular mass matrix if ``A`` is
    nonsingular, or if its first stage is explicit (first rows of all four
    matrices vanish) and the trailing block ``A[1:, 1:]`` is nonsingular.
    Nonsingularity is decided by ``|det| > tol * max|entry|**n``.
    """
    diag_impl = bool(np.all(np.triu(t.A, 1) == 0) and np.all(np.triu(t.B3, 1) == 0))
    noise_expl = bool(np.all(np.triu(t.B1) == 0) and np.all(np.triu(t.B2) == 0))
    first_zero = all(np.all(m[0] == 0) for m in (t.A, t.B1, t.B2, t.B3))
    diag = np.diag(t.A)
    singly = bool(np.all(diag == diag[0]))

    if _nonsingular(t.A, tol):
        applicable, reason = True, "A is nonsingular"
    elif first_zero and t.s > 1 and _nonsingular(t.A[1:, 1:], tol):
        applicable, reason = True, "explicit first stage and A[2:,2:] nonsingular"
    elif first_zero:
        applicable, reason = False, "explicit first stage but A[2:,2:] is singular"
    else:
        applicable, reason = False, "A is singular and the first stage is not explicit"
    return StructureReport(diag_impl, noise_expl, applicable, reason, first_zero, singly)


def _require_structure(t: SrkTableau):
    rep = validate_structure(t)
    if not rep.ok:
        raise StructureError(
            "tableau must be diagonally implicit in A, B3 and explicit in B1, B2"
        )


def order_half_residuals(t: SrkTableau) -> dict:
    e = t.e
    a, b1, b2, b3 = t.alpha, t.beta(1), t.beta(2), t.beta(3)
    B1e, B2e, B3e = t.B1 @ e, t.B2 @ e, t.B3 @ e
    return {
        "1": abs(a @ e - 1.0),
        "2": abs(b1 @ e - 1.0),
        "3": abs(b2 @ e),
        "4": abs(b3 @ e),
        "5": abs(b1 @ B1e + 0.5 * (b2 @ B2e) + b3 @ B3e),
    }


def order_one_residuals(t: SrkTableau) -> tuple[dict, float]:
    """Residuals of the 14 strong order 1.0 conditions plus ``c = A e``.

    The free parameter ``lam`` in conditions 5-7 is taken from condition 5,
    so condition 5 is satisfied identically and 6, 7 are tested at it.
    """
    e = t.e
    A, B1, B2, B3 = t.A, t.B1, t.B2, t.B3
    a, b1, b2, b3 = t.alpha, t.beta(1), t.beta(2), t.beta(3)
    B1e, B2e, B3e = B1 @ e, B2 @ e, B3 @ e
    lam = 2.0 * (b1 @ B1e)

    c13 = (
        2 * b1 @ (B1e * B2e)
        + 2 * b1 @ (B1e * B3e)
        + b2 @ (B1e**2)
        + b2 @ (B2e**2)
        + b2 @ (B2e * B3e)
        + b3 @ (B1e**2)
        + 0.5 * b3 @ (B2e**2)
        + b3 @ (B3e**2)
    )
    c14 = (
        b1 @ (B1 @ B2e)
        + b1 @ (B2 @ B1e)
        + b1 @ (B1 @ B3e)
        + b1 @ (B3 @ B1e)
        + b2 @ (B1 @ B1e)
        + b2 @ (B2 @ B2e)
        + 0.5 * b2 @ (B2 @ B3e)
        + 0.5 * b2 @ (B3 @ B2e)
        + b3 @ (B1 @ B1e)
        + 0.5 * b3 @ (B2 @ B2e)
        + b3 @ (B3 @ B3e)
    )
    res = {
        "1": abs(a @ e - 1.0),
        "2": abs(b1 @ e - 1.0),
        "3": abs(b2 @ e),
        "4": abs(b3 @ e),
        "5": abs(b1 @ B1e - lam / 2),
        "6": abs(b3 @ B3e + lam / 2),
        "7": abs(b2 @ B3e + b3 @ B2e - (1.0 - lam)),
        "8": abs(a @ B3e),
        "9": abs(b1 @ B3e + b3 @ B1e),
        "10": abs(b2 @ B2e),
        "11": abs(b1 @ B2e + b2 @ B1e),
        "12": abs(b3 @ (A @ e)),
        "13": abs(c13),
        "14": abs(c14),
        "c=Ae": float(np.max(np.abs(t.c - A @ e))),
    }
    return {k: float(v) for k, v in res.items()}, float(lam)


def order_residuals(t: SrkTableau, order: float) -> OrderReport:
    _require_structure(t)
    if order == 0.5:
        res = {k: float(v) for k, v in order_half_residuals(t).items()}
        return OrderReport(0.5, res)
    if order == 1.0:
        res, lam = order_one_residuals(t)
        return OrderReport(1.0, res, lam)
    raise ValidationError(f"order must be 0.5 or 1.0, got {order}")


def effective_order(t: SrkTableau, tol: float = DEFAULT_TOL) -> Optional[float]:
    """Highest strong order (0.5 or 1.0) whose conditions hold within ``tol``.

    Returns ``None`` when not even the order 0.5 conditions hold.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if order_residuals(t, 1.0).max_residual <= tol:
        return 1.0
    if order_residuals(t, 0.5).max_residual <= tol:
        return 0.5
    return None
