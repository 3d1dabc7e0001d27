"""Constructors for the published coefficient families.

Free coefficients are passed by name: ``A21`` is the drift weight in row 2,
column 1 and ``B32_3`` is entry (3, 2) of ``B3``.  The efficient schemes use
the short names ``a1`` ... ``a4`` and ``b``.  Classes with a ``+/-`` choice
take ``sign="upper"`` or ``sign="lower"``; the choice applies to every
affected coefficient at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .errors import (
    ConstraintViolated,
    DiscriminantNegative,
    NoRoot,
    SqrtDomain,
    UnknownParameter,
    ValidationError,
    ZeroDenominator,
)
from .tableau import SrkTableau

ORDER_HALF = ("H05_I", "H05_II")
ORDER_ONE = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI")
EFFICIENT = ("EFF_05", "EFF_II", "EFF_X")
FAMILY_IDS = ORDER_HALF + tuple(f"O10_{c}" for c in ORDER_ONE) + EFFICIENT

FREE_PARAMS = {
    "H05_I": ("A11", "A21", "B11_3"),
    "H05_II": ("A11", "A21", "B21_3"),
    "I": ("A11", "A22", "A33", "B22_3", "B32_3"),
    "II": ("A11", "A22", "A33", "B22_3", "B32_3"),
    "III": ("A21", "A22", "A32", "B11_3"),
    "IV": ("A11", "A22", "A32", "B33_3"),
    "V": ("A11", "A22", "A32", "B32_1", "B32_3", "B33_3"),
    "VI": ("A11", "A22", "A32", "B11_3", "B32_3"),
    "VII": ("A11", "A22", "A32", "A33", "B22_3", "B21_1"),
    "VIII": ("A11", "A21", "A22", "A32", "B22_3", "B32_2", "B11_3"),
    "IX": ("A11", "A22", "A32", "B32_3", "B11_3"),
    "X": ("A11", "A21", "A22", "A33", "B22_3", "B32_2"),
    "XI": ("A21", "A22", "A33", "B33_3"),
    "EFF_05": ("a1", "a2"),
    "EFF_II": ("a1", "a2", "a3", "b"),
    "EFF_X": ("a1", "a2", "a3", "a4", "b"),
}

SIGNED = {"II", "IV", "VI", "VII", "EFF_II"}

# published lambda of each order 1.0 class
CLASS_LAMBDA = {c: (1.0 if c in ("I", "II", "III", "IV", "V") else 0.0) for c in ORDER_ONE}

# Real root of the class V quartic at B32_1 = B33_3 = 1 (see class_v_solve).
_V_DEFAULT_ROOT = 0.1303954347672788

DEFAULT_PARAMS = {
    "H05_I": {"A11": 0.0, "A21": 0.0, "B11_3": 0.0},
    "H05_II": {"A11": 0.0, "A21": 0.0, "B21_3": 0.0},
    "I": {"A11": 1.0, "A22": 1.0, "A33": 1.0, "B22_3": 0.0, "B32_3": 0.5},
    "II": {"A11": 1.0, "A22": 1.0, "A33": 1.0, "B22_3": 0.0, "B32_3": 0.5},
    "III": {"A21": 0.0, "A22": 1.0, "A32": 0.0, "B11_3": 1.0},
    "IV": {"A11": 1.0, "A22": 1.0, "A32": 0.0, "B33_3": 1.0},
    "V": {"A11": 1.0, "A22": 1.0, "A32": 0.0, "B32_1": 1.0, "B32_3": _V_DEFAULT_ROOT, "B33_3": 1.0},
    "VI": {"A11": 0.0, "A22": 0.0, "A32": 0.0, "B11_3": 0.0, "B32_3": 2.0},
    "VII": {"A11": 1.0, "A22": 1.0, "A32": 0.0, "A33": 1.0, "B22_3": 0.0, "B21_1": 0.5},
    "VIII": {"A11": 1.0, "A21": 0.0, "A22": 1.0, "A32": 0.0, "B22_3": 0.0, "B32_2": 1.0, "B11_3": 1.0},
    "IX": {"A11": 1.0, "A22": 1.0, "A32": 0.0, "B32_3": 0.0, "B11_3": 1.0},
    "X": {"A11": 0.0, "A21": 0.0, "A22": 0.0, "A33": 1.0, "B22_3": 0.0, "B32_2": 1.0},
    "XI": {"A21": 0.0, "A22": 1.0, "A33": 1.0, "B33_3": 1.0},
    "EFF_05": {"a1": 1.0, "a2": 0.0},
    "EFF_II": {"a1": 1.0, "a2": 1.0, "a3": 1.0, "b": 1.0},
    "EFF_X": {"a1": 1.0, "a2": 1.0, "a3": 1.0, "a4": 0.0, "b": 1.0},
}

V_QUARTIC_TOL = 1e-9


def _key(family_id: str) -> str:
    return family_id[4:] if family_id.startswith("O10_") else family_id


def _sign(sign) -> float:
    if sign in ("upper", "+", 1, 1.0, None):
        return 1.0
    if sign in ("lower", "-", -1, -1.0):
        return -1.0
    raise ValidationError(f"sign must be 'upper' or 'lower', got {sign!r}")


def _check_params(key: str, params: dict) -> dict:
    allowed = FREE_PARAMS[key]
    extra = set(params) - set(allowed)
    if extra:
        raise UnknownParameter(f"{key} does not take parameters {sorted(extra)}; expects {list(allowed)}")
    missing = [p for p in allowed if p not in params]
    if missing:
        raise ValidationError(f"{key} is missing parameters {missing}")
    return {k: float(params[k]) for k in allowed}


def _nonzero(value, name):
    if value == 0.0:
        raise ZeroDenominator(name)
    return value


def _tableau(A, B1, B2, B3, name):
    def full(rows):
        m = np.zeros((len(rows), len(rows)))
        for i, row in enumerate(rows):
            m[i, : len(row)] = row
        return m

    return SrkTableau(full(A), full(B1), full(B2), full(B3), name=name)


def make_order_half(variant: str, params: dict, sign=None) -> SrkTableau:
    """Two-stage order 0.5 schemes, class ``"I"`` or ``"II"``."""
    key = {"I": "H05_I", "II": "H05_II"}.get(variant, variant)
    if key not in ORDER_HALF:
        raise ValidationError(f"unknown order 0.5 class {variant!r}")
    p = _check_params(key, params)
    A = [[p["A11"]], [p["A21"], 1.0 - p["A21"]]]
    B1 = [[0.0], [1.0, 0.0]]
    B2 = [[0.0], [0.0, 0.0]]
    if key == "H05_I":
        B3 = [[p["B11_3"]], [0.0, 0.0]]
    else:
        B3 = [[0.0], [p["B21_3"], -p["B21_3"]]]
    return _tableau(A, B1, B2, B3, key)


def class_v_quartic(B32_1: float, B33_3: float) -> np.ndarray:
    """Coefficients (highest power first) of the class V constraint in ``B32_3``."""
    p, z = B32_1, B33_3
    return np.array(
        [
            z,
            4 * p * z**2 + z**2 + 1,
            4 * p * z**3 + 4 * p**2 * z**3 + 2 * p**2 * z + 2 * p * z,
            4 * p**2 * z**4 + 4 * p**3 * z**2 - p**2 - p**2 * z**2,
            -4 * p**3 * z**3 - 2 * p**3 * z + p**4 * z + 4 * p**4 * z**3,
        ]
    )


def class_v_constraint(B32_1: float, B32_3: float, B33_3: float) -> float:
    """Left-hand side of the class V constraint, in its original expanded form."""
    p, y, z = B32_1, B32_3, B33_3
    return (
        4 * p**2 * y * z**4
        + 4 * p * y**2 * z**3
        + 4 * p**3 * y * z**2
        + 4 * p**2 * y**2 * z**3
        + 4 * p * y**3 * z**2
        - 4 * p**3 * z**3
        + y**3 * z**2
        - 2 * p**3 * z
        - p**2 * y
        - p**2 * y * z**2
        + y**3
        + 2 * p**2 * y**2 * z
        + 2 * p * y**2 * z
        + p**4 * z
        + y**4 * z
        + 4 * p**4 * z**3
    )


def _quartic_scale(coeffs, x):
    return max(1.0, float(np.polyval(np.abs(coeffs), abs(x))))


def class_v_solve(B32_1: float, B33_3: float, lo: float = -10.0, hi: float = 10.0,
                  tol: float = 1e-12, step: float = 1e-3) -> list:
    """Admissible real roots ``B32_3`` of the class V constraint in ``[lo, hi]``.

    Roots are bracketed by sign changes on a grid of spacing ``step``, refined
    by bisection and polished with Newton steps.  Zero and ``-B32_1*B33_3``
    are excluded.  Raises ``NoRoot`` when nothing admissible is found.
    """
    if B32_1 == 0.0 or B33_3 == 0.0:
        raise ValidationError("B32_1 and B33_3 must be nonzero")
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValidationError("search interval must be finite with lo < hi")
    coeffs = class_v_quartic(B32_1, B33_3)
    dcoeffs = np.polyder(coeffs)
    n = int(math.ceil((hi - lo) / step))
    grid = np.linspace(lo, hi, n + 1)
    vals = np.polyval(coeffs, grid)

    candidates = list(grid[vals == 0.0])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    for i in idx:
        r = bisect(lambda x: np.polyval(coeffs, x), grid[i], grid[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps)
        for _ in range(3):
            d = np.polyval(dcoeffs, r)
            if d == 0.0:
                break
            nr = r - np.polyval(coeffs, r) / d
            if not grid[i] <= nr <= grid[i + 1]:
                break
            r = nr
        candidates.append(float(r))

    excluded = -B32_1 * B33_3
    roots = [
        r for r in candidates
        if abs(r) > 1e-12
        and abs(r - excluded) > 1e-12
        and abs(np.polyval(coeffs, r)) <= tol * _quartic_scale(coeffs, r)
    ]
    if not roots:
        raise NoRoot(f"no admissible root of the class V constraint in [{lo}, {hi}]")
    return sorted(roots)


def _class_i(p, sg):
    B = _nonzero(p["B32_3"], "B32_3")
    A11, A22, A33, B22 = p["A11"], p["A22"], p["A33"], p["B22_3"]
    a21 = (A11 - 4 * A22 * B**2 + 4 * B**2 - 1) / (4 * B**2)
    A = [[A11], [a21, A22], [1 - A33, 0.0, A33]]
    B1 = [[0.0], [1.0, 0.0], [0.5, 0.5, 0.0]]
    B2 = [[0.0], [0.0, 0.0], [0.0, 0.0, 0.0]]
    B3 = [[0.0], [-(1 + 2 * B22 * B) / (2 * B), B22], [-1 / (4 * B), B, -(4 * B**2 - 1) / (4 * B)]]
    return A, B1, B2, B3


def _class_ii(p, sg):
    B = _nonzero(p["B32_3"], "B32_3")
    A11, A22, A33, B22 = p["A11"], p["A22"], p["A33"], p["B22_3"]
    A = [[A11], [A11 - A22, A22], [1 - A33, 0.0, A33]]
    B1 = [[0.0], [sg / (2 * B), 0.0], [1 - sg * B, sg * B, 0.0]]
    B2 = [[0.0], [0.0, 0.0], [0.0, 0.0, 0.0]]
    B3 = [[0.0], [-(1 + 2 * B22 * B) / (2 * B), B22], [-B, B, 0.0]]
    return A, B1, B2, B3


def _class_iii(p, sg):
    Q = _nonzero(p["B11_3"], "B11_3")
    A21, A22, A32 = p["A21"], p["A22"], p["A32"]
    Q2 = Q * Q
    a31 = -A32 * (Q2 - 1) / (2 * Q2)
    a33 = -(A32 * Q2 - 2 * Q2 + A32) / (2 * Q2)
    A = [[1.0], [A21, A22], [a31, A32, a33]]
    B1 = [[0.0], [0.5 * (Q2 + 1) / (1 + 2 * Q2), 0.0], [-Q2 / (Q2 + 1), (1 + 2 * Q2) / (Q2 + 1), 0.0]]
    B2 = [[0.0], [0.0, 0.0], [0.0, 0.0, 0.0]]
    B3 = [[Q], [(Q2 - 1) / (2 * Q), 0.0], [-1 / (2 * Q), 0.0, 1 / (2 * Q)]]
    return A, B1, B2, B3


def _class_iv(p, sg):
    Z = _nonzero(p["B33_3"], "B33_3")
    A11, A22, A32 = p["A11"], p["A22"], p["A32"]
    Z2 = Z * Z
    r = math.sqrt(1 + 2 * Z2)
    a21 = (2 * Z2 - 2 * A22 * Z2 + 2 - A22 - A11) / (1 + 2 * Z2)
    A = [[A11], [a21, A22], [A32 / Z2, A32, (Z2 - Z2 * A32 - A32) / Z2]]
    B1 = [
        [0.0],
        [sg * (1 + Z2) / (Z * r), 0.0],
        [-0.5 * (sg * Z * r - 2 - 2 * Z2) / (1 + Z2), sg * 0.5 * Z * r / (1 + Z2), 0.0],
    ]
    B2 = [[0.0], [0.0, 0.0], [0.0, 0.0, 0.0]]
    B3 = [[-Z], [1 / Z, 0.0], [-0.5 * Z / (1 + Z2), -0.5 * Z * (1 + 2 * Z2) / (1 + Z2), Z]]
    return A, B1, B2, B3


def _class_v(p, sg):
    P = _nonzero(p["B32_1"], "B32_1")
    Y = _nonzero(p["B32_3"], "B32_3")
    Z = _nonzero(p["B33_3"], "B33_3")
    A11, A22, A32 = p["A11"], p["A22"], p["A32"]
    if Y == -P * Z:
        raise ConstraintViolated("class V requires B32_3 != -B32_1*B33_3")
    coeffs = class_v_quartic(P, Z)
    lhs = class_v_constraint(P, Y, Z)
    if abs(lhs) > V_QUARTIC_TOL * _quartic_scale(coeffs, Y):
        raise ConstraintViolated(f"class V constraint residual {abs(lhs):.3e} exceeds tolerance")
    N = P**2 - 2 * P * Z * Y - Y**2
    _nonzero(N, "B32_1^2 - 2 B32_1 B33_3 B32_3 - B32_3^2")
    L = P**2 - 2 * P * Z * Y - 2 * P * Z**2 - P - Y * Z - Y**2
    den = P * (P * Z + Y)
    a21 = (-Z + A11 * Z - A22 * Y + A11 * Y) / Y
    a31 = -L * A32 / N
    a33 = -(-P**2 + 2 * P * Z * Y + 2 * P * A32 * Z**2 + A32 * P + A32 * Z * Y + Y**2) / N
    A = [[A11], [a21, A22], [a31, A32, a33]]
    B1 = [[0.0], [1 / (2 * P), 0.0], [1 - P, P, 0.0]]
    B2 = [[0.0], [0.0, 0.0], [0.0, 0.0, 0.0]]
    B3 = [[0.5 * N / den], [0.5 * L / den, 0.0], [-Y - Z, Y, Z]]
    return A, B1, B2, B3


def class_vi_discriminant(B11_3: float, B32_3: float) -> float:
    Q, Y = B11_3, B32_3
    return (
        Q**4 * Y**2 + 2 * Q**2 * Y**2 + Y**2 + 4 * Q**3 * Y
        - 2 * Q**2 - 4 * Q**4 + 4 * Q * Y - 2
    )


def _class_vi(p, sg):
    Q = p["B11_3"]
    Y = _nonzero(p["B32_3"], "B32_3")
    A11, A22, A32 = p["A11"], p["A22"], p["A32"]
    D = class_vi_discriminant(Q, Y)
    if D < 0:
        raise DiscriminantNegative(f"class VI discriminant D = {D:.6g} < 0")
    sD = sg * math.sqrt(D)
    Q2 = Q * Q
    K = 1.0 / ((Q2 + 1) * Y)
    a21 = -0.5 * K * (
        -A11 * Y * Q2 - A11 * Y + 2 * A11 * Q + A11 * sD
        + 2 * A22 * Y * Q2 + 2 * A22 * Y - 2 * Q - Q2 * Y - Y - sD
    )
    a31 = 0.5 * K * A32 * (-Q2 * Y - Y + 2 * Q + sD)
    a33 = -0.5 * K * (-2 * Q2 * Y - 2 * Y + 2 * Q * A32 + A32 * Q2 * Y + A32 * Y + A32 * sD)
    A = [[A11], [a21, A22], [a31, A32, a33]]
    B1 = [[0.0], [0.5 * K * (Q2 * Y + Y - 2 * Q**3 + sD), 0.0], [1.0, 0.0, 0.0]]
    B2 = [[0.0], [1 / Y, 0.0], [0.0, 0.0, 0.0]]
    B3 = [
        [Q],
        [-0.5 * K * Q * (-Q2 * Y - Y + 2 * Q + sD), 0.0],
        [0.5 / (Q2 + 1) * (-Q2 * Y - Y + 2 * Q + sD), Y, -0.5 / (Q2 + 1) * (2 * Q + Q2 * Y + Y + sD)],
    ]
    return A, B1, B2, B3


def _class_vii(p, sg):
    P = _nonzero(p["B21_1"], "B21_1")
    A11, A22, A32, A33, B22 = p["A11"], p["A22"], p["A32"], p["A33"], p["B22_3"]
    rad = 2 * P - 2 * P**2
    if rad < 0:
        raise SqrtDomain(f"class VII radicand 2*B21_1 - 2*B21_1^2 = {rad:.6g} < 0")
    R = _nonzero(math.sqrt(rad), "sqrt(2*B21_1 - 2*B21_1^2)")
    A = [[A11], [A11 - A11 * P - A22 + P, A22], [1 - A32 - A33, A32, A33]]
    B1 = [[0.0], [P, 0.0], [1.0, 0.0, 0.0]]
    B2 = [[0.0], [sg * R, 0.0], [0.0, 0.0, 0.0]]
    B3 = [[0.0], [-B22, B22], [-sg * (1 - P) / R, sg / R, -sg * P / R]]
    return A, B1, B2, B3


def _class_viii(p, sg):
    G = _nonzero(p["B32_2"], "B32_2")
    Q = _nonzero(p["B11_3"], "B11_3")
    A11, A21, A22, A32, B22 = p["A11"], p["A21"], p["A22"], p["A32"], p["B22_3"]
    GQ = G * Q
    A = [[A11], [A21, A22], [-A32 * (1 + GQ) / GQ, A32, (GQ + A32) / GQ]]
    B1 = [[0.0], [0.0, 0.0], [1 + GQ, -GQ, 0.0]]
    B2 = [[0.0], [0.0, 0.0], [-G, G, 0.0]]
    B3 = [[Q], [(1 + G * (Q - B22)) / G, B22], [0.0, 0.0, 0.0]]
    return A, B1, B2, B3


def _class_ix(p, sg):
    Q = _nonzero(p["B11_3"], "B11_3")
    A11, A22, A32, Y = p["A11"], p["A22"], p["A32"], p["B32_3"]
    Q2 = Q * Q
    A = [[A11], [(Q2 - A22 * Q2 - A11 + 1) / Q2, A22], [A32 / Q2, A32, (Q2 - Q2 * A32 - A32) / Q2]]
    B1 = [
        [0.0],
        [0.0, 0.0],
        [(Q + Q2 * Y + Y) / (Q * (Q2 + 1)), (Q**3 - Q2 * Y - Y) / (Q * (Q2 + 1)), 0.0],
    ]
    B2 = [[0.0], [0.0, 0.0], [Q / (Q2 + 1), -Q / (Q2 + 1), 0.0]]
    B3 = [[Q], [-1 / Q, 0.0], [Y / Q2, Y, -(Q2 + 1) * Y / Q2]]
    return A, B1, B2, B3


def _class_x(p, sg):
    G = _nonzero(p["B32_2"], "B32_2")
    A11, A21, A22, A33, B22 = p["A11"], p["A21"], p["A22"], p["A33"], p["B22_3"]
    A = [[A11], [A21, A22], [1 - A33, 0.0, A33]]
    B1 = [[0.0], [0.0, 0.0], [1.0, 0.0, 0.0]]
    B2 = [[0.0], [0.0, 0.0], [-G, G, 0.0]]
    B3 = [[0.0], [(1 - G * B22) / G, B22], [0.0, 0.0, 0.0]]
    return A, B1, B2, B3


def _class_xi(p, sg):
    Z = _nonzero(p["B33_3"], "B33_3")
    A21, A22, A33 = p["A21"], p["A22"], p["A33"]
    Z2, Z4 = Z * Z, Z**4
    den11 = _nonzero(1 - 2 * Z2, "1 - 2*B33_3^2")
    b32 = -(2 * Z4 + 1) / (2 * Z * (Z2 + 1))
    rad = -2 * Z**3 * b32 - 2 * b32 * Z - 2 * Z4
    if rad < 0:
        raise SqrtDomain(f"class XI radicand {rad:.6g} < 0")
    a11 = (2 * A21 * Z4 + A21 + 2 * A22 * Z4 + A22 - 2 * Z4 - 2 * Z2) / den11
    a32 = -(2 * A33 * Z4 - 2 * Z4 - 1 + A33) / (2 * Z2 * (Z2 + 1))
    A = [[a11], [A21, A22], [1 - a32 - A33, a32, A33]]
    B1 = [[0.0], [0.0, 0.0], [1.0, 0.0, 0.0]]
    B2 = [[0.0], [math.sqrt(rad) / b32, 0.0], [0.0, 0.0, 0.0]]
    B3 = [[-Z], [-(b32 * Z + Z2) / b32, 0.0], [-b32 - Z, b32, Z]]
    return A, B1, B2, B3


_BUILDERS = {
    "I": _class_i, "II": _class_ii, "III": _class_iii, "IV": _class_iv,
    "V": _class_v, "VI": _class_vi, "VII": _class_vii, "VIII": _class_viii,
    "IX": _class_ix, "X": _class_x, "XI": _class_xi,
}


def make_order_one(class_id: str, params: dict, sign=None) -> SrkTableau:
    """Three-stage order 1.0 scheme of class ``"I"`` ... ``"XI"``."""
    key = _key(class_id)
    if key not in _BUILDERS:
        raise ValidationError(f"unknown order 1.0 class {class_id!r}")
    p = _check_params(key, params)
    A, B1, B2, B3 = _BUILDERS[key](p, _sign(sign))
    return _tableau(A, B1, B2, B3, f"O10_{key}")


def make_efficient(scheme: str, params: dict, sign=None) -> SrkTableau:
    """Reduced-cost members of the order 0.5 classes and of classes II and X."""
    if scheme not in EFFICIENT:
        raise ValidationError(f"unknown efficient scheme {scheme!r}")
    p = _check_params(scheme, params)
    if scheme == "EFF_05":
        a1, a2 = p["a1"], p["a2"]
        return _tableau(
            [[a1], [a2, 1 - a2]], [[0.0], [1.0, 0.0]], [[0.0], [0.0, 0.0]], [[0.0], [0.0, 0.0]], scheme
        )
    b = _nonzero(p["b"], "b")
    a1, a2, a3 = p["a1"], p["a2"], p["a3"]
    if scheme == "EFF_II":
        sg = _sign(sign)
        A = [[a1], [a1 - a2, a2], [1 - a3, 0.0, a3]]
        B1 = [[0.0], [b, 0.0], [1 - 1 / (2 * b), 1 / (2 * b), 0.0]]
        B2 = [[0.0], [0.0, 0.0], [0.0, 0.0, 0.0]]
        B3 = [[0.0], [-sg * b, 0.0], [-sg / (2 * b), sg / (2 * b), 0.0]]
    else:
        A = [[a1], [p["a4"], a2], [1 - a3, 0.0, a3]]
        B1 = [[0.0], [0.0, 0.0], [1.0, 0.0, 0.0]]
        B2 = [[0.0], [0.0, 0.0], [-1 / b, 1 / b, 0.0]]
        B3 = [[0.0], [b, 0.0], [0.0, 0.0, 0.0]]
    return _tableau(A, B1, B2, B3, scheme)


def advertised_order(family_id: str) -> float:
    key = _key(family_id)
    return 0.5 if key in ORDER_HALF or key == "EFF_05" else 1.0


@dataclass(frozen=True)
class FamilySpec:
    family_id: str
    params: dict = field(default_factory=dict)
    sign: str = "upper"

    def __post_init__(self):
        if self.family_id not in FAMILY_IDS:
            raise ValidationError(f"unknown family {self.family_id!r}; expected one of {list(FAMILY_IDS)}")
        _sign(self.sign)

    @classmethod
    def default(cls, family_id: str, sign: str = "upper") -> "FamilySpec":
        return cls(family_id, dict(DEFAULT_PARAMS[_key(family_id)]), sign)

    def build(self) -> SrkTableau:
        key = _key(self.family_id)
        if key in ORDER_HALF:
            return make_order_half(key, self.params, self.sign)
        if key in EFFICIENT:
            return make_efficient(key, self.params, self.sign)
        return make_order_one(key, self.params, self.sign)

    def to_dict(self) -> dict:
        return {"family": self.family_id, "params": dict(self.params), "sign": self.sign}

    @classmethod
    def from_dict(cls, data: dict) -> "FamilySpec":
        if "family" not in data:
            raise ValidationError("family spec needs a 'family' key")
        return cls(data["family"], dict(data.get("params", {})), data.get("sign", "upper"))

    @classmethod
    def from_json(cls, text: str) -> "FamilySpec":
        return cls.from_dict(json.loads(text))


def build(family_id: str, params: dict | None = None, sign: str = "upper") -> SrkTableau:
    """Shortcut: ``build("O10_X", {...})``; missing params use the defaults."""
    merged = dict(DEFAULT_PARAMS[_key(family_id)])
    merged.update(params or {})
    return FamilySpec(family_id, merged, sign).build()


def _denominators(key: str, p: dict) -> list:
    g = p.get
    if key in ("I", "II"):
        return [g("B32_3")]
    if key in ("III", "IX"):
        return [g("B11_3")]
    if key == "IV":
        return [g("B33_3")]
    if key == "V":
        P, Y, Z = g("B32_1"), g("B32_3"), g("B33_3")
        return [P, Y, Z, P * Z + Y, P**2 - 2 * P * Z * Y - Y**2]
    if key == "VI":
        return [g("B32_3")]
    if key == "VII":
        P = g("B21_1")
        return [P, math.sqrt(max(2 * P - 2 * P * P, 0.0))]
    if key == "VIII":
        return [g("B32_2"), g("B11_3")]
    if key == "X":
        return [g("B32_2")]
    if key == "XI":
        return [g("B33_3"), 1 - 2 * g("B33_3") ** 2]
    if key in ("EFF_II", "EFF_X"):
        return [g("b")]
    return []


def random_admissible_params(family_id: str, rng, low: float = -2.0, high: float = 2.0,
                             min_denominator: float = 0.5, max_tries: int = 10000) -> dict:
    """Draw free parameters uniformly from ``[low, high]`` until the class is admissible.

    A draw is rejected when a constructor constraint fails or when any
    denominator of the class formulas is smaller than ``min_denominator`` in
    magnitude, which keeps the tableau entries well conditioned.  For class V
    ``B32_3`` is taken among the admissible roots of its constraint.
    """
    from .errors import SrkError

    key = _key(family_id)
    for _ in range(max_tries):
        p = {name: float(rng.uniform(low, high)) for name in FREE_PARAMS[key]}
        if key == "V":
            try:
                roots = class_v_solve(p["B32_1"], p["B33_3"], low * 5, high * 5)
            except SrkError:
                continue
            p["B32_3"] = float(roots[rng.integers(len(roots))])
        if key == "VI" and class_vi_discriminant(p["B11_3"], p["B32_3"]) < 0:
            continue
        if any(abs(d) < min_denominator for d in _denominators(key, p)):
            continue
        return p
    raise RuntimeError(f"no admissible draw for {family_id} after {max_tries} tries")
