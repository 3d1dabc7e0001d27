"""Mean-square stability of SRK methods for ``dX = lam X dt + mu X dW``.

One step of a method applied to the test equation multiplies the state by
a polynomial in the standard normal ``xi`` whose coefficients depend on
``hhat = lam h`` and ``k = mu sqrt(h)``.  The mean-square gain is the
expectation of its squared modulus, computed exactly from Gaussian moments.
"""

from __future__ import annotations

import contextlib
import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import BadRange, ParameterRegime, StageSingular, StructureError, ValidationError
from .tableau import SrkTableau, validate_structure

TRUNCATE_REL = 1e-15
SINGULAR_TOL = 1e-13


@contextlib.contextmanager
def _open_text(target):
    """Yield ``target`` if it is writable, else open it as a path."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="") as fh:
            yield fh


@dataclass(frozen=True)
class TestPoint:
    hhat: complex
    k: complex

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if not (np.all(np.isfinite(self.hhat)) and np.all(np.isfinite(self.k))):
            raise ValidationError("test point must be finite")

    @classmethod
    def from_lambda_mu(cls, lam, mu, h) -> "TestPoint":
        return cls(complex(lam) * h, complex(mu) * math.sqrt(h))


def sde_ms_stable(lam, mu) -> bool:
    """Whether the exact solution is mean-square stable: ``2 Re(lam) + |mu|^2 < 0``."""
    return bool(2.0 * complex(lam).real + abs(complex(mu)) ** 2 < 0.0)


@dataclass(frozen=True)
class XiPolynomial:
    """``c[0] + c[1] xi + ... + c[D] xi^D``; ``c[0]`` is Gamma, ``c[j]`` is Sigma_j."""

    coeffs: tuple

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def gamma(self) -> complex:
        return self.coeffs[0]

    def sigma(self, j: int) -> complex:
        return self.coeffs[j] if j < len(self.coeffs) else 0j

    def __call__(self, xi):
        return np.polynomial.polynomial.polyval(xi, np.asarray(self.coeffs))


# --------------------------------------------------------------------------
# Gaussian moments


def gaussian_moment(n: int) -> float:
    """``E[xi^n]`` for standard normal ``xi``: 0 for odd n, ``(n-1)!!`` for even."""
    if n < 0:
        raise ValidationError("moment order must be nonnegative")
    if n % 2:
        return 0.0
    return float(math.prod(range(n - 1, 0, -2)))


def _moment_matrix(n: int) -> np.ndarray:
    return np.array([[gaussian_moment(i + j) for j in range(n)] for i in range(n)])


def expected_square_modulus(coeffs) -> np.ndarray:
    """``E|p(xi)|^2`` for coefficient arrays of shape ``(..., D+1)``."""
    C = np.asarray(coeffs, dtype=complex)
    Mm = _moment_matrix(C.shape[-1])
    return np.einsum("...i,ij,...j->...", C, Mm, C.conj()).real


# --------------------------------------------------------------------------
# response polynomial


def _check_tableau(t: SrkTableau):
    if not validate_structure(t).ok:
        raise StructureError("tableau must be diagonally implicit in A, B3 and explicit in B1, B2")


def response_coefficients(t: SrkTableau, hhat, k, singular="raise"):
    """Vectorized stage forward substitution.

    Returns coefficient arrays of shape ``broadcast(hhat, k).shape + (2s-1,)``
    and a boolean mask of points where some stage denominator vanishes.
    With ``singular="raise"`` such points raise ``StageSingular``; with
    ``"mask"`` their coefficients are NaN.
    """
    _check_tableau(t)
    hhat, k = np.broadcast_arrays(np.asarray(hhat, dtype=complex), np.asarray(k, dtype=complex))
    shape = hhat.shape
    s = t.s
    n = 2 * s - 1
    A, B1, B2, B3 = t.A, t.B1, t.B2, t.B3
    bad = np.zeros(shape, dtype=bool)
    H = []
    for i in range(s):
        P = np.zeros(shape + (n,), dtype=complex)
        P[..., 0] = 1.0
        for j in range(i):
            q0 = hhat * A[i, j] + k * (B3[i, j] - 0.5 * B2[i, j])
            q1 = k * B1[i, j]
            q2 = 0.5 * k * B2[i, j]
            Hj = H[j]
            P += q0[..., None] * Hj
            P[..., 1:] += q1[..., None] * Hj[..., :-1]
            P[..., 2:] += q2[..., None] * Hj[..., :-2]
        den = 1.0 - hhat * A[i, i] - k * B3[i, i]
        scale = 1.0 + np.abs(hhat * A[i, i]) + np.abs(k * B3[i, i])
        zero = np.abs(den) <= SINGULAR_TOL * scale
        if np.any(zero):
            if singular == "raise":
                raise StageSingular(i + 1)
            bad |= zero
            den = np.where(zero, np.nan, den)
        with np.errstate(invalid="ignore"):
            H.append(P / den[..., None])
    return H[-1], bad


def response_polynomial(t: SrkTableau, pt: TestPoint) -> XiPolynomial:
    coeffs, _ = response_coefficients(t, pt.hhat, pt.k)
    c = coeffs.astype(complex)
    mags = np.abs(c)
    top = mags.max()
    if top > 0:
        c[mags < TRUNCATE_REL * top] = 0.0
    nz = np.nonzero(c)[0]
    deg = int(nz[-1]) if nz.size else 0
    return XiPolynomial(tuple(complex(v) for v in c[: deg + 1]))


def ms_gain(t: SrkTableau, pt: TestPoint) -> float:
    """Mean-square one-step gain ``E|R(hhat, k, xi)|^2``."""
    coeffs, _ = response_coefficients(t, pt.hhat, pt.k)
    return float(expected_square_modulus(coeffs))


def ms_gain_array(t: SrkTableau, hhat, k) -> np.ndarray:
    """Gain on arrays of points; stage singularities give ``inf``."""
    coeffs, bad = response_coefficients(t, hhat, k, singular="mask")
    g = expected_square_modulus(np.where(bad[..., None], 0.0, coeffs))
    return np.where(bad, np.inf, g)


def deterministic_stability(t: SrkTableau, hhat) -> complex:
    """``e_s^T (I - hhat A)^{-1} e``."""
    s = t.s
    return complex(np.linalg.solve(np.eye(s) - complex(hhat) * t.A, np.ones(s))[-1])


# --------------------------------------------------------------------------
# closed forms

CLOSED_FORMS = ("EFF_05_diag", "EFF_05_general", "EFF_II_diag", "EFF_II_expl1", "EFF_X_expl1")

_REQUIRED = {
    "EFF_05_diag": ("a1",),
    "EFF_05_general": ("a1", "a2"),
    "EFF_II_diag": ("a1",),
    "EFF_II_expl1": ("a2", "a3"),
    "EFF_X_expl1": ("a2", "a3", "a4", "b"),
}


def _regime(scheme: str, params: dict) -> dict:
    if scheme not in _REQUIRED:
        raise ValidationError(f"unknown closed-form scheme {scheme!r}; choose from {CLOSED_FORMS}")
    p = {k: float(v) for k, v in params.items()}
    if scheme == "EFF_II_diag" and "a" in p:
        p.setdefault("a1", p["a"])
        p.setdefault("a2", p["a"])
    missing = [k for k in _REQUIRED[scheme] if k not in p]
    if missing:
        raise ParameterRegime(f"{scheme} needs parameters {missing}")
    if scheme == "EFF_05_diag" and p.get("a2", 0.0) != 0.0:
        raise ParameterRegime("EFF_05_diag requires a2 = 0")
    if scheme == "EFF_II_diag":
        if p.get("a2", p["a1"]) != p["a1"] or p.get("a3", 1.0) != 1.0:
            raise ParameterRegime("EFF_II_diag requires a1 = a2 and a3 = 1")
    if scheme in ("EFF_II_expl1", "EFF_X_expl1") and p.get("a1", 0.0) != 0.0:
        raise ParameterRegime(f"{scheme} requires a1 = 0")
    if scheme == "EFF_X_expl1" and p["b"] == 0.0:
        raise ParameterRegime("EFF_X_expl1 requires b != 0")
    return p


def closed_form_gain(scheme: str, params: dict, pt: TestPoint):
    """Closed-form mean-square gain of the efficient schemes in special regimes.

    ``pt.hhat`` and ``pt.k`` may be numpy arrays.
    """
    p = _regime(scheme, params)
    h = np.asarray(pt.hhat, dtype=complex)
    k = np.asarray(pt.k, dtype=complex)
    k2 = np.abs(k) ** 2
    if scheme == "EFF_05_diag":
        a1 = p["a1"]
        return (np.abs(1 - a1 * h) ** 2 + k2) / (np.abs(1 - h) ** 2 * np.abs(1 - a1 * h) ** 2)
    if scheme == "EFF_05_general":
        a1, a2 = p["a1"], p["a2"]
        num = np.abs(1 + (a2 - a1) * h) ** 2 + k2
        return num / (np.abs(1 - (1 - a2) * h) ** 2 * np.abs(1 - a1 * h) ** 2)
    if scheme == "EFF_II_diag":
        q = np.abs(p["a1"] * h - 1) ** 2
        return (q * q + 0.5 * k2 * k2 + k2 * q) / (q * q * np.abs(h - 1) ** 2)
    a2, a3 = p["a2"], p["a3"]
    q2 = np.abs(a2 * h - 1) ** 2
    den = q2 * np.abs(a3 * h - 1) ** 2
    if scheme == "EFF_II_expl1":
        inner = k2 + np.abs(h) ** 2 * (1 - a3) ** 2 + 2 * h.real * (1 - a3) + 1
        return (0.5 * k2 * k2 + q2 * inner) / den
    a4, b = p["a4"], p["b"]
    inner = k2 + np.abs(h) ** 2 * (1 - 2 * a3) + 2 * h.real + np.abs(1 - a3 * h) ** 2
    extra = (
        k2 * (a2 + a4) * 2 * (k.conj() * h).real / (2 * b)
        + k2 * np.abs(h) ** 2 * (a2 + a4) ** 2 / (2 * b * b)
    )
    return (0.5 * k2 * k2 + q2 * inner + extra) / den


# --------------------------------------------------------------------------
# stability regions


@dataclass
class StabilityGrid:
    hhat_axis: np.ndarray
    ksq_axis: np.ndarray
    gain: np.ndarray
    stable_mask: np.ndarray

    def write_csv(self, path):
        with _open_text(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["hhat", "ksq", "gain", "stable"])
            for i, hh in enumerate(self.hhat_axis):
                for j, kk in enumerate(self.ksq_axis):
                    w.writerow([repr(float(hh)), repr(float(kk)), repr(float(self.gain[i, j])),
                                int(self.stable_mask[i, j])])


def _check_range(name, r, nonneg=False):
    try:
        lo, hi = (float(v) for v in r)
    except (TypeError, ValueError):
        raise BadRange(f"{name} must be a pair of numbers") from None
    if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
        raise BadRange(f"{name} must satisfy min < max, got [{lo}, {hi}]")
    if nonneg and lo < 0:
        raise BadRange(f"{name} must lie in [0, inf)")
    return lo, hi


def region_grid(t: SrkTableau, hhat_range=(-8.0, 0.0), ksq_range=(0.0, 16.0), resolution=400) -> StabilityGrid:
    """Mean-square gain on a real ``hhat`` by ``k^2`` grid (``k = sqrt(k^2)``)."""
    h0, h1 = _check_range("hhat range", hhat_range)
    k0, k1 = _check_range("k^2 range", ksq_range, nonneg=True)
    nh, nk = (resolution, resolution) if np.isscalar(resolution) else resolution
    if int(nh) < 2 or int(nk) < 2:
        raise BadRange("resolution must be at least 2 per axis")
    ha = np.linspace(h0, h1, int(nh))
    ka = np.linspace(k0, k1, int(nk))
    gain = ms_gain_array(t, ha[:, None], np.sqrt(ka)[None, :])
    return StabilityGrid(ha, ka, gain, gain < 1.0)


# --------------------------------------------------------------------------
# A-stability probe


@dataclass
class ProbeReport:
    verdict: str
    max_gain: float
    worst_point: TestPoint
    samples: int
    counterexample: tuple | None
    real: dict
    complex: dict

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        def pt(p):
            return {"hhat_re": p.hhat.real, "hhat_im": p.hhat.imag, "k_re": p.k.real, "k_im": p.k.imag}

        out = {
            "verdict": self.verdict,
            "max_gain": self.max_gain,
            "worst_point": pt(self.worst_point),
            "samples": self.samples,
            "counterexample": None,
            "real": self.real,
            "complex": self.complex,
        }
        if self.counterexample is not None:
            p, g = self.counterexample
            out["counterexample"] = dict(pt(p), gain=g)
        return out


def _first_failure(gain, hh, kk):
    idx = np.flatnonzero(gain.ravel() >= 1.0)
    if idx.size == 0:
        return None
    i = idx[0]
    return TestPoint(complex(hh.ravel()[i]), complex(kk.ravel()[i])), float(gain.ravel()[i])


def _summary(gain, hh, kk):
    i = int(np.argmax(gain))
    return {
        "samples": int(gain.size),
        "max_gain": float(gain.ravel()[i]),
        "worst_point": {"hhat_re": float(hh.ravel()[i].real), "hhat_im": float(hh.ravel()[i].imag),
                        "k_re": float(kk.ravel()[i].real), "k_im": float(kk.ravel()[i].imag)},
        "failures": int(np.count_nonzero(gain >= 1.0)),
    }


def a_stability_probe(t: SrkTableau, ray_density: int = 256, radial_density: int = 512,
                      complex_samples: int = 128, margin: float = 1e-3,
                      radius_range=(1e-4, 1e3), seed: int = 0) -> ProbeReport:
    """Search for points of the exact solution's stability domain where the method is not stable.

    Real samples lie on rays ``k^2 = theta * (-2 hhat)``, ``theta`` in
    ``[0.01, 1 - margin]``, with both signs of ``k``.  Complex samples draw
    ``hhat`` in the open left half plane and a random phase for ``k``.
    Points are scanned from large to small ``|hhat|``, and for each radius
    from ``theta`` near 1 down.  A pass only certifies the sampled points.
    """
    if min(ray_density, radial_density, complex_samples) < 16:
        raise BadRange("probe densities must be at least 16")
    if not 0.0 < margin < 0.99:
        raise BadRange("margin must lie in (0, 0.99)")
    r0, r1 = _check_range("radius range", radius_range)
    if r0 <= 0:
        raise BadRange("radii must be positive")

    radii = np.logspace(math.log10(r1), math.log10(r0), radial_density)
    theta = np.linspace(1.0 - margin, 0.01, ray_density)
    R, TH = np.meshgrid(radii, theta, indexing="ij")
    hh_r = np.stack([-R, -R], axis=-1).astype(complex)
    kmag = np.sqrt(TH * 2.0 * R)
    kk_r = np.stack([kmag, -kmag], axis=-1).astype(complex)
    g_r = ms_gain_array(t, hh_r, kk_r)

    rng = np.random.default_rng(seed)
    phi = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, (radial_density, complex_samples))
    th_c = 1.0 - margin - (1.0 - margin - 0.01) * rng.random((radial_density, complex_samples))
    kphase = rng.uniform(0.0, 2.0 * math.pi, (radial_density, complex_samples))
    # open left half plane: hhat = -r exp(i phi), |phi| < pi/2
    hh_c = -radii[:, None] * np.exp(1j * phi)
    kk_c = np.sqrt(th_c * (-2.0 * hh_c.real)) * np.exp(1j * kphase)
    g_c = ms_gain_array(t, hh_c, kk_c)

    real_sum = _summary(g_r, hh_r, kk_r)
    cplx_sum = _summary(g_c, hh_c, kk_c)
    cex = _first_failure(g_r, hh_r, kk_r) or _first_failure(g_c, hh_c, kk_c)
    worst = real_sum if real_sum["max_gain"] >= cplx_sum["max_gain"] else cplx_sum
    wp = worst["worst_point"]
    return ProbeReport(
        verdict="pass" if cex is None else "counterexample",
        max_gain=worst["max_gain"],
        worst_point=TestPoint(complex(wp["hhat_re"], wp["hhat_im"]), complex(wp["k_re"], wp["k_im"])),
        samples=real_sum["samples"] + cplx_sum["samples"],
        counterexample=cex,
        real=real_sum,
        complex=cplx_sum,
    )
