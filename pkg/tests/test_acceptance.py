"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line with its runtime; the lines are
printed in the pytest terminal summary and when this file is run directly.
"""

import math
import time
from contextlib import contextmanager

import numpy as np

from conftest import ACCEPTANCE_LINES
from stiffsrk import families as F
from stiffsrk.convergence import strong_order_estimate
from stiffsrk.solver import NewtonConfig, gbm_problem, reduced_sdae_problem, simulate_path
from stiffsrk.stability import (
    TestPoint,
    a_stability_probe,
    closed_form_gain,
    ms_gain,
    ms_gain_array,
    region_grid,
    response_polynomial,
)
from stiffsrk.tableau import order_residuals

ORDER_FAMILIES = F.ORDER_HALF + tuple(f"O10_{c}" for c in F.ORDER_ONE)
CLASS_LAMBDA_ONE = {"O10_I", "O10_II", "O10_III", "O10_IV", "O10_V"}


@contextmanager
def criterion(number, title, budget):
    t0 = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        dt = time.perf_counter() - t0
        ACCEPTANCE_LINES.append(f"[FAIL] {number}. {title} ({dt:.1f} s): {exc}")
        print(ACCEPTANCE_LINES[-1])
        raise
    dt = time.perf_counter() - t0
    if dt >= budget:
        ACCEPTANCE_LINES.append(f"[FAIL] {number}. {title}: runtime {dt:.1f} s exceeds {budget} s")
        print(ACCEPTANCE_LINES[-1])
        raise AssertionError(ACCEPTANCE_LINES[-1])
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    ACCEPTANCE_LINES.append(f"[PASS] {number}. {title} ({dt:.1f} s){': ' + extra if extra else ''}")
    print(ACCEPTANCE_LINES[-1])


def test_criterion_1_order_conditions():
    with criterion(1, "order conditions over random admissible draws", 10) as info:
        worst = 0.0
        draws = 0
        for n, fid in enumerate(ORDER_FAMILIES):
            rng = np.random.default_rng(1000 + n)
            order = F.advertised_order(fid)
            for d in range(100):
                params = F.random_admissible_params(fid, rng)
                t = F.build(fid, params, ("upper", "lower")[d % 2])
                rep = order_residuals(t, order)
                worst = max(worst, rep.max_residual)
                assert rep.max_residual <= 1e-12, (fid, params, rep.residuals)
                if order == 1.0:
                    expected = 1.0 if fid in CLASS_LAMBDA_ONE else 0.0
                    assert abs(rep.lam - expected) <= 1e-8, (fid, rep.lam)
                    b2_zero = bool(np.all(t.B2 == 0))
                    assert (abs(rep.lam - 1.0) <= 1e-8) == b2_zero, (fid, rep.lam)
                draws += 1
        info["draws"] = draws
        info["max_residual"] = f"{worst:.1e}"


CLOSED_FORM_CASES = [
    ("EFF_05_diag", "EFF_05", {"a1": a1, "a2": 0.0}) for a1 in (0.0, 1 / 16, 0.3, 1.0)
] + [
    ("EFF_05_general", "EFF_05", {"a1": a1, "a2": a2}) for a1, a2 in ((0.0, 0.5), (0.5, 0.8), (1.0, 0.25))
] + [
    ("EFF_II_diag", "EFF_II", {"a1": a, "a2": a, "a3": 1.0, "b": b}) for a, b in ((0.25, 1.0), (1.0, -2.0))
] + [
    ("EFF_II_expl1", "EFF_II", {"a1": 0.0, "a2": a2, "a3": a3, "b": 1.0}) for a2, a3 in ((0.0, 1.5), (0.7, 1.0))
] + [
    ("EFF_X_expl1", "EFF_X", {"a1": 0.0, "a2": a2, "a3": a3, "a4": a4, "b": b})
    for a2, a3, a4, b in ((0.5, 1.5, -0.5, 1.0), (0.5, 1.5, 0.3, -2.0), (1.0, 2.0, 0.0, 0.5))
]


def test_criterion_2_closed_forms():
    with criterion(2, "moment-based gain equals the five closed forms", 10) as info:
        hh, kk2 = np.meshgrid(np.linspace(-10, 0, 50, endpoint=False), np.linspace(0, 20, 50), indexing="ij")
        rng = np.random.default_rng(2)
        ch = -rng.uniform(0, 10, 100) + 1j * rng.uniform(-5, 5, 100)
        ck = rng.uniform(0, 3, 100) * np.exp(2j * np.pi * rng.uniform(size=100))
        worst = 0.0
        for scheme, fid, params in CLOSED_FORM_CASES:
            t = F.build(fid, params)
            for h, k in ((hh, np.sqrt(kk2)), (ch, ck)):
                g = ms_gain_array(t, h, k)
                c = closed_form_gain(scheme, params, TestPoint(h, k))
                err = np.max(np.abs(g - c) / np.maximum(1.0, np.abs(c)))
                worst = max(worst, float(err))
                assert err <= 1e-10, (scheme, params, err)
        info["schemes"] = len({c[0] for c in CLOSED_FORM_CASES})
        info["max_rel_diff"] = f"{worst:.1e}"


def _probe(fid, params):
    return a_stability_probe(F.build(fid, params))


def test_criterion_3_a_stability_boundaries():
    with criterion(3, "A-stability probes reproduce the parameter boundaries", 60) as info:
        for a1 in (0.0, 1 / 64, 1 / 32, 1 / 16, 1.0):
            rep = _probe("EFF_05", {"a1": a1, "a2": 0.0})
            assert rep.passed, ("EFF_05", a1, rep.counterexample)
        t = F.build("EFF_05", {"a1": -1.0, "a2": 0.0})
        rep = a_stability_probe(t)
        pt, gain = rep.counterexample
        assert -math.sqrt(3) < pt.hhat.real < -1 and pt.hhat.imag == 0 and gain >= 1, rep.counterexample
        assert abs(ms_gain(t, TestPoint(-1.2, math.sqrt(2.4))) - 2.44 / 0.1936) < 1e-10
        info["EFF_05(a1=-1)"] = f"hhat={pt.hhat.real:.4f},gain={gain:.3f}"

        for fid, extra in (("EFF_II", {}), ("EFF_X", {"a4": 0.0})):
            for a, ok in ((0.25, True), (0.2, False), (1 / 256, False)):
                rep = _probe(fid, dict({"a1": a, "a2": a, "a3": 1.0, "b": 1.0}, **extra))
                assert rep.passed == ok, (fid, a, rep.counterexample)
                if not ok:
                    assert rep.counterexample[1] >= 1
            for a2 in (0.0, 0.5, 1.0, 2.0):
                p = {"a1": 0.0, "a2": a2, "a3": 1.5, "b": 1.0}
                if fid == "EFF_X":
                    p["a4"] = -a2
                assert _probe(fid, p).passed, (fid, p)
            p = {"a1": 0.0, "a2": 0.0, "a3": 1.0, "b": 1.0}
            if fid == "EFF_X":
                p["a4"] = 0.0
            assert not _probe(fid, p).passed, (fid, p)
        info["probes"] = 5 + 1 + 2 * (3 + 4 + 1)


def test_criterion_4_exact_region():
    with criterion(4, "EFF_05(a1=0, a2=1/2) stable set equals the exact domain", 60) as info:
        params = {"a1": 0.0, "a2": 0.5}
        t = F.build("EFF_05", params)
        grid = region_grid(t, (-8, 0), (0, 16), 400)
        H, K2 = np.meshgrid(grid.hhat_axis, grid.ksq_axis, indexing="ij")
        rng = np.random.default_rng(4)
        ch = -rng.uniform(0, 10, 20000) + 1j * rng.uniform(-10, 10, 20000)
        ck = rng.uniform(0, 5, 20000) * np.exp(2j * np.pi * rng.uniform(size=20000))
        boundary = 0
        for h, k, g in ((H, np.sqrt(K2), grid.gain), (ch, ck, ms_gain_array(t, ch, ck))):
            margin = 2 * np.real(h) + np.abs(k) ** 2
            # points on the boundary itself carry no stability claim
            on_edge = np.abs(margin) <= 1e-12 * (1 + np.abs(h) + np.abs(k) ** 2)
            boundary += int(on_edge.sum())
            assert np.array_equal((g < 1)[~on_edge], (margin < 0)[~on_edge])
            c = closed_form_gain("EFF_05_general", params, TestPoint(h, k))
            assert np.max(np.abs(g - c) / np.maximum(1, np.abs(c))) <= 1e-12
        info["points"] = grid.gain.size + ch.size
        info["boundary_excluded"] = boundary


def test_criterion_5_strong_convergence():
    with criterion(5, "strong convergence slopes on GBM and the reduced SDAE", 300) as info:
        gbm = gbm_problem(-1.0, 0.5)
        sdae = reduced_sdae_problem(-1.0, 0.5, 0.5)
        P = {"lam": -1.0, "mu": 0.5, "x0": 1.0}
        cases = [
            ("EFF_05", {"a1": 0.0, "a2": 0.0}, (0.4, 0.65)),
            ("EFF_II", {"a1": 1.0, "a2": 1.0, "a3": 1.0, "b": 1.0}, (0.85, 1.15)),
            ("EFF_X", {"a1": 1.0, "a2": 1.0, "a3": 1.0, "a4": 0.0, "b": 1.0}, (0.85, 1.15)),
            ("EFF_II", {"a1": 0.0, "a2": 0.5, "a3": 1.5, "b": 1.0}, (0.85, 1.15)),
            ("EFF_X", {"a1": 0.0, "a2": 0.5, "a3": 1.5, "a4": -0.5, "b": 1.0}, (0.85, 1.15)),
        ]
        cfg = NewtonConfig()
        slopes = []
        for fid, params, (lo, hi) in cases:
            t = F.build(fid, params)
            s = strong_order_estimate(gbm, "gbm", P, t, n_paths=2000, seed=20240501)
            assert lo <= s.slope <= hi, (fid, params, "gbm", s.slope)
            d = strong_order_estimate(sdae, "reduced_sdae", dict(P, c=0.5), t, n_paths=2000, seed=20240501,
                                      cfg=cfg)
            assert lo <= d.slope <= hi, (fid, params, "sdae", d.slope)
            assert d.constraint_residual <= 1e-7
            slopes.append(f"{fid}({'expl1' if params['a1'] == 0 else 'diag'}):{s.slope:.2f}/{d.slope:.2f}")
        info["slopes(gbm/sdae)"] = " ".join(slopes)


def test_criterion_6_cost_accounting():
    with criterion(6, "stage evaluation and factorization counts", 10) as info:
        gbm = gbm_problem()
        tot = simulate_path(gbm, F.build("EFF_05", {"a1": 0.0, "a2": 0.0}), 100, 6).totals()
        assert (tot["f_evals"], tot["g_evals"]) == (100, 100), tot
        tot = simulate_path(gbm, F.build("EFF_II", {"a1": 0.5, "a2": 0.5, "a3": 1.0, "b": 1.0}), 100, 6).totals()
        assert (tot["f_evals"], tot["g_evals"]) == (300, 200), tot
        sdirk = [("EFF_II", {"a1": 1.0, "a2": 1.0, "a3": 1.0, "b": 1.0}),
                 ("EFF_X", {"a1": 1.0, "a2": 1.0, "a3": 1.0, "a4": 0.0, "b": 1.0}),
                 ("O10_I", {}), ("O10_II", {})]
        for prob in (gbm, reduced_sdae_problem()):
            for fid, params in sdirk:
                tot = simulate_path(prob, F.build(fid, params), 100, 6, NewtonConfig(simplified=True)).totals()
                assert tot["lu_factorizations"] == 100, (fid, tot)
        info["sdirk_configs"] = 2 * len(sdirk)


def test_criterion_7_response_structure():
    with criterion(7, "response polynomial degree, vanishing terms, b-invariance", 10) as info:
        rng = np.random.default_rng(7)
        pts = [TestPoint(complex(-rng.uniform(0, 8), rng.uniform(-3, 3)),
                         complex(rng.uniform(-3, 3), rng.uniform(-1, 1))) for _ in range(20)]
        checked = 0
        for fid in F.FAMILY_IDS:
            for d in range(5):
                params = F.FamilySpec.default(fid).params if d == 0 else F.random_admissible_params(fid, rng)
                t = F.build(fid, params)
                if t.s != 3:
                    continue
                for pt in pts:
                    try:
                        p = response_polynomial(t, pt)
                    except ArithmeticError:
                        continue
                    assert p.degree <= 4
                    if np.all(t.B2 == 0):
                        assert abs(p.sigma(3)) <= 1e-14 and abs(p.sigma(4)) <= 1e-14, (fid, params)
                    checked += 1
        for a in (0.25, 1.0):
            for a3 in (1.0, 1.5):
                ref = F.build("EFF_II", {"a1": a, "a2": a, "a3": a3, "b": 1.0})
                for b in (0.5, -0.5, 1.0, -1.0, 2.0, -2.0):
                    t = F.build("EFF_II", {"a1": a, "a2": a, "a3": a3, "b": b})
                    for pt in pts:
                        g0 = ms_gain(ref, pt)
                        assert abs(ms_gain(t, pt) - g0) <= 1e-12 * max(1.0, g0)
        info["polynomials"] = checked


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except Exception:
                failed += 1
    sys.exit(1 if failed else 0)
