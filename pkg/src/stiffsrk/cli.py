"""Command line interface.

Exit status: 0 on success, 1 on a numerical failure or negative finding
(order not met, probe counterexample, Newton divergence), 2 on invalid
input.  Errors are reported as JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import families
from .convergence import DEFAULT_PATHS, strong_order_estimate
from .errors import NumericalError, SrkError, ValidationError
from .solver import NewtonConfig, gbm_problem, reduced_sdae_problem, simulate_path
from .stability import a_stability_probe, region_grid
from .tableau import DEFAULT_TOL, SrkTableau, effective_order, order_residuals

TOL_ENV = "SRK_DEFAULT_TOL"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _load_json(path: str) -> dict:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def _load_tableau(args) -> tuple[SrkTableau, float | None]:
    """Tableau and, for family specs, its advertised order."""
    if args.family:
        spec = families.FamilySpec.from_dict(_load_json(args.family))
        return _build(spec), families.advertised_order(spec.family_id)
    return SrkTableau.from_dict(_load_json(args.tableau)), None


def _build(spec) -> SrkTableau:
    # unspecified free parameters take the documented defaults
    return families.build(spec.family_id, spec.params, spec.sign)


def _default_tol() -> float:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise ValidationError(f"{TOL_ENV} is not a number: {raw!r}") from None
    if not tol > 0:
        raise ValidationError(f"{TOL_ENV} must be positive")
    return tol


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _sibling(out: str, suffix: str) -> Path:
    return Path(out).with_suffix(suffix)


def _problem(args):
    if args.problem == "gbm":
        p = gbm_problem(args.lam, args.mu, x0=args.x0, T=args.T)
        return p, "gbm", {"lam": args.lam, "mu": args.mu, "x0": args.x0}
    p = reduced_sdae_problem(args.lam, args.mu, args.c, x0=args.x0, T=args.T)
    return p, "reduced_sdae", {"lam": args.lam, "mu": args.mu, "x0": args.x0, "c": args.c}


# --------------------------------------------------------------------------
# subcommands


def cmd_verify(args) -> int:
    t, advertised = _load_tableau(args)
    order = args.order if args.order is not None else (advertised or 1.0)
    tol = _default_tol()
    report = order_residuals(t, order)
    eff = effective_order(t, tol)
    out = report.to_dict()
    out["effective_order"] = eff
    out["tol"] = tol
    _emit(json.dumps(out, indent=2), args.out)
    return 0 if eff is not None and eff >= order else 1


def cmd_family(args) -> int:
    if args.family:
        spec = families.FamilySpec.from_dict(_load_json(args.family))
    else:
        if not args.id:
            raise ValidationError("give --family <spec.json> or --id <family>")
        params = {}
        for item in args.param or []:
            key, sep, val = item.partition("=")
            if not sep:
                raise ValidationError(f"--param expects key=value, got {item!r}")
            try:
                params[key] = float(val)
            except ValueError:
                raise ValidationError(f"--param {key}: not a number") from None
        spec = families.FamilySpec(args.id, params, args.sign)
    _emit(_build(spec).to_json(indent=2), args.out)
    return 0


def cmd_simulate(args) -> int:
    t, _ = _load_tableau(args)
    p, _, _ = _problem(args)
    cfg = NewtonConfig(tol=args.newton_tol, simplified=not args.full_newton)
    traj = simulate_path(p, t, args.steps, args.seed, cfg)
    if args.out:
        traj.write_csv(args.out)
        traj.write_stats(_sibling(args.out, ".stats.json"))
    else:
        traj.write_csv(sys.stdout)
    return 0


def cmd_region(args) -> int:
    t, _ = _load_tableau(args)
    grid = region_grid(t, (args.hhat_min, args.hhat_max), (args.ksq_min, args.ksq_max), args.res)
    out = args.out or sys.stdout
    grid.write_csv(out)
    if args.plot:
        if not args.out:
            raise ValidationError("--plot needs --out")
        from .plotting import plot_region

        plot_region(grid, _sibling(args.out, ".png"))
    return 0


def cmd_probe(args) -> int:
    t, _ = _load_tableau(args)
    rep = a_stability_probe(t, args.rays, args.radii, args.complex, args.margin, seed=args.seed)
    _emit(json.dumps(rep.to_dict(), indent=2), args.out)
    return 0 if rep.passed else 1


def cmd_converge(args) -> int:
    t, _ = _load_tableau(args)
    p, kind, params = _problem(args)
    try:
        exps = [int(v) for v in args.exponents.split(",")]
    except ValueError:
        raise ValidationError("--exponents expects comma separated integers") from None
    h_list = np.array([(p.T - p.t0) * 2.0 ** -e for e in sorted(exps)])
    study = strong_order_estimate(p, kind, params, t, h_list, args.paths, args.seed)
    if args.out:
        study.write_csv(args.out)
        study.write_json(_sibling(args.out, ".json"))
        if args.plot:
            from .plotting import plot_convergence

            plot_convergence(study, _sibling(args.out, ".png"))
    else:
        study.write_csv(sys.stdout)
        sys.stdout.write(json.dumps(study.summary()) + "\n")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="stiffsrk", description="Stiffly accurate SRK methods for SDEs and index-1 SDAEs.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def source(p, required=True):
        g = p.add_mutually_exclusive_group(required=required)
        g.add_argument("--tableau", help="tableau JSON file ('-' for stdin)")
        g.add_argument("--family", help="family spec JSON file ('-' for stdin)")

    def order(v):
        if v not in ("0.5", "1.0", "1"):
            raise argparse.ArgumentTypeError("order must be 0.5 or 1.0")
        return float(v)

    def model(p):
        p.add_argument("--problem", choices=("gbm", "reduced_sdae"), default="gbm")
        p.add_argument("--lam", type=float, default=-1.0)
        p.add_argument("--mu", type=float, default=0.5)
        p.add_argument("--c", type=float, default=0.5)
        p.add_argument("--x0", type=float, default=1.0)
        p.add_argument("--T", type=float, default=1.0)

    p = sub.add_parser("verify", help="check order conditions")
    source(p)
    p.add_argument("--order", type=order, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("family", help="emit the tableau of a family member")
    p.add_argument("--family", help="family spec JSON file ('-' for stdin)")
    p.add_argument("--id", choices=families.FAMILY_IDS)
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--sign", choices=("upper", "lower"), default="upper")
    p.add_argument("--out")
    p.set_defaults(func=cmd_family)

    p = sub.add_parser("simulate", help="integrate one path of a test problem")
    source(p)
    model(p)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--newton-tol", type=float, default=1e-10)
    p.add_argument("--full-newton", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("region", help="mean-square stability region on a real grid")
    source(p)
    p.add_argument("--hhat-min", type=float, default=-8.0)
    p.add_argument("--hhat-max", type=float, default=0.0)
    p.add_argument("--ksq-min", type=float, default=0.0)
    p.add_argument("--ksq-max", type=float, default=16.0)
    p.add_argument("--res", type=int, default=400)
    p.add_argument("--plot", action="store_true", help="also write a PNG next to --out")
    p.add_argument("--out")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("probe", help="search for A-stability counterexamples")
    source(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--rays", type=int, default=256)
    p.add_argument("--radii", type=int, default=512)
    p.add_argument("--complex", type=int, default=128)
    p.add_argument("--margin", type=float, default=1e-3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("converge", help="empirical strong order on a test problem")
    source(p)
    model(p)
    p.add_argument("--paths", type=int, default=DEFAULT_PATHS)
    p.add_argument("--exponents", default="4,5,6,7,8,9", help="h = T * 2**-e for each e")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--plot", action="store_true", help="also write a PNG next to --out")
    p.add_argument("--out")
    p.set_defaults(func=cmd_converge)
    return ap


def _fail(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        return _fail("usage", exc, 2)
    except ValidationError as exc:
        return _fail("validation", exc, 2)
    except NumericalError as exc:
        return _fail("numerical", exc, 1)
    except SrkError as exc:
        return _fail("error", exc, 1)
    except (OSError, KeyError, TypeError) as exc:
        return _fail("validation", exc, 2)


if __name__ == "__main__":
    sys.exit(main())
