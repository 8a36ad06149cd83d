"""Command-line front end.

Subcommands: ``list-models``, ``verify``, ``equilibria``, ``simulate``,
``lyapunov``, ``reproduce``.  Exit codes: 0 success, 1 verification produced a
fail verdict, 2 usage/model/IO error, 3 numerical failure.  Identical
invocations (same flags and seeds) produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import equilibrium as eq
from . import io as pio
from . import verify as ver
from ._core import kernel_backend
from .errors import (
    ConvergenceError,
    EvaluationError,
    ExpressionSyntaxError,
    IntegrationError,
    ModelFileError,
)
from .expr import parse_model_file
from .model import ConstantInput, Scenario, builtin, builtin_names
from .sim import default_config, integrate, largest_lyapunov_exponent, resume_config

_MODEL_BLURBS = {
    "S1": "n=2  stirred-tank bioreactor, substrate-inhibited growth (bistable open loop)",
    "S2": "n=3  metabolic chain with end-product inhibition (open-loop limit cycle)",
    "S3": "n=3  cubic autocatalator (open-loop chaos)",
}


def _load_model(name: str):
    if name in builtin_names():
        return builtin(name)
    path = Path(name)
    if not path.exists():
        raise ValueError(f"unknown model {name!r}: not a builtin and no such file")
    return parse_model_file(path.read_text(encoding="utf-8"))


def _vec(values) -> str:
    return "(" + ", ".join(f"{float(v):.12g}" for v in values) + ")"


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ValueError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_pair(text: str, sep: str = ":"):
    parts = text.split(sep)
    if len(parts) != 2:
        raise ValueError(f"expected <a>{sep}<b>, got {text!r}")
    return float(parts[0]), float(parts[1])


def _domain_from_args(n: int, boxes, seed: int) -> ver.SampleDomain:
    if not boxes:
        return ver.SampleDomain.cube(n, 10.0, seed=seed)
    if len(boxes) == 1:
        boxes = boxes * n
    if len(boxes) != n:
        raise ValueError(f"--box given {len(boxes)} times for an n={n} model")
    bounds = [_parse_pair(b) for b in boxes]
    return ver.SampleDomain(lows=tuple(lo for lo, _ in bounds),
                            highs=tuple(hi for _, hi in bounds), seed=seed)


def _scenario_from_args(args) -> object:
    chosen = [flag for flag in ("u", "gamma", "switch") if getattr(args, flag, None) is not None]
    if len(chosen) != 1:
        raise ValueError("choose exactly one of --u / --gamma / --switch")
    if args.u is not None:
        return Scenario.open_loop(args.u)
    if args.gamma is not None:
        return Scenario.closed_loop(args.gamma)
    parts = args.switch.split(":")
    if len(parts) != 3:
        raise ValueError("--switch wants <u>:<gamma>:<t_switch>")
    return Scenario.switched(float(parts[0]), float(parts[1]), float(parts[2]))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_list_models(args) -> int:
    for name in builtin_names():
        print(f"{name}  {_MODEL_BLURBS[name]}")
    print(f"(stepping backend: {kernel_backend()})")
    return 0


def _cmd_verify(args) -> int:
    m = _load_model(args.model)
    domain = _domain_from_args(m.n, args.box, args.seed)
    betas = args.beta if args.beta else None
    report = ver.check_h2(m, domain, betas)
    pio.write_report_json(report, args.out)
    for rec in report.checks:
        print(f"{rec.check_id} ({rec.label}): {rec.verdict}")
    print(f"beta_m = {'infeasible' if report.beta_m is None else report.beta_m!r}")
    return 0 if report.passed else 1


def _cmd_equilibria(args) -> int:
    m = _load_model(args.model)
    chosen = [f for f in ("beta", "gamma", "u") if getattr(args, f) is not None]
    if len(chosen) != 1:
        raise ValueError("choose exactly one of --beta / --gamma / --u")
    if args.beta is not None:
        res = eq.solve_constant_input(m, args.beta)
        stability = eq.classify_stability(m, ConstantInput(args.beta), res.x_star)
        pio.write_report_json(res, args.out, model=m.name,
                              input={"mode": "constant_input", "beta": args.beta},
                              stability=pio.report_to_dict(stability))
        print(f"x* = {_vec(res.x_star)}  residual={res.residual:.3e}  "
              f"[{stability.verdict}]")
    elif args.gamma is not None:
        res = eq.closed_loop_equilibrium(m, args.gamma)
        stability = eq.classify_stability(m, Scenario.closed_loop(args.gamma), res.x_star)
        pio.write_report_json(res, args.out, model=m.name,
                              input={"mode": "closed_loop", "gamma": args.gamma},
                              stability=pio.report_to_dict(stability))
        print(f"x* = {_vec(res.x_star)}  residual={res.residual:.3e}  "
              f"[{stability.verdict}]")
    else:
        domain = _domain_from_args(m.n, args.box, args.seed)
        sc = Scenario.open_loop(args.u)
        results = eq.enumerate_open_loop_equilibria(m, args.u, domain, args.starts)
        entries = []
        for res in results:
            stability = eq.classify_stability(m, sc, res.x_star)
            entries.append({
                "x_star": [float(v) for v in res.x_star],
                "residual": res.residual,
                "stability": pio.report_to_dict(stability),
            })
            print(f"x* = {_vec(res.x_star)}  [{stability.verdict}]")
        pio.write_report_json(
            {"kind": "equilibria", "model": m.name,
             "input": {"mode": "open_loop", "u": args.u},
             "starts": args.starts, "count": len(entries), "equilibria": entries},
            args.out)
    return 0


def _cmd_simulate(args) -> int:
    m = _load_model(args.model)
    sc = _scenario_from_args(args)
    x0 = _parse_vector(args.x0)
    t0, t1 = _parse_pair(args.t)
    cfg = default_config(m)
    if args.rtol is not None:
        cfg = resume_config(cfg, rtol=args.rtol)
    if args.dt_out is not None:
        cfg = resume_config(cfg, dt_out=args.dt_out)
    tr = integrate(m, sc, x0, t0, t1, cfg)
    pio.write_trajectory_csv(tr, args.out)
    print(f"wrote {args.out}: {tr.times.size} rows, {tr.steps} steps "
          f"({tr.rejected} rejected)")
    return 0


def _cmd_lyapunov(args) -> int:
    m = _load_model(args.model)
    chosen = [f for f in ("u", "gamma") if getattr(args, f) is not None]
    if len(chosen) != 1:
        raise ValueError("choose exactly one of --u / --gamma")
    sc = Scenario.open_loop(args.u) if args.u is not None else Scenario.closed_loop(args.gamma)
    x0 = _parse_vector(args.x0)
    lam = largest_lyapunov_exponent(m, sc, x0, args.transient, args.measure,
                                    args.renorm)
    pio.write_report_json(
        {"kind": "lyapunov", "model": m.name, "input": sc.describe(),
         "x0": [float(v) for v in x0], "transient": args.transient,
         "measure": args.measure, "renorm_dt": args.renorm,
         "lambda_max": lam}, args.out)
    print(f"lambda_max = {lam!r}")
    return 0


# Pinned reproduction defaults (initial conditions, horizons, switch times).
_FIG2_X0 = "0.5,0.5,0.5"
_FIG4_X0 = "1,1,1"


def _cmd_reproduce(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fig = args.figure
    if fig == 1:
        m = builtin("S1")
        sweep = ver.SampleDomain(lows=(0.05, 0.05), highs=(6.0, 6.0),
                                 grid_per_axis=12, random_count=0)
        sc = Scenario.open_loop(0.25)
        for idx, x0 in enumerate(sweep.points(2)):
            tr = integrate(m, sc, x0, 0.0, 60.0)
            pio.write_trajectory_csv(tr, outdir / f"fig1_ic_{idx:03d}.csv")
        results = eq.enumerate_open_loop_equilibria(
            m, 0.25, ver.SampleDomain.cube(2, 10.0), 100)
        entries = [{
            "x_star": [float(v) for v in res.x_star],
            "residual": res.residual,
            "stability": pio.report_to_dict(eq.classify_stability(m, sc, res.x_star)),
        } for res in results]
        pio.write_report_json(
            {"kind": "equilibria", "model": "S1",
             "input": {"mode": "open_loop", "u": 0.25},
             "count": len(entries), "equilibria": entries},
            outdir / "fig1_equilibria.json")
        print(f"wrote {len(list(sweep.points(2)))} trajectories and "
              f"fig1_equilibria.json to {outdir}")
    elif fig == 2:
        tr = integrate(builtin("S2"), Scenario.open_loop(1.0),
                       _parse_vector(_FIG2_X0), 0.0, 300.0)
        pio.write_trajectory_csv(tr, outdir / "fig2_trajectory.csv")
        print(f"wrote fig2_trajectory.csv to {outdir}")
    elif fig == 3:
        tr = integrate(builtin("S2"), Scenario.switched(1.0, 2.0, 40.0),
                       _parse_vector(_FIG2_X0), 0.0, 120.0)
        pio.write_trajectory_csv(tr, outdir / "fig3_trajectory.csv")
        print(f"wrote fig3_trajectory.csv to {outdir}")
    elif fig == 4:
        tr = integrate(builtin("S3"), Scenario.open_loop(1.0),
                       _parse_vector(_FIG4_X0), 0.0, 500.0)
        pio.write_trajectory_csv(tr, outdir / "fig4_trajectory.csv")
        print(f"wrote fig4_trajectory.csv to {outdir}")
    else:
        m = builtin("S3")
        # gain chosen so the asymptotic feedback input equals the open-loop value 1
        gamma = eq.s3_gain_matching_input(m.params, 1.0)
        tr = integrate(m, Scenario.switched(1.0, gamma, 20.0),
                       _parse_vector(_FIG4_X0), 0.0, 200.0)
        pio.write_trajectory_csv(tr, outdir / "fig5_trajectory.csv")
        print(f"wrote fig5_trajectory.csv to {outdir} (gamma={gamma!r})")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="posctrl",
        description="Verify, solve, and simulate positive systems "
                    "xdot = u*f(x) + c*psi(x) under output feedback u = gamma*psi(x).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list-models", help="list builtin models")
    p.set_defaults(func=_cmd_list_models)

    p = sub.add_parser("verify", help="run the six structural hypothesis checks")
    p.add_argument("--model", required=True, help="S1|S2|S3 or a model-file path")
    p.add_argument("--box", action="append", default=[], metavar="a:b",
                   help="per-axis sampling interval (repeat per axis, default 0:10)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--beta", action="append", type=float, default=[],
                   help="input scale(s) for the equilibrium check (must exceed beta_m)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("equilibria", help="solve equilibria and classify stability")
    p.add_argument("--model", required=True)
    p.add_argument("--beta", type=float, help="constant-input comparison field")
    p.add_argument("--gamma", type=float, help="closed-loop feedback gain")
    p.add_argument("--u", type=float, help="open-loop constant input (multi-start)")
    p.add_argument("--starts", type=int, default=100)
    p.add_argument("--box", action="append", default=[], metavar="a:b")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_equilibria)

    p = sub.add_parser("simulate", help="integrate a scenario and write CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--u", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--switch", metavar="u:gamma:t")
    p.add_argument("--x0", required=True, metavar="v,v,...")
    p.add_argument("--t", required=True, metavar="t0:t1")
    p.add_argument("--rtol", type=float)
    p.add_argument("--dt-out", dest="dt_out", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("lyapunov", help="largest Lyapunov exponent (companion method)")
    p.add_argument("--model", required=True)
    p.add_argument("--u", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--x0", required=True, metavar="v,v,...")
    p.add_argument("--transient", type=float, required=True)
    p.add_argument("--measure", type=float, required=True)
    p.add_argument("--renorm", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_lyapunov)

    p = sub.add_parser("reproduce", help="rerun a canonical demo scenario")
    p.add_argument("--figure", type=int, choices=(1, 2, 3, 4, 5), required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=_cmd_reproduce)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits itself on usage errors / --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, ModelFileError, ExpressionSyntaxError, EvaluationError,
            OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (IntegrationError, ConvergenceError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
