"""Command-line front end.

Subcommands: gen, solve, measure, theory, certify, phase. Every option can
also be supplied through ``--config FILE`` holding flat ``key = value``
lines (flag spelling, dashes or underscores); explicit flags win over the
config, which wins over built-in defaults. All randomness is seed-driven,
and every run writes its resolved parameters (defaults included) into its
meta or report file.

Exit codes: 0 success, 1 usage error, 2 runtime or numerical error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .certificate import (
    attach_lemma_flags,
    build_certificate,
    report_to_text,
    verify_conditions,
    verify_lemma_bounds,
)
from .errors import DemixError
from .experiments import (
    GenSpec,
    GridSpec,
    LambdaPolicy,
    emit_curve_csv,
    emit_grid_csv,
    emit_heatmap,
    generate_instance,
    mix_seed,
    run_phase_grid,
)
from .measures import full_report
from .model import DemixInstance, GroundTruth, read_matrix, write_matrix
from .solver import SolverConfig, solve_demix
from .theory import TheoryInputs, check_assumptions, rank_sparsity_curve

# Singular values below this fraction of the largest are not counted when
# inferring the rank of a low-rank matrix read from disk.
RANK_INFER_RTOL = 1e-9


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="demix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"demix {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name: str, help_: str) -> _Parser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=str, default=None,
                       help="key=value file supplying defaults for any flag")
        return p

    p = add("gen", "generate a planted instance and write its matrices")
    for flag in ("--n", "--m", "--d", "--r", "--s"):
        p.add_argument(flag, type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", type=str, default=None)

    p = add("solve", "solve one instance read from matrix files")
    p.add_argument("--y", type=str, default=None, help="observed matrix file")
    p.add_argument("--r-mat", type=str, default=None, help="dictionary matrix file")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--tol", type=float, default=None, help="feasibility tolerance")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out-dir", type=str, default=None)
    p.add_argument("--allow-unnormalized", action="store_true", default=None)

    for name in ("measure", "theory", "certify"):
        p = add(name, f"{name} a planted instance from matrix files")
        p.add_argument("--r-mat", type=str, default=None)
        p.add_argument("--x0", type=str, default=None)
        p.add_argument("--a0", type=str, default=None)
        p.add_argument("--r", type=int, default=None,
                       help="planted rank (default: inferred from x0)")
        p.add_argument("--k", type=int, default=None,
                       help="restricted isometry order for fat dictionaries")
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--allow-unnormalized", action="store_true", default=None)
        if name == "theory":
            p.add_argument("--curve-out", type=str, default=None,
                           help="also write the rank bound curve CSV here")
            p.add_argument("--s-max", type=int, default=None,
                           help="largest sparsity on the curve (default m)")
        if name == "certify":
            p.add_argument("--lambda", dest="lam", type=float, default=None,
                           help="weight (default: admissible-interval midpoint)")

    p = add("phase", "run a rank/sparsity phase-transition grid")
    for flag in ("--n", "--m", "--d", "--r-max", "--s-max", "--trials",
                 "--seed", "--s-step", "--max-iters", "--threads"):
        p.add_argument(flag, type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--lambda-sweep", type=str, default=None,
                   help="comma-separated candidate weights, best-of per cell")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out-dir", type=str, default=None)
    p.add_argument("--no-curve", action="store_true", default=None,
                   help="skip the theoretical-curve CSV")
    return parser


def _load_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DemixError(f"{path}: line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_").lstrip("_")] = value.strip()
    return out


_BOOL_STRINGS = {"true": True, "1": True, "yes": True,
                 "false": False, "0": False, "no": False}

_REQUIRED = object()


def _to_bool(raw: str) -> bool:
    try:
        return _BOOL_STRINGS[raw.lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {raw!r}") from None


def _resolve(args: argparse.Namespace, spec: dict) -> dict:
    """Merge CLI values, config file values, and defaults (in that order).

    ``spec`` maps option name to (type, default); ``_REQUIRED`` defaults must
    be supplied by the command line or the config file.
    """
    config = _load_config(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for key, (typ, default) in spec.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            resolved[key] = cli_val
        elif key in config:
            raw = config[key]
            resolved[key] = _to_bool(raw) if typ is bool else typ(raw)
        else:
            resolved[key] = default
    missing = [k for k, v in resolved.items() if v is _REQUIRED]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise _UsageError(f"missing required option(s): {flags}")
    return resolved


def _format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _write_kv(path, entries: dict) -> None:
    lines = [f"{k} = {_format_value(v)}" for k, v in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _print_or_write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_gen(args) -> int:
    opts = _resolve(args, {
        "n": (int, _REQUIRED), "m": (int, _REQUIRED), "d": (int, _REQUIRED),
        "r": (int, _REQUIRED), "s": (int, _REQUIRED), "seed": (int, 0),
        "out_dir": (str, "."),
    })
    spec = GenSpec(opts["n"], opts["m"], opts["d"], opts["r"], opts["s"], opts["seed"])
    instance, truth = generate_instance(spec)
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(instance.Y, out / "Y.txt")
    write_matrix(instance.R, out / "R.txt")
    write_matrix(truth.x0, out / "X0.txt")
    write_matrix(truth.A0, out / "A0.txt")
    _write_kv(out / "meta.txt", {
        "command": "gen", "version": __version__,
        "n": spec.n, "m": spec.m, "d": spec.d, "r": spec.r, "s": spec.s,
        "seed": spec.seed, "out_dir": str(out),
    })
    print(f"wrote Y.txt R.txt X0.txt A0.txt meta.txt in {out}")
    return 0


def _solver_config(opts) -> SolverConfig:
    cfg = SolverConfig()
    if opts.get("lam") is not None:
        cfg = replace(cfg, lam=opts["lam"])
    if opts.get("tol") is not None:
        cfg = replace(cfg, tol_feas=opts["tol"])
    if opts.get("max_iters") is not None:
        cfg = replace(cfg, max_iters=opts["max_iters"])
    return cfg


def _cmd_solve(args) -> int:
    opts = _resolve(args, {
        "y": (str, _REQUIRED), "r_mat": (str, _REQUIRED),
        "lam": (float, None), "tol": (float, None),
        "max_iters": (int, None), "out_dir": (str, "."),
        "allow_unnormalized": (bool, False),
    })
    instance = DemixInstance(
        read_matrix(opts["y"]), read_matrix(opts["r_mat"]),
        allow_unnormalized=bool(opts["allow_unnormalized"]),
    )
    cfg = _solver_config(opts)
    report = solve_demix(instance, cfg)
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(report.X_hat, out / "Xhat.txt")
    write_matrix(report.A_hat, out / "Ahat.txt")
    _write_kv(out / "report.txt", {
        "command": "solve", "version": __version__,
        "n": instance.n, "m": instance.m, "d": instance.d,
        "lambda": report.lam,
        "mu0_factor": cfg.mu0_factor, "eta": cfg.eta,
        "mu_min_factor": cfg.mu_min_factor, "max_iters": cfg.max_iters,
        "tol_feas": cfg.tol_feas, "tol_step": cfg.tol_step,
        "iterations": report.iterations,
        "feas_residual": report.feas_residual,
        "objective": report.objective,
        "converged": report.converged,
    })
    print(f"wrote Xhat.txt Ahat.txt report.txt in {out} "
          f"(converged={report.converged}, iterations={report.iterations})")
    return 0


def _load_truth(opts) -> tuple[DemixInstance, GroundTruth]:
    R = read_matrix(opts["r_mat"])
    X0 = read_matrix(opts["x0"])
    A0 = read_matrix(opts["a0"])
    U, sv, Vt = np.linalg.svd(X0, full_matrices=False)
    if opts.get("r") is not None:
        rank = opts["r"]
        if not 0 <= rank <= sv.size:
            raise DemixError(f"--r {rank} out of range for the given x0")
    else:
        rank = int(np.count_nonzero(sv > RANK_INFER_RTOL * sv[0])) if sv.size else 0
    truth = GroundTruth(U[:, :rank], sv[:rank], Vt[:rank].T, A0)
    instance = DemixInstance(
        X0 + R @ A0, R, allow_unnormalized=bool(opts["allow_unnormalized"])
    )
    return instance, truth


_TRUTH_OPTS = {
    "r_mat": (str, _REQUIRED), "x0": (str, _REQUIRED), "a0": (str, _REQUIRED),
    "r": (int, None), "k": (int, None), "out": (str, None),
    "allow_unnormalized": (bool, False),
}


def _measure_report(instance, truth, k):
    return full_report(instance, truth, k=k)


def _incoherence_kv(rep) -> dict:
    out = {
        "regime": rep.regime, "mu": rep.mu, "gamma_ur": rep.gamma_ur,
        "gamma_v": rep.gamma_v, "xi": rep.xi,
    }
    if rep.regime == "thin":
        out["f_lower"] = rep.f_lower
        out["f_upper"] = rep.f_upper
    else:
        out["ric_delta"] = rep.ric_delta
        out["ric_exact"] = rep.ric_exact
        out["k"] = rep.k
    return out


def _cmd_measure(args) -> int:
    opts = _resolve(args, dict(_TRUTH_OPTS))
    instance, truth = _load_truth(opts)
    rep = _measure_report(instance, truth, opts["k"])
    kv = {"command": "measure", "version": __version__,
          "n": instance.n, "m": instance.m, "d": instance.d,
          "r": truth.r, "s": truth.s}
    kv.update(_incoherence_kv(rep))
    text = "\n".join(f"{k} = {_format_value(v)}" for k, v in kv.items()) + "\n"
    _print_or_write(text, opts["out"])
    return 0


def _theory_inputs(instance, truth, rep) -> TheoryInputs:
    return TheoryInputs(
        n=instance.n, m=instance.m, d=instance.d, r=truth.r, s=truth.s,
        gamma_ur=rep.gamma_ur, gamma_v=rep.gamma_v, mu=rep.mu, xi=rep.xi,
        k=rep.k, f_lower=rep.f_lower, f_upper=rep.f_upper, delta=rep.ric_delta,
    )


def _cmd_theory(args) -> int:
    opts = _resolve(args, {**_TRUTH_OPTS, "curve_out": (str, None),
                           "s_max": (int, None)})
    instance, truth = _load_truth(opts)
    rep = _measure_report(instance, truth, opts["k"])
    inputs = _theory_inputs(instance, truth, rep)
    theory = check_assumptions(inputs)
    kv = {"command": "theory", "version": __version__,
          "n": instance.n, "m": instance.m, "d": instance.d,
          "r": truth.r, "s": truth.s}
    kv.update(_incoherence_kv(rep))
    kv.update({
        "c": theory.c, "big_c": theory.big_c,
        "lambda_min": theory.lambda_min, "lambda_max": theory.lambda_max,
        "s_max": theory.s_max,
        "a1_holds": theory.a1_holds,
        "a2_holds": "na" if theory.a2_holds is None else theory.a2_holds,
        "a3_holds": "na" if theory.a3_holds is None else theory.a3_holds,
        "denominator_positive": theory.denominator_positive,
        "admissible": theory.admissible,
        "advisory_flags": ";".join(theory.advisory_flags) or "none",
    })
    text = "\n".join(f"{k} = {_format_value(v)}" for k, v in kv.items()) + "\n"
    _print_or_write(text, opts["out"])
    if opts["curve_out"]:
        top = opts["s_max"] if opts["s_max"] is not None else instance.m
        points = rank_sparsity_curve(inputs, range(1, top + 1))
        emit_curve_csv(points, opts["curve_out"])
    return 0


def _cmd_certify(args) -> int:
    opts = _resolve(args, {**_TRUTH_OPTS, "lam": (float, None)})
    instance, truth = _load_truth(opts)
    rep = _measure_report(instance, truth, opts["k"])
    inputs = _theory_inputs(instance, truth, rep)
    theory = check_assumptions(inputs)
    lam = opts["lam"]
    if lam is None:
        if not (theory.admissible and math.isfinite(theory.lambda_min)
                and theory.lambda_max > 0):
            raise DemixError(
                "instance is not admissible, so no default weight exists; "
                "pass --lambda explicitly"
            )
        lam = (theory.lambda_min + theory.lambda_max) / 2.0
    gamma, _, _ = build_certificate(instance.R, truth, lam)
    cert = verify_conditions(instance.R, truth, lam, gamma)
    flags = verify_lemma_bounds(cert, rep, theory, lam, truth.r, truth.s)
    cert = attach_lemma_flags(cert, flags)
    _print_or_write(report_to_text(cert), opts["out"])
    return 0


def _cmd_phase(args) -> int:
    opts = _resolve(args, {
        "n": (int, _REQUIRED), "m": (int, _REQUIRED), "d": (int, _REQUIRED),
        "r_max": (int, _REQUIRED), "s_max": (int, _REQUIRED),
        "trials": (int, 10), "seed": (int, 0), "s_step": (int, None),
        "lam": (float, None), "lambda_sweep": (str, None),
        "tol": (float, None), "max_iters": (int, None), "threads": (int, 1),
        "out_dir": (str, "."), "no_curve": (bool, False),
    })
    s_step = opts["s_step"] if opts["s_step"] is not None else max(1, opts["s_max"] // 10)
    r_values = tuple(range(1, opts["r_max"] + 1))
    s_values = tuple(range(s_step, opts["s_max"] + 1, s_step))
    if opts["lambda_sweep"] is not None:
        policy = LambdaPolicy.sweep(
            float(v) for v in str(opts["lambda_sweep"]).split(",") if v.strip()
        )
    elif opts["lam"] is not None:
        policy = LambdaPolicy.fixed(opts["lam"])
    else:
        policy = LambdaPolicy()
    solver = _solver_config({k: opts.get(k) for k in ("tol", "max_iters")})
    spec = GridSpec(
        n=opts["n"], m=opts["m"], d=opts["d"], r_values=r_values,
        s_values=s_values, trials=opts["trials"], master_seed=opts["seed"],
        lambda_policy=policy, solver=solver,
    )
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    def log_cell(cell):
        print(f"cell r={cell.r} s={cell.s} "
              f"frac_both={cell.successes_both / spec.trials:.2f} "
              f"lambda={cell.lam:.6g}")

    grid = run_phase_grid(spec, threads=opts["threads"], progress=log_cell)
    emit_grid_csv(grid, out / "grid.csv")
    for quantity in ("x", "a", "both"):
        emit_heatmap(grid, quantity, out / f"heat_{quantity}.pgm")
    if not opts["no_curve"]:
        points = _reference_curve(spec)
        emit_curve_csv(points, out / "curve.csv")
    _write_kv(out / "meta.txt", {
        "command": "phase", "version": __version__,
        "n": spec.n, "m": spec.m, "d": spec.d,
        "r_max": opts["r_max"], "s_max": opts["s_max"], "s_step": s_step,
        "trials": spec.trials, "seed": spec.master_seed,
        "lambda_policy": policy.kind,
        "lambda": "default" if policy.kind == "default" else
                  (policy.value if policy.kind == "fixed"
                   else ",".join(repr(v) for v in policy.values)),
        "threads": opts["threads"],
        "mu0_factor": solver.mu0_factor, "eta": solver.eta,
        "mu_min_factor": solver.mu_min_factor, "max_iters": solver.max_iters,
        "tol_feas": solver.tol_feas, "tol_step": solver.tol_step,
    })
    print(f"wrote grid.csv heat_x.pgm heat_a.pgm heat_both.pgm"
          f"{'' if opts['no_curve'] else ' curve.csv'} meta.txt in {out}")
    return 0


def _reference_curve(spec: GridSpec, ref_rank: int = 1):
    """Theoretical boundary evaluated on per-sparsity reference instances.

    The published boundary depends on measured incoherence, which varies
    with the draw; a rank-1 reference instance per sparsity level (seeded
    one trial past the grid's own trials) pins it down reproducibly. Points
    whose measurement degenerates are emitted as nan/invalid.
    """
    from .errors import DegenerateSupportError
    from .theory import CurvePoint

    points = []
    for s in spec.s_values:
        seed = mix_seed(spec.master_seed, ref_rank, s, spec.trials)
        try:
            instance, truth = generate_instance(
                GenSpec(spec.n, spec.m, spec.d, ref_rank, s, seed)
            )
            rep = full_report(instance, truth)
            inputs = _theory_inputs(instance, truth, rep)
            points.append(rank_sparsity_curve(inputs, [s])[0])
        except (DegenerateSupportError, ValueError):
            points.append(CurvePoint(s, math.nan, False))
    return points


_COMMANDS = {
    "gen": _cmd_gen,
    "solve": _cmd_solve,
    "measure": _cmd_measure,
    "theory": _cmd_theory,
    "certify": _cmd_certify,
    "phase": _cmd_phase,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required (gen, solve, measure, "
                              "theory, certify, phase)")
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=sys.stderr)
        return 2
    except (DemixError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
