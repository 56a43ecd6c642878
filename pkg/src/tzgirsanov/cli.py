"""Command-line front end.

Subcommands::

    tzgirsanov simulate   sample paths to CSV
    tzgirsanov transform  apply T_z, C, C_Lambda or S_mu to a CSV path
    tzgirsanov hlam       evaluate the balance map h_Lambda (or k_mu)
    tzgirsanov bessel     K_nu(x), log K_nu(x) and K_{nu+1}/K_nu
    tzgirsanov verify     deterministic and Monte Carlo identity checks

Exit status: 0 on success, 1 when a verification fails, 2 on usage errors
and numeric faults.  Output files go to ``--out``, else to the directory in
``TZG_OUTPUT_DIR``, else to the working directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .checks import run_deterministic_suite
from .paths import (
    DomainError,
    FunctionalProfile,
    ProfileMode,
    RangeError,
    TimeGrid,
    exp_functional_A,
    read_path_csv,
    write_path_csv,
)
from .quadrature import ConvergenceError
from .specfun import bessel_k_log, bessel_k_ratio
from .stochastic import DriftKind, DriftSpec, RngSpec, euler_maruyama
from .transforms import apply_C, apply_C_Lambda, apply_S_mu, apply_tz
from .verify import SuiteConfig, preset_identities, run_suite
from .weights import (
    SolverError,
    k_mu,
    lambda_bessel,
    lambda_cameron_martin,
    lambda_cosh,
    lambda_one,
    lambda_quadratic_variation,
    solve_h_lambda,
)

OUTPUT_ENV = "TZG_OUTPUT_DIR"
DEFAULT_SEED = 42

EXIT_OK, EXIT_FAIL, EXIT_FAULT = 0, 1, 2

_DRIFT_KINDS = {
    "bm": DriftKind.ZERO,
    "drift": DriftKind.CONSTANT,
    "tanh": DriftKind.TANH,
    "besselk": DriftKind.BESSEL_K,
    "timeinhom": DriftKind.TIME_INHOM,
}
_WEIGHTS = ("one", "cameron-martin", "cosh", "bessel", "quadratic-variation")


@dataclass
class RunConfig:
    """Everything a run depends on; embedded verbatim in its outputs."""

    command: str
    seed: int = DEFAULT_SEED
    N: int | None = None
    n_steps: int = 512
    t_end: float = 1.0
    specs: list | None = None
    overrides: dict = field(default_factory=dict)
    output_dir: str | None = None
    mode: str = "induced"
    argv: list = field(default_factory=list)
    version: str = __version__


def _output_dir(arg: str | None) -> str:
    out = arg or os.environ.get(OUTPUT_ENV) or os.getcwd()
    os.makedirs(out, exist_ok=True)
    return out


def _make_weight(name: str, mu: float, lam: float, t: float):
    if name == "one":
        return lambda_one(t)
    if name == "cameron-martin":
        return lambda_cameron_martin(mu, t)
    if name == "cosh":
        return lambda_cosh(mu, t)
    if name == "bessel":
        return lambda_bessel(lam, mu, t)
    return lambda_quadratic_variation(t)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args, config: RunConfig) -> int:
    kind = _DRIFT_KINDS[args.kind]
    drift = DriftSpec(kind, mu=args.mu, lam=args.lam,
                      t_end=args.t if kind is DriftKind.TIME_INHOM else None)
    grid = TimeGrid(args.t, args.n)
    rng = RngSpec(args.seed)
    out = _output_dir(args.out)
    ordinals = range(args.first, args.first + args.paths)
    written = []
    if args.format == "long":
        target = os.path.join(out, f"{args.prefix}.csv")
        with open(target, "w", newline="") as fh:
            fh.write("ordinal,s,phi\n")
            for o in ordinals:
                p = euler_maruyama(drift, grid, rng, o)
                for s, v in zip(grid.nodes, p.values):
                    fh.write(f"{o},{float(s)!r},{float(v)!r}\n")
        written.append(target)
    else:
        for o in ordinals:
            target = os.path.join(out, f"{args.prefix}_{o:06d}.csv")
            write_path_csv(euler_maruyama(drift, grid, rng, o), target)
            written.append(target)
    meta = os.path.join(out, f"{args.prefix}.json")
    with open(meta, "w") as fh:
        json.dump({"config": asdict(config), "sampler": drift.label(), "files": written}, fh, indent=2)
    for w in written:
        print(w)
    return EXIT_OK


def _sidecar_path(csv_path: str) -> str:
    return os.path.splitext(csv_path)[0] + ".json"


def _input_profile(path, csv_path: str, use_sidecar: bool):
    """Profile of an input path: the one stored next to it by an earlier
    ``transform`` when present, else the trapezoid profile.

    The stored profile keeps chains of transforms on the induced rule, so
    for example applying ``C`` twice returns the input to roundoff.
    """
    side = _sidecar_path(csv_path)
    if use_sidecar and os.path.exists(side):
        with open(side) as fh:
            data = json.load(fh)
        A, Z = data.get("A"), data.get("Z")
        if A is not None and Z is not None and len(A) == len(path.values):
            return FunctionalProfile(np.array(A), np.array(Z), ProfileMode(data["profile_mode"])), side
    return exp_functional_A(path), None


def cmd_transform(args, config: RunConfig) -> int:
    path = read_path_csv(args.input)
    mode = ProfileMode(args.mode)
    prof, source = _input_profile(path, args.input, not args.ignore_sidecar)
    if args.op == "tz":
        if args.z is None:
            raise DomainError("--op tz needs --z")
        out, oprof = apply_tz(path, prof, args.z, mode)
        z_used = args.z
    elif args.op == "c":
        out, oprof = apply_C(path, prof, mode)
        z_used = 2.0 * path.endpoint
    elif args.op == "clambda":
        lam = _make_weight(args.weight, args.mu, args.lam, path.grid.t_end)
        h = solve_h_lambda(lam, path.endpoint, prof.Z_end)
        out, oprof = apply_C_Lambda(path, prof, lam, mode=mode)
        z_used = path.endpoint - h
    else:
        out, oprof = apply_S_mu(path, prof, args.mu, mode=mode)
        z_used = path.endpoint + k_mu(args.mu, path.endpoint, prof.Z_end)
    target = args.output or os.path.join(
        _output_dir(args.out),
        os.path.splitext(os.path.basename(args.input))[0] + f"_{args.op}.csv")
    write_path_csv(out, target)
    sidecar = {
        "config": asdict(config),
        "op": args.op,
        "z_used": z_used,
        "endpoint_before": path.endpoint,
        "endpoint_after": out.endpoint,
        "A_t_before": prof.A_end,
        "A_t_after": oprof.A_end,
        "A_t_ratio": oprof.A_end / prof.A_end,
        "Z_t": prof.Z_end,
        "profile_mode": oprof.mode.value,
        "input_profile": source or "trapezoid",
        "A": oprof.A.tolist(),
        "Z": oprof.Z.tolist(),
    }
    with open(_sidecar_path(target), "w") as fh:
        json.dump(sidecar, fh, indent=2)
    print(target)
    return EXIT_OK


def cmd_hlam(args, config: RunConfig) -> int:
    if args.kmu is not None:
        value = k_mu(args.kmu, args.xi, args.zeta)
        print(f"k_mu(xi={args.xi:g}, zeta={args.zeta:g}; mu={args.kmu:g}) = {value!r}")
        return EXIT_OK
    lam = _make_weight(args.weight, args.mu, args.lam, args.t)
    value = solve_h_lambda(lam, args.xi, args.zeta)
    print(f"h[{lam.label}](xi={args.xi:g}, zeta={args.zeta:g}) = {value!r}")
    return EXIT_OK


def cmd_bessel(args, config: RunConfig) -> int:
    lk = bessel_k_log(args.nu, args.x)
    value = float(np.exp(lk))
    ratio = float(bessel_k_ratio(abs(args.nu), args.x))
    print(f"K_{abs(args.nu):g}({args.x:g}) = {value!r}")
    print(f"log K_{abs(args.nu):g}({args.x:g}) = {lk!r}")
    print(f"K_{abs(args.nu) + 1:g}/K_{abs(args.nu):g}({args.x:g}) = {ratio!r}")
    return EXIT_OK


def cmd_verify(args, config: RunConfig) -> int:
    if args.list:
        for s in preset_identities():
            print(f"{s.label:<28s} {s.statement}")
        return EXIT_OK
    report: dict = {"config": asdict(config)}
    passed = True
    run_det = args.suite in ("deterministic", "all") and not args.spec
    run_stat = args.suite in ("statistical", "all") or bool(args.spec)
    if run_det:
        det = run_deterministic_suite(seed=args.seed)
        print(det.table())
        report["deterministic"] = det.to_dict()
        passed &= det.passed
    if run_stat:
        cfg = SuiteConfig(
            N=args.N, n_steps=args.n, t_end=args.t, seed=args.seed, shards=args.shards,
            workers=args.workers, bias_probe=not args.no_bias_probe, rerun=not args.no_rerun,
            specs=tuple(args.spec) if args.spec else None, alpha=args.alpha, x=args.x, z=args.z,
            mu=args.mu, lam=args.lam,
        )
        suite = run_suite(cfg)
        print(suite.table())
        report["statistical"] = json.loads(suite.to_json())
        passed &= suite.passed
    report["passed"] = passed
    if args.out or os.environ.get(OUTPUT_ENV):
        target = os.path.join(_output_dir(args.out), "verify-report.json")
        with open(target, "w") as fh:
            json.dump(report, fh, indent=2)
        print(f"report: {target}")
    return EXIT_OK if passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, seed=True, grid=True):
    if seed:
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed (default 42)")
    if grid:
        p.add_argument("--n", type=int, default=512, help="number of time steps")
        p.add_argument("--t", type=float, default=1.0, help="horizon")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or cwd)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tzgirsanov", allow_abbrev=False,
        description="Anticipative path transforms of Brownian motion and checks of their "
                    "change-of-measure identities.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", allow_abbrev=False, help="sample paths to CSV")
    _common(p)
    p.add_argument("--kind", choices=sorted(_DRIFT_KINDS), default="bm")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=1, help="number of paths")
    p.add_argument("--first", type=int, default=0, help="ordinal of the first path")
    p.add_argument("--format", choices=("files", "long"), default="files",
                   help="one CSV per path, or a single ordinal,s,phi file")
    p.add_argument("--prefix", default="path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("transform", allow_abbrev=False, help="transform a CSV path")
    _common(p, seed=False, grid=False)
    p.add_argument("input", help="input CSV with header s,phi")
    p.add_argument("--op", choices=("tz", "c", "clambda", "smu"), required=True)
    p.add_argument("--z", type=float, default=None, help="shift for --op tz")
    p.add_argument("--weight", choices=_WEIGHTS, default="one", help="weight for --op clambda")
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--mode", choices=[m.value for m in ProfileMode], default="induced")
    p.add_argument("--output", default=None, help="output CSV (sidecar JSON is written next to it)")
    p.add_argument("--ignore-sidecar", action="store_true",
                   help="recompute the input profile by quadrature even if a sidecar exists")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("hlam", allow_abbrev=False, help="balance map h_Lambda(xi, zeta)")
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--zeta", type=float, required=True)
    p.add_argument("--weight", choices=_WEIGHTS, default="one")
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--kmu", type=float, default=None, metavar="MU",
                   help="print k_mu(xi, zeta) instead")
    p.set_defaults(func=cmd_hlam)

    p = sub.add_parser("bessel", allow_abbrev=False, help="K_nu(x) and related values")
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.set_defaults(func=cmd_bessel)

    p = sub.add_parser("verify", allow_abbrev=False, help="run identity checks")
    _common(p)
    p.add_argument("--suite", choices=("deterministic", "statistical", "all"), default="all")
    p.add_argument("--spec", action="append", default=None, metavar="LABEL",
                   help="run only this preset (repeatable; implies the statistical suite)")
    p.add_argument("--list", action="store_true", help="list presets and exit")
    p.add_argument("--N", type=int, default=100_000, help="paths per preset")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--x", type=float, default=0.25)
    p.add_argument("--z", type=float, default=0.5)
    p.add_argument("--mu", type=float, default=None, help="override every preset's drift/tilt")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-bias-probe", action="store_true")
    p.add_argument("--no-rerun", action="store_true", help="do not re-run failed presets")
    p.set_defaults(func=cmd_verify)
    return parser


def _config_from(args, argv) -> RunConfig:
    overrides = {k: getattr(args, k) for k in ("alpha", "x", "z", "mu", "lam", "kind", "op",
                                               "weight", "nu", "xi", "zeta", "kmu", "shards",
                                               "workers", "suite")
                 if hasattr(args, k)}
    return RunConfig(
        command=args.command,
        seed=getattr(args, "seed", DEFAULT_SEED),
        N=getattr(args, "N", None),
        n_steps=getattr(args, "n", 512),
        t_end=getattr(args, "t", 1.0),
        specs=getattr(args, "spec", None),
        overrides=overrides,
        output_dir=getattr(args, "out", None) or os.environ.get(OUTPUT_ENV),
        mode=getattr(args, "mode", "induced"),
        argv=list(argv),
    )


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    config = _config_from(args, argv)
    try:
        return args.func(args, config)
    except (DomainError, RangeError, SolverError, ConvergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT


__all__ = ["RunConfig", "build_parser", "main", "cmd_simulate", "cmd_transform", "cmd_hlam",
           "cmd_bessel", "cmd_verify"]
