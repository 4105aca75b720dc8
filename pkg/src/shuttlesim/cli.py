"""Command-line interface.

Subcommands mirror the run kinds (evolve, steady, trajectories, spectrum,
power, sweep) plus check-operators for the commutator diagnostics and
operator dumps.  Flags override values from --config; the effective
configuration is echoed into the output manifest.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .basis import Basis, build_hamiltonian, build_ladder, build_momentum, \
    build_position, build_exp_position, commutator_residuals
from .config import DEFAULT_CONFIG, RUNS, ConfigError, load_config
from .runner import run, write_csv

_FLAG_TO_FIELD = {
    "seed": "master_seed",
    "out": "output_dir",
    "dim": "dim",
    "ntraj": "n_traj",
    "dt": "dt",
    "tmax": "t_max",
    "gamma": "gamma",
    "model": "model",
    "sweep_param": "sweep_param",
    "sweep_run": "sweep_run",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key=value config file")
    p.add_argument("--seed", type=int, help="master seed (overrides file)")
    p.add_argument("--out", type=str, help="output directory")
    p.add_argument("--dim", type=int, help="oscillator truncation")
    p.add_argument("--ntraj", type=int, help="number of trajectories")
    p.add_argument("--dt", type=float, help="integration step")
    p.add_argument("--tmax", type=float, help="total evolution time")
    p.add_argument("--gamma", type=float, help="Johnson-noise rate")
    p.add_argument("--model", type=str, help="full | reduced | fixed_charge")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shuttlesim",
                                 description="electron-shuttle heat engine simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("evolve", "unconditional master-equation evolution"),
        ("steady", "stationary state of the generator"),
        ("trajectories", "quantum-jump trajectory ensemble"),
        ("spectrum", "trajectory-averaged position/velocity spectra"),
        ("power", "semiclassical and quantum power"),
        ("sweep", "repeat a run over a parameter list"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--sweep-param", dest="sweep_param", type=str)
            p.add_argument("--sweep-values", dest="sweep_values", type=str,
                           help="comma-separated values")
            p.add_argument("--sweep-run", dest="sweep_run", type=str)

    p = sub.add_parser("check-operators", help="commutator residuals and operator dumps")
    p.add_argument("--dim", type=int, default=60)
    p.add_argument("--margin", type=int, default=None)
    p.add_argument("--dump", type=str, default=None,
                   help="dump an operator as CSV: X, P, a, adag, H, exp+ or exp-")
    p.add_argument("--eta", type=float, default=DEFAULT_CONFIG.eta,
                   help="inverse tunnelling length for exp dumps")
    p.add_argument("--out", type=str, default="out")
    return ap


def _apply_overrides(cfg, args):
    updates = {}
    for flag, field in _FLAG_TO_FIELD.items():
        v = getattr(args, flag, None)
        if v is not None:
            updates[field] = v
    if getattr(args, "sweep_values", None):
        updates["sweep_values"] = tuple(float(t) for t in args.sweep_values.split(","))
    if getattr(args, "no_plots", False):
        updates["plots"] = False
    return replace(cfg, **updates) if updates else cfg


def _check_operators(args) -> int:
    basis = Basis(args.dim)
    rep = commutator_residuals(basis, margin=args.margin)
    print(f"dim={rep.dim} margin={rep.margin}")
    print(f"  |[X,P]-iI|      interior={rep.xp_interior:.3e}  full={rep.xp_full:.3e}")
    print(f"  |[X,N]-(i/2)P|  interior={rep.xn_interior:.3e}  full={rep.xn_full:.3e}")
    if args.dump:
        ops = {
            "X": build_position, "P": build_momentum,
            "a": lambda b: build_ladder(b)[0], "adag": lambda b: build_ladder(b)[1],
            "H": lambda b: build_hamiltonian(b, 1.0),
            "exp+": lambda b: build_exp_position(b, +args.eta),
            "exp-": lambda b: build_exp_position(b, -args.eta),
        }
        if args.dump not in ops:
            print(f"unknown operator {args.dump!r}; choose from {sorted(ops)}",
                  file=sys.stderr)
            return 2
        op = ops[args.dump](basis)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows, cols = np.indices(op.shape)
        path = out / f"operator_{args.dump.replace('+', 'plus').replace('-', 'minus')}.csv"
        write_csv(path, ("row", "col", "re", "im"),
                  [rows.ravel(), cols.ravel(), op.real.ravel(), op.imag.ravel()])
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "check-operators":
        return _check_operators(args)
    try:
        cfg = load_config(args.config) if args.config else DEFAULT_CONFIG
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    cfg = _apply_overrides(cfg, args)
    cfg = replace(cfg, run=args.command)
    try:
        return run(cfg)
    except Exception as exc:  # partial outputs are marked via FAILED.marker
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
