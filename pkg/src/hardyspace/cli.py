"""Command-line entry point: ``hardyspace <subcommand> [options]``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import io
from .decomposition import AtomTerm, atomic_decompose, validate_atom
from .exceptions import HardyError
from .grid import Cube
from .harness import (ExperimentConfig, default_dictionary, generate_corpus, make_operator,
                      run_equivalence, run_kernel_reports)
from .maximal import (ScaleGrid, area_function, grand_maximal, nt_maximal,
                      peetre_maximal, radial_maximal, script_M)
from .operator import gaussian_symbol
from .symbols import default_seminorm_order, make_calderon_bundle

log = logging.getLogger("hardyspace")

MAXIMAL_KINDS = ("nontangential", "radial", "peetre", "grand", "script")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.grid is not None:
        changes["points"] = args.grid
    if args.dim is not None:
        changes["dim"] = args.dim
    if args.p is not None:
        changes["p"] = args.p
    if args.operator is not None:
        changes["operator"] = args.operator
    return cfg.replace(**changes) if changes else cfg


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--grid", type=int, help="points per side")
    parser.add_argument("--dim", type=int, choices=(1, 2, 3))
    parser.add_argument("--p", help="comma-separated list of p values")
    parser.add_argument("--operator", choices=("laplacian", "schrodinger", "magnetic"))
    parser.add_argument("-v", "--verbose", action="store_true")


def cmd_kernel_report(cfg, args) -> int:
    for path in run_kernel_reports(cfg):
        print(path)
    return 0


def cmd_maximal(cfg, args) -> int:
    op = make_operator(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    scales = ScaleGrid.for_grid(op.grid, cfg.per_decade)
    p = cfg.p[0]
    for name, f in generate_corpus(cfg.corpus, op.grid, cfg.seed, cfg.band):
        if args.kind == "nontangential":
            m = nt_maximal(op, gaussian_symbol, f, scales, args.alpha)
        elif args.kind == "radial":
            m = radial_maximal(op, f, scales)
        elif args.kind == "peetre":
            m = peetre_maximal(op, gaussian_symbol, f, scales, op.grid.dim / p + 1)
        elif args.kind == "grand":
            N = default_seminorm_order(op.grid.dim, p)
            m = grand_maximal(op, default_dictionary(N), f, scales, N)
        else:
            m = script_M(op, make_calderon_bundle(cfg.M_for(p)), f, scales)
        print(io.write_field_csv(out / f"{args.kind}_{_safe(name)}.csv", m))
    return 0


def cmd_square(cfg, args) -> int:
    op = make_operator(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    scales = ScaleGrid.for_grid(op.grid, cfg.per_decade)
    for name, f in generate_corpus(cfg.corpus, op.grid, cfg.seed, cfg.band):
        print(io.write_field_csv(out / f"area_{_safe(name)}.csv",
                                 area_function(op, f, scales)))
    return 0


def cmd_decompose(cfg, args) -> int:
    op = make_operator(cfg)
    out = Path(cfg.out)
    code = 0
    for name, f in generate_corpus(cfg.corpus, op.grid, cfg.seed, cfg.band):
        for p in cfg.p:
            M = cfg.M_for(p)
            dec = atomic_decompose(op, f, p, M, ScaleGrid.for_reconstruction(op, cfg.recon_per_e))
            d = out / f"{_safe(name)}_p{p:g}"
            io.write_decomposition(d, dec)
            ok = dec.all_supports_ok() and dec.relative_residual <= cfg.residual_tol
            code = code or (0 if ok else 1)
            print(f"{d}: atoms={len(dec.terms)} budget={dec.budget!r} "
                  f"residual={dec.relative_residual:.3e}")
    return code


def cmd_validate_atoms(cfg, args) -> int:
    """Revalidate atoms from a decomposition dump directory."""
    op = make_operator(cfg)
    grid = op.grid
    code = 0
    rows = io.read_rows(Path(args.input) / "manifest.csv")
    terms = io.read_decomposition(args.input)
    for r, t in zip(rows, terms):
        corner = [int(c) for c in r["corner"].split()]
        size = int(round(float(r["ell"]) / grid.h))
        term = AtomTerm(t["i"], t["j"], t["lam"], t["b"], t["a"],
                        Cube.from_corner(grid, corner, size), int(r["M"]), float(r["p"]))
        rep = validate_atom(op, term, support_tol=cfg.support_tol)
        status = "ok" if rep.passed else "FAIL"
        code = code or (0 if rep.passed else 1)
        print(f"atom {r['atom']} ({t['i']},{t['j']}): identity={rep.identity_defect:.2e} "
              f"support={rep.max_support_mass:.2e} ratio_inf={rep.size_ratio[math.inf]:.4g} "
              f"{status}")
    return code


def cmd_equivalence(cfg, args) -> int:
    rep = run_equivalence(cfg)
    for path in rep.files:
        print(path)
    return rep.exit_code


def cmd_corpus(cfg, args) -> int:
    grid = cfg.grid
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, f in generate_corpus(cfg.corpus, grid, cfg.seed, cfg.band):
        stem = out / f"corpus_{_safe(name)}"
        io.write_raw(str(stem) + ".f64", f.values,
                     {"name": name, "dim": grid.dim, "points": grid.points_per_side,
                      "boundary": grid.boundary, "seed": cfg.seed})
        io.write_field_csv(str(stem) + ".csv", f)
        print(stem)
    return 0


def _safe(name: str) -> str:
    return name.replace(":", "-")


COMMANDS = {
    "kernel-report": cmd_kernel_report,
    "maximal": cmd_maximal,
    "square": cmd_square,
    "decompose": cmd_decompose,
    "validate-atoms": cmd_validate_atoms,
    "equivalence": cmd_equivalence,
    "corpus": cmd_corpus,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hardyspace",
                                     description="Hardy-space toolkit for discrete operators")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        _common(sp)
        if name == "maximal":
            sp.add_argument("--kind", choices=MAXIMAL_KINDS, default="nontangential")
            sp.add_argument("--alpha", type=float, default=1.0)
        if name == "validate-atoms":
            sp.add_argument("--input", required=True, help="decomposition dump directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except HardyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
