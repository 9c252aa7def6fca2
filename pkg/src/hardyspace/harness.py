"""
Experiment configuration, test-function corpus and report orchestration.

A config is a flat ``key = value`` text file. ``run_equivalence`` computes
the maximal, square-function and atomic quantities for every corpus entry
and writes ``equivalence.csv`` plus ``summary.json``; ``run_kernel_reports``
writes one CSV per kernel-estimate checker.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .decomposition import atomic_decompose, default_M
from .exceptions import ConfigError, HardyError, StageError, UnknownGeneratorError
from .grid import Field, GridSpec, lp_quasinorm
from .maximal import (ScaleGrid, area_function, grand_maximal, nt_maximal,
                      peetre_maximal, radial_maximal, script_M)
from .operator import (SpectralOperator, build_operator, gaussian_bound_report,
                       gaussian_symbol, resolvent_check)
from .symbols import (cross_scale_decay_report, default_seminorm_order,
                      finite_propagation_report, first_order_symbol, heat_symbol,
                      make_calderon_bundle, normalize_member, rational_symbol,
                      smooth_cutoff, weighted_l2_report)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_CORPUS = ("spike", "ball", "bump", "dipole", "cosine:3",
                  "bandlimited:0", "bandlimited:1")


# -- configuration -----------------------------------------------------------

def _tuple_of(conv):
    def parse(text):
        if isinstance(text, (tuple, list)):
            return tuple(conv(x) for x in text)
        return tuple(conv(s.strip()) for s in str(text).split(",") if s.strip())
    return parse


def _opt_int(text):
    if text is None or str(text).strip().lower() in ("", "auto", "none"):
        return None
    return int(text)


@dataclass
class ExperimentConfig:
    """All parameters of a run; see :data:`CONFIG_KEYS` for the file keys."""

    dim: int = 1
    points: int = 128
    boundary: str = "periodic"
    operator: str = "laplacian"
    potential_seed: int = 0
    potential_scale: float = 10.0
    vector_potential_scale: float = 0.0
    p: tuple = (0.8, 1.0)
    M: int | None = None
    alpha: tuple = (1.0, 2.0)
    per_decade: int = 64
    recon_per_e: int = 64
    corpus: tuple = DEFAULT_CORPUS
    seed: int = 0
    band: int = 8
    support_tol: float = 1e-8
    identity_tol: float = 1e-10
    residual_tol: float = 2e-2
    out: str = "out"

    def __post_init__(self):
        for f in fields(self):
            conv = _CONVERTERS[f.name]
            try:
                setattr(self, f.name, conv(getattr(self, f.name)))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {f.name}: {exc}") from exc
        if self.dim not in (1, 2, 3):
            raise ConfigError("dim must be 1, 2 or 3")
        if self.points < 2:
            raise ConfigError("points must be at least 2")
        for p in self.p:
            if not 0 < p <= 1:
                raise ConfigError(f"p must lie in (0, 1], got {p}")
        if any(a <= 0 for a in self.alpha):
            raise ConfigError("apertures must be positive")
        if self.boundary not in ("periodic", "dirichlet"):
            raise ConfigError(f"unknown boundary {self.boundary!r}")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.dim, self.points, boundary=self.boundary)

    def M_for(self, p: float) -> int:
        return default_M(self.dim, p) if self.M is None else self.M

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                s = "auto"
            elif isinstance(v, tuple):
                s = ", ".join(io._fmt(x) for x in v)
            else:
                s = io._fmt(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in _CONVERTERS:
                raise ConfigError(f"line {lineno}: unknown key {k!r}")
            values[k] = v
        return cls(**values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        return path

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_CONVERTERS = {
    "dim": int, "points": int, "boundary": str, "operator": str,
    "potential_seed": int, "potential_scale": float,
    "vector_potential_scale": float, "p": _tuple_of(float), "M": _opt_int,
    "alpha": _tuple_of(float), "per_decade": int, "recon_per_e": int,
    "corpus": _tuple_of(str), "seed": int, "band": int, "support_tol": float,
    "identity_tol": float, "residual_tol": float, "out": str,
}
CONFIG_KEYS = tuple(_CONVERTERS)


def make_operator(config: ExperimentConfig) -> SpectralOperator:
    """Operator of the configured kind; random potentials are seeded by
    ``potential_seed``."""
    grid = config.grid
    rng = np.random.default_rng(config.potential_seed)
    kind = config.operator
    if kind == "laplacian":
        return build_operator(kind, grid)
    V = rng.uniform(0.0, config.potential_scale, grid.size)
    if kind == "schrodinger":
        return build_operator(kind, grid, potential=V)
    if kind in ("magnetic", "magnetic_schrodinger"):
        A = [config.vector_potential_scale * _bandlimited(grid, rng, 2)
             for _ in range(grid.dim)]
        return build_operator("magnetic", grid, potential=V, vector_potential=A)
    raise ConfigError(f"unknown operator {kind!r}")


# -- corpus ------------------------------------------------------------------

def _bump_profile(grid: GridSpec, center, radius: float) -> np.ndarray:
    lat = grid.lattice()
    d = grid.lattice_offsets(lat, np.asarray(center)[None, :]).astype(float)
    r = np.sqrt(np.sum(d * d, axis=1)) * grid.h / radius
    out = np.zeros(grid.size)
    inside = r < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _bandlimited(grid: GridSpec, rng: np.random.Generator, band: int) -> np.ndarray:
    z = rng.standard_normal(grid.shape)
    zh = np.fft.fftn(z)
    k = np.fft.fftfreq(grid.points_per_side, 1.0 / grid.points_per_side)
    K = np.meshgrid(*([k] * grid.dim), indexing="ij")
    zh[np.max(np.abs(np.stack(K)), axis=0) > band] = 0.0
    v = np.real(np.fft.ifftn(zh)).reshape(-1)
    return v / np.abs(v).max()


def generate_function(name: str, grid: GridSpec, seed: int = 0, band: int = 8) -> Field:
    """One named test function (before mean projection)."""
    N = grid.points_per_side
    center = np.full(grid.dim, N // 2)
    lat = grid.lattice()
    base, _, arg = name.partition(":")
    if base == "spike":
        v = np.zeros(grid.size)
        v[grid.flat_index(center)] = 1.0 / grid.cell_volume
    elif base == "ball":
        d = grid.lattice_offsets(lat, center[None, :]).astype(float)
        v = (np.sqrt(np.sum(d * d, axis=1)) * grid.h < grid.side_length / 8).astype(float)
    elif base == "bump":
        v = _bump_profile(grid, center, grid.side_length / 4)
    elif base == "dipole":
        w = _bump_profile(grid, center - N // 4, grid.side_length / 8)
        # exact antisymmetry: the same values appear with both signs
        v = w - np.roll(w.reshape(grid.shape), N // 2, axis=0).reshape(-1)
    elif base == "cosine":
        k = int(arg or 1)
        v = np.cos(2 * np.pi * k * lat[:, 0] / N)
    elif base == "bandlimited":
        s = int(arg) if arg else seed
        v = _bandlimited(grid, np.random.default_rng(s), band)
    else:
        raise UnknownGeneratorError(f"unknown generator {name!r}")
    return Field(grid, v)


def generate_corpus(names: Sequence[str], grid: GridSpec, seed: int = 0,
                    band: int = 8) -> list[tuple[str, Field]]:
    """Named fields; on periodic grids all but the dipole have their mean
    removed (the dipole is already exactly mean-zero)."""
    out = []
    for name in names:
        f = generate_function(name, grid, seed, band)
        v = f.values
        if grid.periodic and not name.startswith("dipole"):
            v = v - v.mean()
        if not np.any(v):
            raise UnknownGeneratorError(f"generator {name!r} produced the zero function")
        out.append((name, Field(grid, v)))
    return out


# -- equivalence run ---------------------------------------------------------

RATIO_PAIRS = {
    "heat_over_phi": ("nt_heat", "nt_phi"),
    "heat_over_radial": ("nt_heat", "radial"),
    "budget_over_heat": ("budget", "nt_heat"),
    "budget_over_scriptM": ("budget", "script_M"),
    "area_over_heat": ("area", "nt_heat"),
    "grand_over_heat": ("grand", "nt_heat"),
    "phi_over_peetre": ("nt_phi", "peetre"),
}


@dataclass
class EquivalenceReport:
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    exit_code: int = 0
    files: list = field(default_factory=list)


def default_dictionary(N: int):
    """Seminorm-normalized {exp(-x^2), Phi, (1+x^2)^-4}."""
    members = [heat_symbol(), make_calderon_bundle(1).Phi, rational_symbol(4)]
    return [normalize_member(m, N) for m in members]


def _equivalence_rows(name: str, f: Field, op: SpectralOperator,
                      config: ExperimentConfig) -> list[dict]:
    grid = op.grid
    scales = ScaleGrid.for_grid(grid, config.per_decade)
    phi = make_calderon_bundle(1).Phi
    stage = "maximal"
    try:
        nt_heat = {a: nt_maximal(op, gaussian_symbol, f, scales, a) for a in config.alpha}
        base = {
            "area": area_function(op, f, scales),
            "radial": radial_maximal(op, f, scales),
            "nt_phi": nt_maximal(op, phi, f, scales, 1.0),
        }
        rows = []
        for p in config.p:
            n = grid.dim
            M = config.M_for(p)
            stage = "grand_maximal"
            grand = grand_maximal(op, default_dictionary(default_seminorm_order(n, p)), f, scales,
                                  default_seminorm_order(n, p))
            stage = "peetre"
            peetre = peetre_maximal(op, gaussian_symbol, f, scales, n / p + 1.0)
            stage = "decompose"
            bundle = make_calderon_bundle(M)
            rscales = ScaleGrid.for_reconstruction(op, config.recon_per_e)
            dec = atomic_decompose(op, f, p, M, rscales, bundle)
            val = [t.validation for t in dec.terms]
            row = {"function": name, "operator": op.kind, "p": p, "M": M}
            for a in config.alpha:
                row[f"nt_heat_a{a:g}"] = lp_quasinorm(nt_heat[a], p)
            heat1 = nt_heat[1.0] if 1.0 in nt_heat else nt_maximal(
                op, gaussian_symbol, f, scales, 1.0)
            row.update({
                "nt_heat": lp_quasinorm(heat1, p),
                "nt_phi": lp_quasinorm(base["nt_phi"], p),
                "radial": lp_quasinorm(base["radial"], p),
                "area": lp_quasinorm(base["area"], p),
                "peetre": lp_quasinorm(peetre, p),
                "grand": lp_quasinorm(grand, p),
                "script_M": dec.maximal_norm() if dec.maximal is not None else 0.0,
                "budget": dec.budget,
                "n_atoms": len(dec.terms),
                "residual": dec.relative_residual,
                "coverage": dec.coverage,
                "max_support_mass": max((v.max_support_mass for v in val), default=0.0),
                "max_identity_defect": max((v.identity_defect for v in val), default=0.0),
                "size_ratio_q2": max((v.size_ratio[2] for v in val), default=0.0),
                "size_ratio_qinf": max((v.size_ratio[math.inf] for v in val), default=0.0),
                "aperture_monotone": bool(all(
                    np.all(nt_heat[a].values <= nt_heat[b].values)
                    for a, b in zip(sorted(nt_heat), sorted(nt_heat)[1:]))),
            })
            rows.append(row)
        return rows
    except HardyError as exc:
        raise StageError(str(exc), name, op.kind, stage) from exc


def _summarize(rows: list[dict], config: ExperimentConfig) -> tuple[dict, int]:
    ratios = {}
    for key, (num, den) in RATIO_PAIRS.items():
        vals = [r[num] / r[den] for r in rows if r[den] > 0]
        if vals:
            lo, hi = min(vals), max(vals)
            ratios[key] = {"min": lo, "max": hi,
                           "spread": hi / lo if lo > 0 else math.inf,
                           "finite": bool(all(math.isfinite(v) for v in vals))}
    checks = {
        "support": all(r["max_support_mass"] <= config.support_tol for r in rows),
        "identity": all(r["max_identity_defect"] <= config.identity_tol for r in rows),
        "residual": all(r["residual"] <= config.residual_tol for r in rows),
        "aperture_monotone": all(r["aperture_monotone"] for r in rows),
    }
    exit_code = 0 if all(checks.values()) else 1
    summary = {"schema": SCHEMA_VERSION, "rows": len(rows), "ratios": ratios,
               "hard_invariants": checks, "exit_code": exit_code,
               "config": config.to_text().splitlines()}
    return summary, exit_code


def run_equivalence(config: ExperimentConfig, out: str | Path | None = None) -> EquivalenceReport:
    """Full pipeline per corpus entry; writes ``equivalence.csv`` and
    ``summary.json``. Exit code 0 iff support, identity, residual and
    aperture-monotonicity invariants hold for every row."""
    out = Path(config.out if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    if config.corpus:
        op = make_operator(config)
        for name, f in generate_corpus(config.corpus, op.grid, config.seed, config.band):
            log.info("equivalence: %s", name)
            rows.extend(_equivalence_rows(name, f, op, config))
    summary, code = _summarize(rows, config)
    csv_path = out / "equivalence.csv"
    if rows:
        io.write_rows(csv_path, rows)
    else:
        csv_path.write_text("function,operator,p\n")
    json_path = io.write_json(out / "summary.json", summary)
    return EquivalenceReport(rows, summary, code, [csv_path, json_path])


# -- kernel reports ----------------------------------------------------------

KERNEL_REPORT_COLUMNS = {
    "finite_propagation.csv": ["kappa", "t", "outside_mass"],
    "sup_bound.csv": ["kappa", "t", "sup_scaled", "spread"],
    "weighted_l2.csv": ["R", "s", "weighted_sum", "holder", "ratio"],
    "cross_scale.csv": ["s", "t", "ratio", "sup_kernel", "measured_C"],
    "gaussian_fit.csv": ["t", "C_t", "fitted_c", "stability_ratio"],
    "resolvent.csv": ["kappa", "t", "discrepancy"],
}


def run_kernel_reports(config: ExperimentConfig, out: str | Path | None = None) -> list[Path]:
    """One CSV per kernel-estimate checker, with the columns of
    :data:`KERNEL_REPORT_COLUMNS`."""
    out = Path(config.out if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    op = make_operator(config)
    grid = op.grid
    h, side, n = grid.h, grid.side_length, grid.dim
    files = []

    t_fp = np.geomspace(8 * h, 0.25 * side, 6)
    fp_rows, sup_rows = [], []
    for kappa in (0, 1, 2):
        rep = finite_propagation_report(op, kappa, t_fp)
        spread = rep.spread("sup_scaled")
        for r in rep.rows:
            fp_rows.append({"kappa": kappa, "t": r["t"], "outside_mass": r["outside_mass"]})
            sup_rows.append({"kappa": kappa, "t": r["t"], "sup_scaled": r["sup_scaled"],
                             "spread": spread})
    files.append(io.write_rows(out / "finite_propagation.csv", fp_rows,
                               KERNEL_REPORT_COLUMNS["finite_propagation.csv"]))
    files.append(io.write_rows(out / "sup_bound.csv", sup_rows,
                               KERNEL_REPORT_COLUMNS["sup_bound.csv"]))

    wl_rows = []
    for R in (4 / side, 8 / side, 16 / side):
        for s in (2.0, 4.0):
            wl_rows.extend(weighted_l2_report(op, smooth_cutoff(R), R, s).rows)
    files.append(io.write_rows(out / "weighted_l2.csv", wl_rows,
                               KERNEL_REPORT_COLUMNS["weighted_l2.csv"]))

    psi = first_order_symbol()
    # well inside the torus so periodization does not mask the decay
    t_big = 0.125 * side
    pairs = [(t_big * r, t_big) for r in (1.0, 0.5, 0.25, 0.125)]
    cs = cross_scale_decay_report(op, psi, psi, 1.0, pairs)
    files.append(io.write_rows(out / "cross_scale.csv", cs.rows,
                               KERNEL_REPORT_COLUMNS["cross_scale.csv"]))

    gf = gaussian_bound_report(op, np.geomspace(4 * h * h, 0.1, 12))
    gf_rows = [dict(r, stability_ratio=gf.stability_ratio) for r in gf.rows()]
    files.append(io.write_rows(out / "gaussian_fit.csv", gf_rows,
                               KERNEL_REPORT_COLUMNS["gaussian_fit.csv"]))

    rs_rows = [{"kappa": k, "t": t, "discrepancy": resolvent_check(op, t, k)}
               for k in (1, 2) for t in (0.1, 1.0)]
    files.append(io.write_rows(out / "resolvent.csv", rs_rows,
                               KERNEL_REPORT_COLUMNS["resolvent.csv"]))
    return files
