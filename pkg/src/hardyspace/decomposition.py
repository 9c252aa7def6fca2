"""
Atomic decomposition driven by the composite maximal function.

Pipeline: ``script_M f`` -> dyadic level sets ``O_i`` -> Whitney cubes per
level -> a partition of the discrete upper half-space ``(y, t_k)`` into tent
cells -> one atom per cell built from the Calderon reproducing formula.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import (PartitionError, PreconditionError, SupportViolation,
                         TrivialFunctionError)
from .grid import Cube, Field, GridSpec, lp_quasinorm
from .maximal import ScaleGrid, _values_on, script_M
from .operator import SpectralOperator
from .symbols import CalderonBundle, make_calderon_bundle

SUPPORT_TOL = 1e-8
IDENTITY_TOL = 1e-10
BALL_FACTOR = 30


def default_M(n: int, p: float) -> int:
    return int(math.floor(n / 2 * (1 / p - 1))) + 1


# -- level sets --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LevelSetFamily:
    """Nested masks ``O_i = {mf > 2^i}`` for ``i_min <= i <= i_max``."""

    grid: GridSpec
    i_min: int
    i_max: int
    masks: np.ndarray  # (levels, points)

    @property
    def levels(self) -> range:
        return range(self.i_min, self.i_max + 1)

    def mask(self, i: int) -> np.ndarray:
        if i < self.i_min:
            return np.ones(self.grid.size, dtype=bool)
        if i > self.i_max:
            return np.zeros(self.grid.size, dtype=bool)
        return self.masks[i - self.i_min]

    def is_nested(self) -> bool:
        m = self.masks
        return bool(np.all(m[1:] <= m[:-1]))


def level_sets(mf) -> LevelSetFamily:
    """Dyadic superlevel sets of a nonnegative field."""
    if not isinstance(mf, Field):
        raise PreconditionError("level_sets expects a Field")
    v = mf.values
    if np.any(v < 0):
        raise PreconditionError("maximal function must be nonnegative")
    vmax = float(v.max())
    if vmax == 0.0:
        raise TrivialFunctionError("maximal function vanishes identically")
    positive = v[v > 0]
    i_min = int(math.floor(math.log2(float(positive.min())))) - 1
    i_max = int(math.ceil(math.log2(vmax)))
    thresholds = np.exp2(np.arange(i_min, i_max + 1, dtype=float))
    masks = v[None, :] > thresholds[:, None]
    return LevelSetFamily(mf.grid, i_min, i_max, masks)


# -- Whitney cubes -----------------------------------------------------------

@dataclass(frozen=True)
class WhitneyCube:
    cube: Cube
    level_index: int
    dist_to_complement: float

    @property
    def side(self) -> float:
        return self.cube.side


def _split(corner, sizes):
    """Dyadic children of a box; odd sizes split as ceil/floor."""
    parts = []
    for c, s in zip(corner, sizes):
        if s == 1:
            parts.append([(c, 1)])
        else:
            a = (s + 1) // 2
            parts.append([(c, a), (c + a, s - a)])
    for combo in np.ndindex(*[len(p) for p in parts]):
        yield (tuple(parts[d][combo[d]][0] for d in range(len(parts))),
               tuple(parts[d][combo[d]][1] for d in range(len(parts))))


def whitney(O, grid: GridSpec, level: int = 0, separation: float | None = None,
            dist: np.ndarray | None = None) -> list[WhitneyCube]:
    """Maximal dyadic boxes ``Q`` of the domain with ``Q`` inside ``O`` and
    ``dist(Q, O^c) >= separation * diam(Q)``.

    The default separation ``1 / (2 sqrt(n))`` (that is, half a side) makes
    every accepted non-root box satisfy ``5Q`` meeting ``O^c``. Single points
    of ``O`` are always accepted. A full mask returns the whole domain.
    """
    O = np.asarray(O, dtype=bool).reshape(-1)
    if O.size != grid.size:
        raise PreconditionError("mask does not match grid")
    if not O.any():
        return []
    N = grid.points_per_side
    root = ((0,) * grid.dim, (N,) * grid.dim)
    if O.all():
        return [WhitneyCube(Cube.from_corner(grid, *root), level, math.inf)]
    sep = 0.5 / math.sqrt(grid.dim) if separation is None else separation
    if dist is None:
        dist = grid.distance_to_set(~O)
    Ob = O.reshape(grid.shape)
    Db = dist.reshape(grid.shape)
    out: list[WhitneyCube] = []
    stack = [root]
    while stack:
        corner, sizes = stack.pop()
        sl = tuple(slice(c, c + s) for c, s in zip(corner, sizes))
        inside = Ob[sl]
        if not inside.any():
            continue
        cube = Cube.from_corner(grid, corner, sizes)
        if inside.all():
            d = float(Db[sl].min())
            if d >= sep * cube.diameter * (1 - 1e-12) or max(sizes) == 1:
                out.append(WhitneyCube(cube, level, d))
                continue
        # children pushed in reverse so they pop in lexicographic order
        stack.extend(list(_split(corner, sizes))[::-1])
    return out


# -- tent cells --------------------------------------------------------------

@dataclass(frozen=True)
class TentCell:
    owner: tuple[int, int]
    cell_id: int
    size: int
    whitney: WhitneyCube


@dataclass(eq=False)
class CellPartition:
    """Owner label for every ``(point, scale)`` pair; ``-1`` is the residual."""

    labels: np.ndarray  # (points, scales)
    cells: list[TentCell]
    scales: ScaleGrid
    residual_reasons: dict = field(default_factory=dict)

    @property
    def coverage(self) -> float:
        return float(np.mean(self.labels >= 0))

    def members(self, cell_id: int) -> np.ndarray:
        return np.argwhere(self.labels == cell_id)


def build_cells(levels: LevelSetFamily, cubes: dict[int, list[WhitneyCube]],
                scales: ScaleGrid) -> CellPartition:
    """Assign each ``(y, t_k)`` to the Whitney cube of its tent level that
    contains the tilted point ``y + floor(3 t_k / h) (1, ..., 1)``.

    The level of ``(y, t)`` is the largest ``i`` with ``B(y, 4 sqrt(n) t)``
    inside ``O_i``. On a bounded domain the tilted point is clamped to the
    last row. Pairs with ``t > 3 l(Q)`` or no tent level go to the residual.
    """
    grid = levels.grid
    n, N, P = grid.dim, grid.points_per_side, grid.size
    t = scales.values
    K = t.size
    radius = 4 * math.sqrt(n) * t
    cells: list[TentCell] = []
    owner_at = {}
    sides = {}
    offset = {}
    for i in levels.levels:
        lst = cubes.get(i, [])
        if not lst:
            continue
        lookup = np.full(P, -1, dtype=np.int64)
        offset[i] = len(cells)
        for j, wc in enumerate(lst):
            pts = wc.cube.points()
            if np.any(lookup[pts] >= 0):
                raise PartitionError(f"Whitney cubes overlap at level {i}")
            lookup[pts] = j
            cells.append(TentCell((i, j), len(cells), 0, wc))
        if not np.array_equal(lookup >= 0, levels.mask(i)):
            raise PartitionError(f"Whitney cubes do not tile O_{i}")
        owner_at[i] = lookup
        sides[i] = np.array([wc.side for wc in lst])

    level_of = np.full((P, K), levels.i_min - 1, dtype=np.int64)
    for i in sorted(owner_at):
        d = levels.grid.distance_to_set(~levels.mask(i))
        level_of[d[:, None] >= radius[None, :]] = i

    lat = grid.lattice()
    labels = np.full((P, K), -1, dtype=np.int64)
    reasons = {"no_level": 0, "scale_cutoff": 0}
    for k in range(K):
        shift = int(math.floor(3 * t[k] / grid.h + 1e-9))
        tilted = lat + shift
        if grid.periodic:
            tilted %= N
        else:
            # clamping keeps the tilted point within 3t of y and inside the tent ball
            np.minimum(tilted, N - 1, out=tilted)
        tidx = np.ravel_multi_index(tuple(tilted.T), grid.shape)
        lev = level_of[:, k]
        for i in owner_at:
            sel = lev == i
            if not sel.any():
                continue
            j = owner_at[i][tidx[sel]]
            if np.any(j < 0):
                raise PartitionError("tilted point left its level set")
            ok = t[k] <= 3 * sides[i][j] * (1 + 1e-12)
            reasons["scale_cutoff"] += int((~ok).sum())
            rows = np.flatnonzero(sel)[ok]
            labels[rows, k] = offset[i] + j[ok]
        reasons["no_level"] += int((~np.isin(lev, list(owner_at))).sum())

    counts = np.bincount(labels[labels >= 0], minlength=len(cells))
    cells = [TentCell(c.owner, c.cell_id, int(counts[c.cell_id]), c.whitney)
             for c in cells]
    return CellPartition(labels, cells, scales, reasons)


# -- reconstruction ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Reconstruction:
    field: Field
    relative_error: float
    kernel_fraction: float


def _kernel_projection(op: SpectralOperator, v: np.ndarray) -> np.ndarray:
    Z = op.null_space
    if Z.shape[1] == 0:
        return np.zeros(op.state_size)
    return Z @ (Z.T @ op.lift(v))


def calderon_reconstruct(op: SpectralOperator, bundle: CalderonBundle, f,
                         scales: ScaleGrid) -> Reconstruction:
    """``c_psi sum_k Psi(t_k sqrt L) t_k^2 L e^{-t_k^2 L} f dlog``; the error is
    measured against ``f`` minus its component in ``ker L``."""
    v = _values_on(op, f)
    c = op.coefficients(v)
    m = bundle.scalar_reproduction(np.sqrt(op.eigenvalues), scales)
    out = op.real_part(op.synthesize(m * c))
    ker = op.real_part(_kernel_projection(op, v))
    norm_f = float(np.linalg.norm(v))
    kernel_fraction = float(np.linalg.norm(ker)) / norm_f if norm_f else 0.0
    if kernel_fraction > 1e-12:
        warnings.warn(f"f has a ker(L) component ({kernel_fraction:.2e}); "
                      "only the orthogonal part is reproduced", stacklevel=2)
    target = v - ker
    tn = float(np.linalg.norm(target))
    err = float(np.linalg.norm(out - target)) / tn if tn else 0.0
    return Reconstruction(Field(op.grid, out), err, kernel_fraction)


# -- atoms -------------------------------------------------------------------

@dataclass
class AtomValidation:
    identity_defect: float
    support_mass: tuple[float, ...]
    size_ratio: dict
    support_tol: float = SUPPORT_TOL

    @property
    def max_support_mass(self) -> float:
        return max(self.support_mass)

    @property
    def support_ok(self) -> bool:
        return self.max_support_mass <= self.support_tol

    @property
    def identity_ok(self) -> bool:
        return self.identity_defect <= IDENTITY_TOL

    @property
    def passed(self) -> bool:
        return self.support_ok and self.identity_ok


@dataclass(eq=False)
class AtomTerm:
    """``lam * a`` with ``a = L^M b``; ``b`` and ``a`` are state vectors."""

    level: int
    index: int
    lam: float
    b: np.ndarray
    a: np.ndarray
    cube: Cube
    M: int
    p: float
    b_hat: np.ndarray | None = field(default=None, repr=False)
    validation: AtomValidation | None = None

    @property
    def ball(self) -> Cube:
        return self.cube.dilate(BALL_FACTOR)

    @property
    def r_ball(self) -> float:
        return BALL_FACTOR / 2 * self.cube.side


def validate_atom(op: SpectralOperator, term: AtomTerm, qs: Sequence[float] = (2, math.inf),
                  support_tol: float = SUPPORT_TOL, strict: bool = False) -> AtomValidation:
    """Check ``a = L^M b``, support of ``L^k b`` in the ball ``30 Q`` and report
    ``||(r^2 L)^k b||_q / (r^{2M} |B|^{1/q - 1/p})`` maximized over ``k``.

    Support mass is the squared l2 mass outside the ball relative to the total.
    ``|B|`` is the nominal measure of ``30 Q``.
    With ``strict`` a support failure raises :class:`SupportViolation`.
    """
    grid = op.grid
    b = op.lift(term.b)
    a = op.lift(term.a)
    lmb = op.power_apply(b, term.M)
    na = float(np.linalg.norm(a))
    defect = float(np.linalg.norm(a - lmb)) / na if na else float(np.linalg.norm(lmb))
    ball = term.ball
    inside = np.tile(ball.mask(), op.ncomp)
    r = term.r_ball
    # nominal measure (30 l)^n, consistent with r_B = 15 l even when the
    # ball wraps around the torus
    B = ball.volume
    masses = []
    ratios = {q: 0.0 for q in qs}
    v = b
    for k in range(term.M + 1):
        if k:
            v = op.matrix @ v
        tot = float(np.sum(v * v))
        masses.append(float(np.sum(v[~inside] ** 2)) / tot if tot else 0.0)
        mod = op.modulus(v) * r ** (2 * k)
        for q in qs:
            norm = lp_quasinorm(mod, q, grid)
            inv_q = 0.0 if math.isinf(q) else 1.0 / q
            scale = r ** (2 * term.M) * B ** (inv_q - 1.0 / term.p)
            ratios[q] = max(ratios[q], norm / scale)
    rep = AtomValidation(defect, tuple(masses), ratios, support_tol)
    if strict and not rep.support_ok:
        raise SupportViolation(
            f"atom ({term.level}, {term.index}) support mass {rep.max_support_mass:.2e}")
    return rep


@dataclass(eq=False)
class Decomposition:
    terms: list[AtomTerm]
    synthesis: Field
    residual: Field
    f: Field
    p: float
    M: int
    scales: ScaleGrid | None = None
    maximal: Field | None = None
    levels: LevelSetFamily | None = None
    partition: CellPartition | None = None
    kernel_fraction: float = 0.0

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([t.lam for t in self.terms])

    @property
    def budget(self) -> float:
        lam = np.abs(self.lambdas)
        if lam.size == 0:
            return 0.0
        top = lam.max()
        return float(top * np.sum((lam / top) ** self.p) ** (1 / self.p))

    @property
    def relative_residual(self) -> float:
        nf = float(np.linalg.norm(self.f.values))
        return float(np.linalg.norm(self.residual.values)) / nf if nf else 0.0

    @property
    def coverage(self) -> float:
        return self.partition.coverage if self.partition is not None else 1.0

    def maximal_norm(self) -> float:
        return lp_quasinorm(self.maximal, self.p) if self.maximal is not None else 0.0

    def size_ratios(self, q: float = math.inf) -> np.ndarray:
        return np.array([t.validation.size_ratio[q] for t in self.terms
                         if t.validation is not None])

    def all_supports_ok(self) -> bool:
        return all(t.validation.passed for t in self.terms if t.validation is not None)


def synthesize_terms(op: SpectralOperator, terms: Sequence[AtomTerm]) -> np.ndarray:
    """Fixed-order ``sum lam * a`` (real part on the grid)."""
    acc = np.zeros(op.grid.size)
    for t in terms:
        acc = acc + t.lam * op.real_part(op.lift(t.a))
    return acc


def atomic_decompose(op: SpectralOperator, f, p: float = 1.0, M: int | None = None,
                     scales: ScaleGrid | None = None,
                     bundle: CalderonBundle | None = None,
                     separation: float | None = None,
                     validate: bool = True) -> Decomposition:
    """Decompose ``f`` as ``sum lam_ij a_ij + residual``.

    ``b_ij = lam_ij^{-1} c_psi sum_k t_k^{2M} Phi(t_k sqrt L)
    (chi_{T_ij} t_k^2 L e^{-t_k^2 L} f) dlog`` with ``lam_ij = 2^i |Q_ij|^{1/p}``
    and ``a_ij = L^M b_ij``; the residual is ``f - sum lam a``.
    """
    if not 0 < p <= 1:
        raise PreconditionError("p must lie in (0, 1]")
    grid = op.grid
    n = grid.dim
    M = default_M(n, p) if M is None else int(M)
    if not M > n / 2 * (1 / p - 1):
        raise PreconditionError(f"M={M} too small for p={p} in dimension {n}")
    if bundle is None or bundle.M != M:
        bundle = make_calderon_bundle(M)
    scales = ScaleGrid.for_reconstruction(op) if scales is None else scales
    v = np.array(_values_on(op, f), dtype=float)
    ker = op.real_part(_kernel_projection(op, v))
    kfrac = float(np.linalg.norm(ker)) / max(float(np.linalg.norm(v)), 1e-300)
    if kfrac > 1e-12:
        warnings.warn(f"removing ker(L) component of relative size {kfrac:.2e}",
                      stacklevel=2)
        v = v - ker
        if float(np.linalg.norm(v)) <= 1e-12 * float(np.linalg.norm(v + ker)):
            v = np.zeros_like(v)
    fld = Field(grid, v)
    mf = script_M(op, bundle, fld, scales)
    try:
        levels = level_sets(mf)
    except TrivialFunctionError:
        zero = Field.zeros(grid)
        return Decomposition([], zero, fld - zero, fld, p, M, scales, mf,
                             kernel_fraction=kfrac)

    cubes = {}
    for i in levels.levels:
        O = levels.mask(i)
        if O.any():
            cubes[i] = whitney(O, grid, level=i, separation=separation)
    part = build_cells(levels, cubes, scales)

    t = scales.values
    lam_spec = op.eigenvalues
    coeffs = op.coefficients(v)
    U = op.eigenvectors
    S = op.state_size
    points = op.point_of_state()
    ncells = len(part.cells)
    b_hat = np.zeros((ncells, S))
    g_mult = op.multiplier(lambda x: x * x * np.exp(-x * x), t)
    phi_mult = op.multiplier(bundle.Phi, t)
    cols = np.arange(S)
    for k in range(t.size):
        g = U @ (g_mult[:, k] * coeffs)
        owners = part.labels[points, k]
        keep = owners >= 0
        if not keep.any():
            continue
        A = sp.csr_matrix((g[keep], (owners[keep], cols[keep])), shape=(ncells, S))
        w = bundle.c_psi * t[k] ** (2 * M) * scales.dlog
        b_hat += (w * np.asarray(A @ U)) * phi_mult[None, :, k]

    terms = []
    for cell in part.cells:
        if cell.size == 0:
            continue
        i, j = cell.owner
        cube = cell.whitney.cube
        lam = 2.0 ** i * cube.volume ** (1.0 / p)
        bh = b_hat[cell.cell_id] / lam
        b = U @ bh
        a = U @ (lam_spec ** M * bh)
        term = AtomTerm(i, j, lam, b, a, cube, M, p, bh)
        if validate:
            term.validation = validate_atom(op, term)
        terms.append(term)
    synth = synthesize_terms(op, terms)
    synthesis = Field(grid, synth)
    residual = Field(grid, v - synth)
    return Decomposition(terms, synthesis, residual, fld, p, M, scales, mf,
                         levels, part, kfrac)


def interior_bound_check(op: SpectralOperator, term: AtomTerm | None, K: int,
                         samples: int | None = None) -> float:
    """``max |L^K (lam b)(x)| / (2^i l^{2(M-K)})`` over points within
    ``30 sqrt(n) l`` of the cube; ``0`` for an empty cell."""
    if term is None or term.b_hat is None:
        return 0.0
    if not 0 <= K <= term.M:
        raise PreconditionError("need 0 <= K <= M")
    grid = op.grid
    ell = term.cube.side
    u = term.lam * (op.eigenvectors @ (op.eigenvalues ** K * term.b_hat))
    mod = op.modulus(u)
    near = grid.distance_to_set(term.cube.mask()) < BALL_FACTOR * math.sqrt(grid.dim) * ell
    idx = np.flatnonzero(near)
    if samples is not None and idx.size > samples:
        idx = idx[np.linspace(0, idx.size - 1, samples).astype(int)]
    denom = 2.0 ** term.level * ell ** (2 * (term.M - K))
    return float(mod[idx].max() / denom) if idx.size else 0.0
