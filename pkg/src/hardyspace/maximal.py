"""
Maximal and square functions over a discrete scale grid.

Every operator first tabulates ``|F(t_k sqrt L) f(y)|`` for all grid points
``y`` and scales ``t_k``, then reduces over cones ``|x - y| < a t_k``. Because
the cone radius grows with ``k``, a suffix reduction over scales followed by a
single gather per pair ``(x, y)`` evaluates the cone exactly.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import PreconditionError
from .grid import Field, GridSpec
from .operator import SpectralOperator, gaussian_symbol
from .symbols import CalderonBundle, Symbol, default_seminorm_order

log = logging.getLogger(__name__)

MAX_DLOG = 0.25


@dataclass(frozen=True)
class ScaleGrid:
    """Geometric scales ``t_k = t_min * rho^k``, ``k = 0..count-1``."""

    t_min: float
    t_max: float
    count: int

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max) or self.count < 2:
            raise PreconditionError("need 0 < t_min < t_max and count >= 2")
        if self.dlog > MAX_DLOG:
            raise PreconditionError(
                f"scale spacing dlog={self.dlog:.3f} exceeds {MAX_DLOG}")

    @property
    def rho(self) -> float:
        return (self.t_max / self.t_min) ** (1.0 / (self.count - 1))

    @property
    def dlog(self) -> float:
        return math.log(self.t_max / self.t_min) / (self.count - 1)

    @property
    def values(self) -> np.ndarray:
        v = self.t_min * np.exp(self.dlog * np.arange(self.count))
        v[-1] = self.t_max
        return v

    def __len__(self):
        return self.count

    def refined(self, factor: int = 2) -> "ScaleGrid":
        return ScaleGrid(self.t_min, self.t_max, factor * (self.count - 1) + 1)

    def fits(self, grid: GridSpec) -> bool:
        """True when ``h <= t_min`` and ``t_max <= side``."""
        eps = 1e-12
        return (self.t_min >= grid.h * (1 - eps)
                and self.t_max <= grid.side_length * (1 + eps))

    @classmethod
    def per_factor(cls, t_min: float, t_max: float, points: float,
                   factor: float = 10.0) -> "ScaleGrid":
        """``points`` scales per multiplicative ``factor`` (at least)."""
        span = math.log(t_max / t_min) / math.log(factor)
        return cls(t_min, t_max, max(2, int(math.ceil(points * span)) + 1))

    @classmethod
    def for_grid(cls, grid: GridSpec, per_decade: int = 64) -> "ScaleGrid":
        """Default maximal-function scales on ``[h, side/2]``."""
        return cls.per_factor(grid.h, grid.side_length / 2, per_decade, 10.0)

    @classmethod
    def for_reconstruction(cls, op: SpectralOperator, per_e: int = 64,
                           low: float = 0.1, high: float = 10.0) -> "ScaleGrid":
        """Scales covering the nonzero spectrum:
        ``[low / sqrt(lam_max), high / sqrt(lam_plus_min)]``.

        These extend below ``h`` and may exceed the side length; use
        :meth:`fits` to tell whether the grid invariants hold.
        """
        t_min = low / math.sqrt(op.lambda_max)
        t_max = high / math.sqrt(op.lambda_plus_min)
        return cls.per_factor(t_min, t_max, per_e, math.e)


@dataclass(frozen=True)
class ConeParams:
    aperture: float = 1.0
    peetre_lambda: float | None = None
    grand_N: int | None = None

    def __post_init__(self):
        if not self.aperture > 0:
            raise PreconditionError("aperture must be positive")

    def lambda_for(self, n: int, p: float) -> float:
        lam = n / p + 1.0 if self.peetre_lambda is None else self.peetre_lambda
        if not lam > n / p:
            raise PreconditionError(f"Peetre lambda {lam} must exceed n/p = {n / p}")
        return lam

    def N_for(self, n: int, p: float) -> int:
        return default_seminorm_order(n, p) if self.grand_N is None else self.grand_N


# -- tables and cone reductions ----------------------------------------------

def _values_on(op: SpectralOperator, f) -> np.ndarray:
    if isinstance(f, Field):
        if f.grid != op.grid:
            raise PreconditionError("field and operator live on different grids")
        return f.values
    v = np.asarray(f, dtype=float).reshape(-1)
    if v.size != op.grid.size:
        raise PreconditionError("values do not match the operator grid")
    return v


def scale_table(op: SpectralOperator, F: Callable, f, scales: ScaleGrid) -> np.ndarray:
    """``|F(t_k sqrt L) f(y)|`` with shape ``(points, scales)``."""
    return op.modulus(op.apply_scales(F, scales.values, _values_on(op, f)))


def _cone_reduce(grid: GridSpec, table: np.ndarray, radii: np.ndarray,
                 mode: str = "max") -> np.ndarray:
    """Reduce ``table[y, k]`` over ``{(y, k): |x - y| < radii[k]}`` per ``x``.

    ``radii`` must be increasing.
    """
    P, K = table.shape
    pad = np.zeros((P, K + 1))
    if mode == "max":
        pad[:, :K] = np.maximum.accumulate(table[:, ::-1], axis=1)[:, ::-1]
    else:
        pad[:, :K] = np.cumsum(table[:, ::-1], axis=1)[:, ::-1]
    out = np.empty(P)
    cols = np.arange(P)[None, :]
    for rows in grid.row_chunks(budget=2_000_000):
        d = grid.pairwise_distances(rows)
        k0 = np.searchsorted(radii, d, side="right")
        gathered = pad[cols, k0]
        out[rows] = gathered.max(axis=1) if mode == "max" else gathered.sum(axis=1)
    return out


def _check_normalized(F: Callable, name: str = "symbol"):
    v = float(np.asarray(F(np.array([0.0]))).reshape(-1)[0])
    if abs(v - 1.0) > 1e-10:
        warnings.warn(f"{name} has F(0) = {v:.6g}, not 1", stacklevel=3)


# -- maximal functions -------------------------------------------------------

def area_function(op: SpectralOperator, f, scales: ScaleGrid) -> Field:
    """Discrete area function

    ``S f(x)^2 = sum_k sum_{|x-y| < t_k} |t_k^2 L e^{-t_k^2 L} f(y)|^2 h^n dlog / t_k^n``.

    Scales below the mesh width are dropped with a warning.
    """
    grid = op.grid
    t = scales.values
    keep = t >= grid.h * (1 - 1e-12)
    if not keep.all():
        warnings.warn(f"{int((~keep).sum())} scales below h contribute nothing",
                      stacklevel=2)
    table = scale_table(op, lambda x: x * x * np.exp(-x * x), f, scales)[:, keep]
    tk = t[keep]
    if tk.size == 0:
        return Field.zeros(grid)
    weights = table * table / tk[None, :] ** grid.dim
    s2 = _cone_reduce(grid, weights, tk, mode="sum") * grid.cell_volume * scales.dlog
    return Field(grid, np.sqrt(s2))


def nt_maximal(op: SpectralOperator, F: Callable, f, scales: ScaleGrid,
               alpha: float = 1.0) -> Field:
    """``sup_{|y-x| < alpha t} |F(t sqrt L) f(y)|`` over the scale grid."""
    if not alpha > 0:
        raise PreconditionError("alpha must be positive")
    _check_normalized(F, getattr(F, "description", "symbol"))
    table = scale_table(op, F, f, scales)
    return Field(op.grid, _cone_reduce(op.grid, table, alpha * scales.values))


def heat_maximal(op: SpectralOperator, f, scales: ScaleGrid, alpha: float = 1.0) -> Field:
    """Non-tangential maximal function of the heat semigroup."""
    return nt_maximal(op, gaussian_symbol, f, scales, alpha)


def radial_maximal(op: SpectralOperator, f, scales: ScaleGrid,
                   F: Callable = gaussian_symbol) -> Field:
    """``sup_t |F(t sqrt L) f(x)|``."""
    return Field(op.grid, scale_table(op, F, f, scales).max(axis=1))


def peetre_maximal(op: SpectralOperator, F: Callable, f, scales: ScaleGrid,
                   lam: float) -> Field:
    """``sup_{z, s} |F(s sqrt L) f(z)| (1 + |x - z| / s)^{-lam}``."""
    if not lam > 0:
        raise PreconditionError("lambda must be positive")
    grid = op.grid
    table = scale_table(op, F, f, scales)
    t = scales.values
    out = np.zeros(grid.size)
    for rows in grid.row_chunks(budget=2_000_000):
        d = grid.pairwise_distances(rows)
        acc = np.zeros(len(rows))
        for k in range(t.size):
            w = np.exp(-lam * np.log1p(d / t[k]))
            np.maximum(acc, np.max(w * table[None, :, k], axis=1), out=acc)
        out[rows] = acc
    return Field(grid, out)


def grand_maximal(op: SpectralOperator, dictionary: Sequence[Symbol], f,
                  scales: ScaleGrid, N: int) -> Field:
    """Pointwise max of aperture-one maximal functions over a finite,
    seminorm-normalized dictionary (a lower bound for the full class)."""
    if len(dictionary) == 0:
        raise PreconditionError("dictionary is empty")
    out = None
    for phi in dictionary:
        s = phi.seminorm(N)
        if s > 1.0 + 1e-9:
            raise PreconditionError(
                f"{phi.description} has seminorm {s:.4g} > 1 for N={N}")
        table = scale_table(op, phi, f, scales)
        m = _cone_reduce(op.grid, table, scales.values)
        out = m if out is None else np.maximum(out, m)
    return Field(op.grid, out)


def script_M(op: SpectralOperator, bundle: CalderonBundle, f,
             scales: ScaleGrid) -> Field:
    """``sup_{|x-y| < 5 sqrt(n) t} (|t^2 L e^{-t^2 L} f(y)| + |eta(t sqrt L) f(y)|)``."""
    n = op.grid.dim
    v = _values_on(op, f)
    coeffs = op.coefficients(v)
    t = scales.values
    m1 = op.multiplier(lambda x: x * x * np.exp(-x * x), t)
    m2 = op.multiplier(bundle.eta, t)
    table = (op.modulus(op.synthesize(m1 * coeffs[:, None]))
             + op.modulus(op.synthesize(m2 * coeffs[:, None])))
    return Field(op.grid, _cone_reduce(op.grid, table, 5 * math.sqrt(n) * t))
