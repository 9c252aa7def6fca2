"""
Uniform box grids, grid functions, cubes and L^p quasi-norms.

Points are indexed row-major over integer lattice coordinates ``j`` with
physical position ``j * h``. Periodic grids use the torus metric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import CapacityError, PreconditionError

DEFAULT_CAP = 8192
BOUNDARIES = ("periodic", "dirichlet")


@dataclass(frozen=True)
class GridSpec:
    """A uniform grid with ``points_per_side ** dim`` points.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 to 3.
    points_per_side : int
        Number of lattice points along each axis.
    spacing : float, optional
        Mesh width ``h``. Defaults to ``1 / points_per_side`` (unit side).
    boundary : {'periodic', 'dirichlet'}
    cap : int
        Upper bound on the total point count.
    """

    dim: int = 1
    points_per_side: int = 128
    spacing: float | None = None
    boundary: str = "periodic"
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise PreconditionError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.points_per_side < 1:
            raise PreconditionError("points_per_side must be positive")
        if self.spacing is None:
            object.__setattr__(self, "spacing", 1.0 / self.points_per_side)
        if not self.spacing > 0:
            raise PreconditionError("spacing must be positive")
        if self.boundary not in BOUNDARIES:
            raise PreconditionError(f"unknown boundary {self.boundary!r}")
        if self.size > self.cap:
            raise CapacityError(
                f"grid has {self.size} points, cap is {self.cap}")

    @property
    def h(self) -> float:
        return float(self.spacing)

    @property
    def side_length(self) -> float:
        return self.points_per_side * self.h

    @property
    def size(self) -> int:
        return self.points_per_side ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_side,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    def lattice(self) -> np.ndarray:
        """Integer coordinates of every point, shape ``(size, dim)``."""
        idx = np.indices(self.shape).reshape(self.dim, -1).T
        return np.ascontiguousarray(idx)

    def positions(self) -> np.ndarray:
        return self.lattice() * self.h

    def flat_index(self, coord: Sequence[int]) -> int:
        coord = np.asarray(coord, dtype=int)
        if self.periodic:
            coord = coord % self.points_per_side
        elif np.any((coord < 0) | (coord >= self.points_per_side)):
            raise PreconditionError(f"point {tuple(coord)} outside grid")
        return int(np.ravel_multi_index(tuple(coord), self.shape))

    def coord(self, index: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(index, self.shape))

    def lattice_offsets(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Absolute per-axis lattice offsets between coordinate arrays
        (broadcasting), wrapped on periodic grids."""
        d = np.abs(np.asarray(a) - np.asarray(b))
        if self.periodic:
            d = np.minimum(d, self.points_per_side - d)
        return d

    def pairwise_distances(self, rows: np.ndarray | None = None) -> np.ndarray:
        """Euclidean (torus) distances from ``rows`` to every grid point."""
        lat = self.lattice()
        src = lat if rows is None else lat[np.asarray(rows)]
        d = self.lattice_offsets(src[:, None, :], lat[None, :, :])
        return np.sqrt(np.sum(d.astype(float) ** 2, axis=-1)) * self.h

    def row_chunks(self, budget: int = 4_000_000) -> Iterable[np.ndarray]:
        """Index chunks so that a ``(chunk, size)`` array stays under budget."""
        step = max(1, budget // max(self.size, 1))
        for start in range(0, self.size, step):
            yield np.arange(start, min(start + step, self.size))

    def distance_to_set(self, mask: np.ndarray) -> np.ndarray:
        """Distance from every point to the nearest point of ``mask``;
        ``inf`` where the mask is empty."""
        mask = np.asarray(mask, dtype=bool)
        out = np.full(self.size, np.inf)
        if not mask.any():
            return out
        lat = self.lattice()
        targets = lat[mask]
        for rows in self.row_chunks(budget=max(4_000_000, len(targets))):
            d = self.lattice_offsets(lat[rows][:, None, :], targets[None, :, :])
            out[rows] = np.sqrt(np.min(np.sum(d.astype(float) ** 2, axis=-1),
                                       axis=1))
        return out * self.h


@dataclass(frozen=True, eq=False)
class Field:
    """A real function on the points of a grid."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise PreconditionError(
                f"field has {v.size} values, grid has {self.grid.size}")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def constant(cls, grid: GridSpec, c: float = 1.0) -> "Field":
        return cls(grid, np.full(grid.size, float(c)))

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise PreconditionError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Field(self.grid, self.values / self._other(c))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __abs__(self):
        return Field(self.grid, np.abs(self.values))

    def __len__(self):
        return self.grid.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def norm(self, p: float = 2.0) -> float:
        return lp_quasinorm(self, p)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


def lp_quasinorm(f, p: float, grid: GridSpec | None = None) -> float:
    """Discrete ``(sum |f|^p h^n)^(1/p)``; ``p = inf`` gives the max norm."""
    if isinstance(f, Field):
        grid, v = f.grid, f.values
    else:
        if grid is None:
            raise PreconditionError("a grid is required for raw arrays")
        v = np.asarray(f, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise PreconditionError("non-finite values")
    if not p > 0:
        raise PreconditionError(f"p must be positive, got {p}")
    a = np.abs(v)
    if math.isinf(p):
        return float(a.max(initial=0.0))
    peak = a.max(initial=0.0)
    if peak == 0.0:
        return 0.0
    # scale out the peak so small p does not underflow
    s = np.sum((a / peak) ** p) * grid.cell_volume
    return float(peak * s ** (1.0 / p))


def distance(grid: GridSpec, x: Sequence[int], y: Sequence[int]) -> float:
    """Distance between two lattice points given by integer coordinates."""
    d = grid.lattice_offsets(np.asarray(x, dtype=int), np.asarray(y, dtype=int))
    return float(np.sqrt(np.sum(d.astype(float) ** 2)) * grid.h)


def ball_points(grid: GridSpec, center: Sequence[int], radius: float) -> np.ndarray:
    """Flat indices of points strictly closer than ``radius`` to ``center``."""
    if radius < 0:
        raise PreconditionError("radius must be non-negative")
    c = grid.flat_index(center)
    d = grid.pairwise_distances(np.array([c]))[0]
    return np.flatnonzero(d < radius)


@dataclass(frozen=True)
class Cube:
    """An axis-parallel box of lattice points.

    ``center`` and ``sizes`` are in lattice units; a cube built from a corner
    with ``s`` points per axis covers exactly those points and has side
    ``s * h``. Dilation keeps the center and scales the sizes.
    """

    grid: GridSpec
    center: tuple[float, ...]
    sizes: tuple[float, ...]

    @classmethod
    def from_corner(cls, grid: GridSpec, corner: Sequence[int],
                    size: int | Sequence[int]) -> "Cube":
        if np.isscalar(size):
            size = (int(size),) * grid.dim
        corner = tuple(int(c) for c in corner)
        center = tuple(c + (s - 1) / 2.0 for c, s in zip(corner, size))
        return cls(grid, center, tuple(float(s) for s in size))

    @property
    def corner(self) -> tuple[int, ...]:
        return tuple(int(round(c - (s - 1) / 2.0))
                     for c, s in zip(self.center, self.sizes))

    @property
    def side(self) -> float:
        """Side length ``l(Q)`` (largest axis extent for non-cubic boxes)."""
        return max(self.sizes) * self.grid.h

    @property
    def diameter(self) -> float:
        return float(np.sqrt(np.sum(np.square(self.sizes)))) * self.grid.h

    @property
    def volume(self) -> float:
        return float(np.prod(self.sizes)) * self.grid.cell_volume

    def dilate(self, k: float) -> "Cube":
        return Cube(self.grid, self.center, tuple(k * s for s in self.sizes))

    def mask(self) -> np.ndarray:
        """Points ``x`` with ``|x - center|`` inside the half-sizes (l-inf)."""
        lat = self.grid.lattice().astype(float)
        c = np.asarray(self.center)
        d = np.abs(lat - c)
        if self.grid.periodic:
            n = self.grid.points_per_side
            d = np.minimum(d, n - d)
            inside = d <= np.asarray(self.sizes) / 2.0 + 1e-9
            # a box at least as wide as the torus covers the whole axis
            inside |= (np.asarray(self.sizes) >= n)[None, :]
        else:
            inside = d <= np.asarray(self.sizes) / 2.0 + 1e-9
        return np.all(inside, axis=1)

    def points(self) -> np.ndarray:
        return np.flatnonzero(self.mask())

    def contains(self, index: int) -> bool:
        return bool(self.mask()[index])
