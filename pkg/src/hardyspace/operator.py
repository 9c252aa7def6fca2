"""
Discrete non-negative self-adjoint operators and their functional calculus.

Every multiplier ``F(t sqrt(L))`` is applied through one cached dense
eigendecomposition ``L = U diag(lam) U^T``. Magnetic operators are complex
Hermitian; they are stored in the real form ``[[Re, -Im], [Im, Re]]`` acting
on stacked (real, imaginary) components, so the state space has twice as
many entries as the grid has points.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma

from .exceptions import (ConstructionError, PreconditionError, SymbolError,
                         UnsupportedDimensionError)
from .grid import Field, GridSpec

logger = logging.getLogger(__name__)

KINDS = ("laplacian", "schrodinger", "magnetic")
_KIND_ALIASES = {"magnetic_schrodinger": "magnetic"}


def gaussian_symbol(x):
    return np.exp(-np.square(x))


class SpectralOperator:
    """Symmetric PSD matrix with a cached eigendecomposition.

    Parameters
    ----------
    grid : GridSpec
    matrix : ndarray
        Real symmetric matrix of size ``ncomp * grid.size``.
    kind : str
    ncomp : int
        1 for real operators, 2 for the real form of a Hermitian operator.
    """

    def __init__(self, grid: GridSpec, matrix: np.ndarray, kind: str = "laplacian",
                 ncomp: int = 1, symmetry_tol: float = 1e-12,
                 negativity_tol: float = 1e-10, orthonormality_tol: float = 1e-10):
        matrix = np.asarray(matrix, dtype=float)
        n = ncomp * grid.size
        if matrix.shape != (n, n):
            raise ConstructionError(f"matrix shape {matrix.shape}, expected {(n, n)}")
        scale = np.abs(matrix).max(initial=0.0)
        asym = np.abs(matrix - matrix.T).max(initial=0.0)
        if asym > symmetry_tol * max(scale, 1.0):
            raise ConstructionError(f"matrix not symmetric (defect {asym:.3e})")
        matrix = 0.5 * (matrix + matrix.T)
        lam, vec = np.linalg.eigh(matrix)
        lam_max = max(lam[-1], 0.0)
        if lam[0] < -negativity_tol * max(lam_max, 1.0):
            raise ConstructionError(
                f"negative eigenvalue {lam[0]:.3e}; discretization is not PSD")
        lam = np.clip(lam, 0.0, None)
        ortho = np.abs(vec.T @ vec - np.eye(n)).max()
        if ortho > orthonormality_tol:
            raise ConstructionError(f"eigenvectors not orthonormal ({ortho:.3e})")
        matrix.setflags(write=False)
        lam.setflags(write=False)
        vec.setflags(write=False)
        self.grid = grid
        self.matrix = matrix
        self.kind = kind
        self.ncomp = ncomp
        self.eigenvalues = lam
        self.eigenvectors = vec

    def __repr__(self):
        return (f"SpectralOperator(kind={self.kind!r}, dim={self.grid.dim}, "
                f"N={self.grid.points_per_side}, boundary={self.grid.boundary!r})")

    @property
    def state_size(self) -> int:
        return self.ncomp * self.grid.size

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def kernel_tolerance(self) -> float:
        return 1e-9 * max(self.lambda_max, 1.0)

    @property
    def lambda_plus_min(self) -> float:
        """Smallest eigenvalue above the null-space tolerance."""
        pos = self.eigenvalues[self.eigenvalues > self.kernel_tolerance()]
        return float(pos[0]) if pos.size else float("nan")

    @property
    def null_space(self) -> np.ndarray:
        return self.eigenvectors[:, self.eigenvalues <= self.kernel_tolerance()]

    # -- state-space helpers -------------------------------------------------
    def lift(self, values) -> np.ndarray:
        """Embed real grid values (or a stack of columns) into state space."""
        v = np.asarray(values, dtype=float)
        if v.shape[0] == self.state_size:
            return v
        if v.shape[0] != self.grid.size:
            raise PreconditionError("values do not match the operator grid")
        if self.ncomp == 1:
            return v
        return np.concatenate([v, np.zeros_like(v)], axis=0)

    def modulus(self, state: np.ndarray) -> np.ndarray:
        """Pointwise modulus of a state vector (or stack along axis 0)."""
        if self.ncomp == 1:
            return np.abs(state)
        p = self.grid.size
        return np.hypot(state[:p], state[p:])

    def real_part(self, state: np.ndarray) -> np.ndarray:
        return state[: self.grid.size]

    def point_of_state(self) -> np.ndarray:
        """Grid point index of every state-space entry."""
        return np.tile(np.arange(self.grid.size), self.ncomp)

    # -- functional calculus -------------------------------------------------
    def multiplier(self, F: Callable, t: float | np.ndarray) -> np.ndarray:
        """``F(t * sqrt(lam))`` on the spectrum; shape ``(S,)`` or ``(S, K)``."""
        root = np.sqrt(self.eigenvalues)
        t_arr = np.asarray(t, dtype=float)
        arg = np.multiply.outer(root, t_arr)
        m = np.asarray(F(arg), dtype=float)
        if m.shape != arg.shape:
            m = np.broadcast_to(m, arg.shape).astype(float)
        if not np.all(np.isfinite(m)):
            raise SymbolError("symbol produced non-finite values on the spectrum")
        return m

    def coefficients(self, values) -> np.ndarray:
        return self.eigenvectors.T @ self.lift(values)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ coeffs

    def apply(self, F: Callable, t: float, values) -> np.ndarray:
        """State-space result of ``F(t sqrt(L))`` applied to ``values``."""
        c = self.coefficients(values)
        m = self.multiplier(F, t)
        if c.ndim == 2:
            m = m[:, None]
        return self.synthesize(m * c)

    def apply_scales(self, F: Callable, scales: Sequence[float], values) -> np.ndarray:
        """``F(t_k sqrt(L)) f`` for every scale; shape ``(S, K)``."""
        c = self.coefficients(values)
        m = self.multiplier(F, np.asarray(scales, dtype=float))
        return self.synthesize(m * c[:, None])

    def power_apply(self, values, k: int) -> np.ndarray:
        """``L^k`` applied with the sparse-stencil matrix (not the spectrum)."""
        v = self.lift(values)
        for _ in range(k):
            v = self.matrix @ v
        return v

    def spectral_matrix(self, F: Callable, t: float = 1.0) -> np.ndarray:
        m = self.multiplier(F, t)
        return (self.eigenvectors * m) @ self.eigenvectors.T


# -- construction -----------------------------------------------------------

def _neighbor_pairs(grid: GridSpec, axis: int):
    """Pairs ``(x, x + e_axis)`` of flat indices present in the grid."""
    lat = grid.lattice()
    nxt = lat.copy()
    nxt[:, axis] += 1
    n = grid.points_per_side
    if grid.periodic:
        nxt[:, axis] %= n
        keep = np.ones(grid.size, dtype=bool)
        if n == 1:
            keep[:] = False
    else:
        keep = nxt[:, axis] < n
    src = np.flatnonzero(keep)
    dst = np.ravel_multi_index(tuple(nxt[keep].T), grid.shape)
    return src, dst


def laplacian_matrix(grid: GridSpec) -> np.ndarray:
    """Standard ``2n+1``-point second-difference stencil divided by ``h^2``."""
    p = grid.size
    A = np.zeros((p, p))
    A[np.arange(p), np.arange(p)] = 2.0 * grid.dim
    for axis in range(grid.dim):
        src, dst = _neighbor_pairs(grid, axis)
        np.add.at(A, (src, dst), -1.0)
        np.add.at(A, (dst, src), -1.0)
    return A / grid.h ** 2


def magnetic_matrix(grid: GridSpec, vector_potential: Sequence, potential=None) -> np.ndarray:
    """Real form of ``(i grad - A)^2 + V`` with Peierls phases ``e^{-i A h}``."""
    p = grid.size
    H = np.zeros((p, p), dtype=complex)
    H[np.arange(p), np.arange(p)] = 2.0 * grid.dim
    if len(vector_potential) != grid.dim:
        raise PreconditionError("vector potential needs one component per axis")
    for axis, comp in enumerate(vector_potential):
        a = np.asarray(comp.values if isinstance(comp, Field) else comp,
                       dtype=float).reshape(-1)
        if a.size != p:
            raise PreconditionError("vector potential component has wrong size")
        src, dst = _neighbor_pairs(grid, axis)
        phase = np.exp(-1j * a[src] * grid.h)
        np.add.at(H, (src, dst), -phase)
        np.add.at(H, (dst, src), -np.conj(phase))
    H /= grid.h ** 2
    if potential is not None:
        H[np.arange(p), np.arange(p)] += _values(potential, p)
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def _values(f, size):
    v = np.asarray(f.values if isinstance(f, Field) else f, dtype=float).reshape(-1)
    if v.size != size:
        raise PreconditionError("potential has wrong size")
    if not np.all(np.isfinite(v)):
        raise PreconditionError("potential must be finite")
    return v


def build_operator(kind: str, grid: GridSpec, potential=None,
                   vector_potential=None) -> SpectralOperator:
    """Build and diagonalize a discrete operator.

    ``kind`` is one of ``laplacian``, ``schrodinger`` (adds ``diag(V)``) or
    ``magnetic`` (Peierls-phase hops plus optional ``V``).
    """
    kind = _KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise PreconditionError(f"unknown operator kind {kind!r}")
    if kind == "laplacian":
        return SpectralOperator(grid, laplacian_matrix(grid), kind)
    if kind == "schrodinger":
        A = laplacian_matrix(grid)
        if potential is not None:
            v = _values(potential, grid.size)
            if np.any(v < 0):
                logger.warning("schrodinger potential has negative values")
            A[np.arange(grid.size), np.arange(grid.size)] += v
        return SpectralOperator(grid, A, kind)
    if vector_potential is None:
        vector_potential = [np.zeros(grid.size)] * grid.dim
    return SpectralOperator(grid, magnetic_matrix(grid, vector_potential, potential),
                            kind, ncomp=2)


# -- functional calculus on fields -----------------------------------------

def _as_field(op: SpectralOperator, f) -> Field:
    if isinstance(f, Field):
        if f.grid != op.grid:
            raise PreconditionError("field and operator live on different grids")
        return f
    return Field(op.grid, f)


def spectral_apply(op: SpectralOperator, F: Callable, t: float, f) -> Field:
    """``F(t sqrt(L)) f``; for magnetic operators the real part is returned."""
    if not t > 0:
        raise PreconditionError("t must be positive")
    f = _as_field(op, f)
    return Field(op.grid, op.real_part(op.apply(F, t, f.values)))


def heat_apply(op: SpectralOperator, t: float, f) -> Field:
    """``exp(-t^2 L) f``."""
    return spectral_apply(op, gaussian_symbol, t, f)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Integral kernel with ``(F f)(x) = sum_y K(x, y) f(y) h^n``.

    For magnetic operators ``entries`` is complex.
    """

    grid: GridSpec
    entries: np.ndarray
    measure_convention: str = "(Ff)(x) = sum_y K(x,y) f(y) h^n"

    def apply(self, f) -> np.ndarray:
        v = np.asarray(f.values if isinstance(f, Field) else f, dtype=float)
        return self.entries @ v * self.grid.cell_volume


def kernel_matrix(op: SpectralOperator, F: Callable, t: float = 1.0) -> KernelMatrix:
    S = op.spectral_matrix(F, t)
    if op.ncomp == 2:
        p = op.grid.size
        S = S[:p, :p] + 1j * S[p:, :p]
    return KernelMatrix(op.grid, S / op.grid.cell_volume)


# -- Gaussian upper bound ------------------------------------------------------

@dataclass(frozen=True)
class GaussianFitReport:
    t_range: tuple[float, float]
    fitted_C: float
    fitted_c: float
    max_violation_ratio: float
    t_values: tuple[float, ...] = ()
    per_t_C: tuple[float, ...] = ()
    negative_mass: float = 0.0

    @property
    def stability_ratio(self) -> float:
        return self.max_violation_ratio

    def rows(self):
        return [{"t": t, "C_t": c, "fitted_c": self.fitted_c}
                for t, c in zip(self.t_values, self.per_t_C)]


def heat_kernel(op: SpectralOperator, t: float) -> KernelMatrix:
    """Kernel ``p_t`` of ``exp(-t L)`` (plain ``t``)."""
    return kernel_matrix(op, gaussian_symbol, math.sqrt(t))


def gaussian_bound_report(op: SpectralOperator, t_values: Sequence[float],
                          c_grid: Sequence[float] | None = None) -> GaussianFitReport:
    """Fit ``|p_t(x,y)| <= C t^{-n/2} exp(-|x-y|^2 / (c t))`` over ``t_values``.

    The candidate ``c`` minimizing the worst-case ``C`` is kept; the reported
    ratio is ``max_t C_t / min_t C_t`` at that ``c``.
    """
    t_values = np.asarray(sorted(t_values), dtype=float)
    if t_values.size == 0:
        raise PreconditionError("need at least one t value")
    if t_values[0] < 2 * op.grid.h ** 2 * (1 - 1e-12):
        logger.warning("t below the mesh scale; the continuum bound does not apply")
    c_grid = np.geomspace(1.0, 64.0, 49) if c_grid is None else np.asarray(c_grid, float)
    n = op.grid.dim
    D2 = np.square(_distance_matrix(op.grid))
    logC = np.empty((t_values.size, c_grid.size))
    neg = 0.0
    for a, t in enumerate(t_values):
        K = heat_kernel(op, t).entries
        if not np.iscomplexobj(K):
            neg = max(neg, float(-K.min()) / float(np.abs(K).max()))
        with np.errstate(divide="ignore"):
            logK = np.log(np.abs(K))
        for b, c in enumerate(c_grid):
            logC[a, b] = np.max(logK + D2 / (c * t)) + 0.5 * n * math.log(t)
    worst = logC.max(axis=0)
    best = int(np.argmin(worst))
    per_t = np.exp(logC[:, best])
    return GaussianFitReport(
        t_range=(float(t_values[0]), float(t_values[-1])),
        fitted_C=float(per_t.max()),
        fitted_c=float(c_grid[best]),
        max_violation_ratio=float(per_t.max() / per_t.min()),
        t_values=tuple(float(t) for t in t_values),
        per_t_C=tuple(float(c) for c in per_t),
        negative_mass=neg,
    )


def _distance_matrix(grid: GridSpec) -> np.ndarray:
    return grid.pairwise_distances()


def heat_domination_gap(op_v: SpectralOperator, op_free: SpectralOperator,
                        t: float) -> float:
    """``max (p_t^V - p_t^0)``; non-positive up to rounding when ``V >= 0``."""
    return float(np.max(heat_kernel(op_v, t).entries - heat_kernel(op_free, t).entries))


# -- resolvent identity ------------------------------------------------------

def _log_gauss_nodes(count: int = 64, u_min: float = 1e-8, u_max: float = 60.0):
    g, w = leggauss(count)
    lo, hi = math.log(u_min), math.log(u_max)
    s = 0.5 * (hi - lo) * g + 0.5 * (hi + lo)
    u = np.exp(s)
    return u, w * 0.5 * (hi - lo) * u


def resolvent_check(op: SpectralOperator, t: float, kappa: int,
                    nodes: int = 64) -> float:
    """Relative operator-norm gap between ``(I + t^2 L)^-kappa`` and the
    heat-semigroup integral ``int e^{-u t^2 L} e^{-u} u^{kappa-1} du / (kappa-1)!``.

    The first is formed from the spectrum; the second sums heat-semigroup
    matrices at log-Gauss nodes in ``u``.
    """
    if not 1 <= kappa <= 4:
        raise PreconditionError("kappa must lie in 1..4")
    direct = op.spectral_matrix(lambda x: (1.0 + np.square(x)) ** (-kappa), t)
    u, w = _log_gauss_nodes(nodes)
    quad = np.zeros_like(direct)
    weights = w * np.exp(-u) * u ** (kappa - 1) / math.factorial(kappa - 1)
    for uj, wj in zip(u, weights):
        quad += wj * op.spectral_matrix(gaussian_symbol, t * math.sqrt(uj))
    return float(np.linalg.norm(direct - quad, 2) / np.linalg.norm(direct, 2))


def resolvent_apply(op: SpectralOperator, t: float, kappa: int, f) -> Field:
    f = _as_field(op, f)
    return spectral_apply(op, lambda x: (1.0 + np.square(x)) ** (-kappa), t, f)


# -- Kato norm ---------------------------------------------------------------

@dataclass(frozen=True)
class KatoReport:
    norm: float
    negative_part_norm: float
    threshold: float
    below_threshold: bool


def kato_threshold(n: int) -> float:
    """``pi^{n/2} / Gamma(n/2 - 1)``."""
    return float(math.pi ** (n / 2) / gamma(n / 2 - 1))


def _kato_sup(grid: GridSpec, v: np.ndarray) -> float:
    a = np.abs(v)
    best = 0.0
    for rows in grid.row_chunks():
        d = grid.pairwise_distances(rows)
        with np.errstate(divide="ignore"):
            w = np.where(d > 0, 1.0 / d, 0.0)
        best = max(best, float(np.max(w @ a)))
    return best * grid.cell_volume


def kato_norm(V) -> KatoReport:
    """Discrete ``sup_x sum_{y != x} |V(y)| h^3 / |x - y|`` on a 3D grid."""
    if not isinstance(V, Field):
        raise PreconditionError("kato_norm expects a Field")
    if V.grid.dim != 3:
        raise UnsupportedDimensionError("the Kato norm is implemented for n = 3")
    v = V.values
    norm = _kato_sup(V.grid, v)
    neg = _kato_sup(V.grid, np.minimum(v, 0.0))
    c3 = kato_threshold(3)
    return KatoReport(norm=norm, negative_part_norm=neg, threshold=c3,
                      below_threshold=neg < c3)
