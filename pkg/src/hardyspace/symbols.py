"""
Even scalar symbols and kernel-estimate checkers.

A :class:`Symbol` wraps a vectorized even function of one variable together
with (optionally) exact derivatives. The Calderon bundle collects the compactly
supported bump, its cosine transform ``Phi``, ``Psi(x) = x^{2M} Phi(x)``, the
tail function ``eta`` and the normalizing constant ``c_psi``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import sympy
from numpy.polynomial.legendre import leggauss
from scipy.special import comb

from .exceptions import PreconditionError, SeminormError, SymbolError
from .operator import SpectralOperator

_GL8 = leggauss(8)


class Symbol:
    """An even real function ``F: R -> R`` evaluated elementwise.

    Parameters
    ----------
    func : callable
        Vectorized evaluator.
    description : str
    derivative : callable, optional
        ``derivative(x, k)`` returning the exact ``k``-th derivative.
    support : float, optional
        Radius ``r`` with ``F = 0`` outside ``(-r, r)``, when known.
    """

    def __init__(self, func: Callable, description: str = "", derivative=None,
                 support: float | None = None, derivative_order_available: int = 0):
        self._func = func
        self.description = description
        self._derivative = derivative
        self.support = support
        self.derivative_order_available = (
            10 ** 6 if derivative is not None else derivative_order_available)
        self._seminorms: dict[int, float] = {}

    def __repr__(self):
        return f"Symbol({self.description!r})"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = np.asarray(self._func(x), dtype=float)
        if y.shape != x.shape:
            y = np.broadcast_to(y, x.shape).astype(float)
        return y

    def derivative(self, x, k: int, step: float = 1e-3):
        """``k``-th derivative; exact when available, else central differences
        with Richardson extrapolation (raises :class:`SeminormError` when the
        two refinement levels disagree)."""
        if k == 0:
            return self(x)
        if self._derivative is not None:
            return np.asarray(self._derivative(np.asarray(x, dtype=float), k), dtype=float)
        return richardson_derivative(self, x, k, step)

    def scaled(self, c: float) -> "Symbol":
        deriv = None
        if self._derivative is not None:
            base = self._derivative
            deriv = lambda x, k: c * base(x, k)  # noqa: E731
        return Symbol(lambda x: c * self._func(x), f"{c!r}*{self.description}",
                      deriv, self.support, self.derivative_order_available)

    def __mul__(self, other: "Symbol") -> "Symbol":
        if not isinstance(other, Symbol):
            return self.scaled(float(other))
        return Symbol(lambda x: self(x) * other(x),
                      f"({self.description})*({other.description})")

    __rmul__ = __mul__

    def check_even(self, samples=None, tol: float = 1e-12) -> float:
        """Largest evenness defect on the samples; raises above ``tol``."""
        if samples is None:
            samples = np.linspace(0.0, 10.0, 101)
        x = np.asarray(samples, dtype=float)
        a, b = self(x), self(-x)
        defect = float(np.max(np.abs(a - b) / (1.0 + np.abs(a))))
        if defect > tol:
            raise SymbolError(f"{self.description} is not even (defect {defect:.2e})")
        return defect

    def seminorm(self, N: int) -> float:
        if N not in self._seminorms:
            self._seminorms[N] = dictionary_seminorm(self, N)
        return self._seminorms[N]

    def table(self, x) -> list[tuple[float, float]]:
        x = np.asarray(x, dtype=float)
        return list(zip(x.tolist(), self(x).tolist()))


def richardson_derivative(f: Callable, x, k: int, step: float = 1e-3,
                          rtol: float = 1e-6):
    x = np.asarray(x, dtype=float)
    # roundoff grows like eps / h^k, so higher orders need wider steps
    step = step * 2.0 ** (k - 1)

    def central(h):
        acc = np.zeros_like(x)
        for j in range(k + 1):
            acc += (-1) ** j * comb(k, j) * f(x + (k / 2.0 - j) * h)
        return acc / h ** k

    def richardson(h):
        return (4.0 * central(h / 2) - central(h)) / 3.0

    coarse, fine = richardson(step), richardson(step / 2)
    scale = max(float(np.max(np.abs(fine))), 1e-300)
    if float(np.max(np.abs(coarse - fine))) > rtol * scale:
        raise SeminormError(
            f"derivative of order {k} did not converge under refinement")
    return fine


# -- closed-form symbols -----------------------------------------------------

_X = sympy.Symbol("x", real=True)


def from_expression(expr, description: str | None = None) -> Symbol:
    """Symbol from a sympy expression in ``x``, with exact derivatives."""
    if isinstance(expr, str):
        expr = sympy.sympify(expr, locals={"x": _X})
    expr = expr.subs({v: _X for v in expr.free_symbols if v.name == "x"})
    func = sympy.lambdify(_X, expr, "numpy")

    @lru_cache(maxsize=None)
    def kth(k):
        return sympy.lambdify(_X, sympy.diff(expr, _X, k), "numpy")

    return Symbol(func, description or str(expr), lambda x, k: kth(k)(x))


def heat_symbol() -> Symbol:
    """``exp(-x^2)``: the heat semigroup ``e^{-t^2 L}``."""
    return from_expression(sympy.exp(-_X ** 2), "exp(-x^2)")


def heat_generator_symbol() -> Symbol:
    """``x^2 exp(-x^2)``: the operator ``t^2 L e^{-t^2 L}``."""
    return from_expression(_X ** 2 * sympy.exp(-_X ** 2), "x^2*exp(-x^2)")


def first_order_symbol() -> Symbol:
    """``x exp(-x^2)`` (vanishes at the origin)."""
    return from_expression(_X * sympy.exp(-_X ** 2), "x*exp(-x^2)")


def rational_symbol(power: int = 4) -> Symbol:
    return from_expression((1 + _X ** 2) ** (-power), f"(1+x^2)^-{power}")


def smooth_cutoff(R: float) -> Symbol:
    """``exp(1 - 1/(1 - (x/R)^2))`` on ``|x| < R``; equals 1 at the origin."""
    def func(x):
        u = np.abs(np.asarray(x, dtype=float)) / R
        out = np.zeros_like(u)
        inside = u < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
        return out
    return Symbol(func, f"cutoff[0,{R!r}]", support=R)


# -- bump and its transforms -------------------------------------------------

def _raw_bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def bump_mass(nodes: int = 2048) -> float:
    """``int exp(-1/(1-x^2)) dx`` by the trapezoid rule on ``[-1, 1]``.

    The integrand is smooth and flat at the endpoints, so the rule converges
    faster than any power of the node count.
    """
    x = np.linspace(-1.0, 1.0, nodes + 1)
    return float(np.sum(_raw_bump(x)) * (2.0 / nodes))


def make_bump(nodes: int = 2048) -> Symbol:
    """Even bump supported in ``(-1, 1)`` normalized to unit integral."""
    Z = bump_mass(nodes)
    return Symbol(lambda x: _raw_bump(x) / Z, "bump", support=1.0)


class _CosineTransform:
    """``Phi(xi) = int phi(x) cos(xi x) dx`` for an even ``phi`` on ``(-r, r)``.

    Values come from the trapezoid rule (exact up to aliasing, which is below
    rounding for ``|xi| < pi * nodes / r - 700``). A table with spacing
    ``table_step`` of values and first derivatives is grown on demand and
    interpolated by cubic Hermite polynomials.
    """

    def __init__(self, phi: Symbol, nodes: int = 4096, table_step: float = 5e-3,
                 block: float = 32.0, table_limit: float = 64.0):
        if phi.support is None:
            raise PreconditionError("cosine transform needs a compactly supported symbol")
        r = float(phi.support)
        self.delta = 2.0 * r / nodes
        self.x = np.arange(0, nodes // 2 + 1) * self.delta
        w = np.full(self.x.size, 2.0 * self.delta)
        w[0] = self.delta
        self.weights = w * phi(self.x)
        self.xi_limit = math.pi / self.delta - 700.0
        self.norm = float(np.sum(self.weights))
        if not self.norm > 0:
            raise SymbolError("bump has non-positive mass")
        self.step = table_step
        self.block = block
        # beyond this the table would cost more than direct summation
        self.table_limit = table_limit
        self._vals = np.empty(0)
        self._ders = np.empty(0)

    def direct(self, xi, k: int = 0):
        xi = np.abs(np.asarray(xi, dtype=float)) if k % 2 == 0 else np.asarray(xi, float)
        flat = xi.reshape(-1)
        out = np.empty(flat.size)
        wk = self.weights * self.x ** k / self.norm
        for s in range(0, flat.size, 4096):
            arg = np.multiply.outer(flat[s:s + 4096], self.x) + k * math.pi / 2
            out[s:s + 4096] = np.cos(arg) @ wk
        return out.reshape(xi.shape)

    def _ensure(self, xi_max: float):
        have = self._vals.size
        need = int(math.ceil(xi_max / self.step)) + 2
        if need <= have:
            return
        if xi_max > self.xi_limit:
            raise SymbolError(f"argument {xi_max:.1f} beyond quadrature resolution")
        need = int(math.ceil(need * self.step / self.block) * self.block / self.step) + 2
        grid = np.arange(have, need) * self.step
        self._vals = np.concatenate([self._vals, self.direct(grid, 0)])
        self._ders = np.concatenate([self._ders, self.direct(grid, 1)])

    def __call__(self, xi):
        a = np.abs(np.asarray(xi, dtype=float))
        if a.size == 0:
            return a.copy()
        far = a > self.table_limit
        if far.any():
            out = np.empty_like(a)
            out[far] = self.direct(a[far])
            out[~far] = self(a[~far])
            return out
        self._ensure(float(a.max()))
        s = a / self.step
        i = np.minimum(np.floor(s).astype(int), self._vals.size - 2)
        u = s - i
        y0, y1 = self._vals[i], self._vals[i + 1]
        d0, d1 = self._ders[i] * self.step, self._ders[i + 1] * self.step
        h00 = (1 + 2 * u) * (1 - u) ** 2
        h10 = u * (1 - u) ** 2
        h01 = u * u * (3 - 2 * u)
        h11 = u * u * (u - 1)
        # the odd first derivative picks up the sign of xi
        return h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1


def fourier_symbol(phi: Symbol, nodes: int = 4096, table_step: float = 5e-3) -> Symbol:
    """Cosine transform of a compactly supported even symbol, with ``Phi(0) = 1``."""
    ct = _CosineTransform(phi, nodes, table_step)
    sym = Symbol(ct, f"FT[{phi.description}]", derivative=ct.direct)
    sym.transform = ct
    return sym


def monomial_times(sym: Symbol, power: int, description: str | None = None) -> Symbol:
    """``x^power * sym(x)`` with Leibniz-rule derivatives."""
    def func(x):
        return np.power(x, power) * sym(x)

    def deriv(x, k):
        acc = np.zeros_like(np.asarray(x, dtype=float))
        for j in range(min(k, power) + 1):
            c = comb(k, j) * math.perm(power, j)
            acc = acc + c * np.power(x, power - j) * sym.derivative(x, k - j)
        return acc

    return Symbol(func, description or f"x^{power}*{sym.description}", deriv)


def calderon_constant(Psi: Symbol, points: int = 4096, u_min: float = 1e-7,
                      u_max: float = 12.0) -> float:
    """``1 / int_0^inf Psi(u) u e^{-u^2} du`` by trapezoid in ``s = log u``."""
    s = np.linspace(math.log(u_min), math.log(u_max), points)
    u = np.exp(s)
    g = Psi(u) * u * u * np.exp(-u * u)
    ds = s[1] - s[0]
    integral = ds * (np.sum(g) - 0.5 * (g[0] + g[-1]))
    if not integral > 0:
        raise SymbolError("Calderon integral is not positive")
    return float(1.0 / integral)


class _EtaTable:
    """``eta(x) = c_psi int_x^inf y Psi(y) e^{-y^2} dy`` on a cached grid."""

    def __init__(self, Psi: Symbol, c_psi: float, points: int = 4096,
                 cutoff: float = 30.0):
        self.c_psi = c_psi
        self.Psi = Psi
        self.cutoff = cutoff
        self.x = np.linspace(0.0, cutoff, points)
        g, w = _GL8
        a, b = self.x[:-1], self.x[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        y = mid[:, None] + half[:, None] * g[None, :]
        panels = np.sum(self._integrand(y) * w[None, :], axis=1) * half
        tail = np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]])
        # scale so that eta(0) = 1 holds exactly
        self.values = tail / tail[0]
        self.derivs = -c_psi * self._integrand(self.x)
        self.step = self.x[1] - self.x[0]

    def _integrand(self, y):
        return y * self.Psi(y) * np.exp(-y * y)

    def __call__(self, x):
        a = np.abs(np.asarray(x, dtype=float))
        out = np.zeros_like(a)
        inside = a < self.cutoff
        s = a[inside] / self.step
        i = np.minimum(np.floor(s).astype(int), self.x.size - 2)
        u = s - i
        y0, y1 = self.values[i], self.values[i + 1]
        d0, d1 = self.derivs[i] * self.step, self.derivs[i + 1] * self.step
        out[inside] = ((1 + 2 * u) * (1 - u) ** 2 * y0 + u * (1 - u) ** 2 * d0
                       + u * u * (3 - 2 * u) * y1 + u * u * (u - 1) * d1)
        return out

    def derivative(self, x, k):
        if k == 1:
            x = np.asarray(x, dtype=float)
            return -self.c_psi * self._integrand(x)
        return richardson_derivative(self, x, k)


def make_eta(Psi: Symbol, c_psi: float) -> Symbol:
    table = _EtaTable(Psi, c_psi)
    return Symbol(table, "eta", derivative=table.derivative)


@dataclass(frozen=True, eq=False)
class CalderonBundle:
    M: int
    phi_bump: Symbol
    Phi: Symbol
    Psi: Symbol
    eta: Symbol
    c_psi: float

    def scalar_reproduction(self, mu, scales) -> np.ndarray:
        """``c_psi sum_k Psi(t_k mu)(t_k mu)^2 e^{-(t_k mu)^2} dlog`` per ``mu``."""
        t = np.asarray(scales.values)
        u = np.multiply.outer(np.asarray(mu, dtype=float), t)
        g = self.Psi(u) * u * u * np.exp(-u * u)
        return self.c_psi * np.sum(g, axis=-1) * scales.dlog


@lru_cache(maxsize=8)
def make_calderon_bundle(M: int = 1) -> CalderonBundle:
    if M < 1:
        raise PreconditionError("M must be a positive integer")
    phi = make_bump()
    Phi = fourier_symbol(phi)
    Psi = monomial_times(Phi, 2 * M, f"x^{2 * M}*Phi")
    c = calderon_constant(Psi)
    return CalderonBundle(M, phi, Phi, Psi, make_eta(Psi, c), c)


# -- dictionary seminorm -----------------------------------------------------

def default_seminorm_order(n: int, p: float) -> int:
    return int(math.ceil(2 * (n / p + n + 1)))


def dictionary_seminorm(phi: Symbol, N: int, panel: float = 0.25,
                        x_max: float = 4000.0, batch: int = 64) -> float:
    """``int (1+|x|)^N sum_{k<=N} |phi^(k)(x)|^2 dx`` by composite Gauss-Legendre.

    Panels of slowly growing width are added outward in batches until the
    contribution of a whole batch is negligible.
    """
    g, w = _GL8
    edges = [0.0]
    width = panel
    while edges[-1] < x_max:
        edges.append(edges[-1] + width)
        if edges[-1] >= 16 and width < 4.0:
            width *= 1.05
    edges = np.asarray(edges)
    total = 0.0
    for s in range(0, edges.size - 1, batch):
        stop = min(s + batch, edges.size - 1)
        a, b = edges[s:stop], edges[s + 1:stop + 1]
        half = 0.5 * (b - a)
        y = (0.5 * (a + b))[:, None] + half[:, None] * g[None, :]
        acc = np.zeros_like(y)
        for k in range(N + 1):
            d = phi.derivative(y, k)
            acc += d * d
        part = float(np.sum(acc * (1.0 + y) ** N * w[None, :] * half[:, None]))
        if not math.isfinite(part):
            raise SeminormError("non-finite seminorm integrand")
        total += part
        if part <= 1e-16 * max(total, 1e-300):
            break
    return 2.0 * total


def normalize_member(phi: Symbol, N: int) -> Symbol:
    """Scale ``phi`` so its seminorm is at most one."""
    s = phi.seminorm(N)
    if s == 0.0:
        return phi
    c = (1.0 - 1e-12) / math.sqrt(s)
    out = phi.scaled(c)
    out._seminorms[N] = s * c * c
    out.description = f"normalized[{phi.description}]"
    return out


# -- kernel-estimate checkers ------------------------------------------------

@dataclass
class DecayReport:
    params: dict
    measured_constant: float
    rows: list = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return list(self.rows[0].keys()) if self.rows else []

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def spread(self, name: str) -> float:
        c = np.abs(self.column(name))
        return float(c.max() / c.min())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns)
            for r in self.rows:
                writer.writerow([repr(float(v)) for v in r.values()])


def _kernel_entries(op: SpectralOperator, F: Callable, t: float = 1.0) -> np.ndarray:
    S = op.spectral_matrix(F, t)
    if op.ncomp == 2:
        p = op.grid.size
        S = np.hypot(S[:p, :p], S[p:, :p])
    return S / op.grid.cell_volume


def finite_propagation_report(op: SpectralOperator, kappa: int,
                              t_values: Sequence[float], Phi: Symbol | None = None,
                              slack: float | None = None) -> DecayReport:
    """Relative squared l2 mass of ``K_{(t^2 L)^kappa Phi(t sqrt L)}`` outside
    the cone ``|x - y| <= t + slack`` and the scaled sup ``max|K| t^n``."""
    Phi = make_calderon_bundle(1).Phi if Phi is None else Phi
    h = op.grid.h
    slack = 5 * h if slack is None else slack
    D = op.grid.pairwise_distances()
    n = op.grid.dim
    rows = []
    for t in t_values:
        if t < 8 * h * (1 - 1e-12):
            raise PreconditionError("finite propagation is checked for t >= 8h")
        K = _kernel_entries(op, lambda x: x ** (2 * kappa) * Phi(x), t)
        total = float(np.sum(K * K))
        outside = D > t + slack
        mass = float(np.sum(K[outside] ** 2)) / total if total > 0 else 0.0
        rows.append({"t": float(t), "outside_mass": mass,
                     "sup_scaled": float(np.abs(K).max() * t ** n)})
    measured = max((r["outside_mass"] for r in rows), default=0.0)
    return DecayReport({"kappa": kappa, "slack": slack}, measured, rows)


def holder_surrogate(G: Callable, order: float, support: float = 1.0,
                     samples: int = 3001, pair_samples: int = 601) -> float:
    """Finite-difference stand-in for the ``C^order`` norm of ``G``."""
    u = np.linspace(-1.5 * support, 1.5 * support, samples)
    du = u[1] - u[0]
    m = int(math.floor(order))
    beta = order - m
    derivs = [np.asarray(G(u), dtype=float)]
    for _ in range(m):
        derivs.append(np.gradient(derivs[-1], du))
    norm = sum(float(np.max(np.abs(d))) for d in derivs)
    if beta > 0:
        idx = np.linspace(0, samples - 1, pair_samples).astype(int)
        top, uu = derivs[-1][idx], u[idx]
        diff = np.abs(top[:, None] - top[None, :])
        gap = np.abs(uu[:, None] - uu[None, :])
        off = gap > 0
        norm += float(np.max(diff[off] / gap[off] ** beta))
    return norm


def weighted_l2_report(op: SpectralOperator, F: Symbol, R: float, s: float,
                       epsilon: float = 0.1) -> DecayReport:
    """``max_x sum_y |K_{F(sqrt L)}(x,y)|^2 (1 + R|x-y|)^s h^n`` divided by
    ``R^n * ||F(R .)||^2`` with the Holder norm replaced by a surrogate."""
    probe = np.linspace(R * (1 + 1e-9), 3 * R, 257)
    if np.max(np.abs(F(probe))) > 1e-14:
        raise PreconditionError("symbol is not supported in [0, R]")
    K = _kernel_entries(op, F)
    D = op.grid.pairwise_distances()
    weighted = float(np.max(np.sum(K * K * (1.0 + R * D) ** s, axis=1))
                     * op.grid.cell_volume)
    holder = holder_surrogate(lambda u: F(R * u), s / 2 + epsilon)
    n = op.grid.dim
    ratio = 0.0 if holder == 0.0 else weighted / (R ** n * holder ** 2)
    row = {"R": float(R), "s": float(s), "weighted_sum": weighted,
           "holder": holder, "ratio": ratio}
    return DecayReport({"R": R, "s": s, "epsilon": epsilon}, ratio, [row])


def cross_scale_decay_report(op: SpectralOperator, psi1: Symbol, psi2: Symbol,
                             eta_exp: float,
                             scale_pairs: Sequence[tuple[float, float]]) -> DecayReport:
    """Measured constant in
    ``|K(x,y)| <= C (min/max) max^eta / (max + |x-y|)^{n+eta}``
    for the kernel of ``psi1(s sqrt L) psi2(t sqrt L)``."""
    for psi in (psi1, psi2):
        if abs(float(psi(np.array(0.0)))) > 1e-12:
            raise PreconditionError(f"{psi.description} does not vanish at 0")
    D = op.grid.pairwise_distances()
    n = op.grid.dim
    rows = []
    for s, t in scale_pairs:
        K = _kernel_entries(op, lambda x: psi1(s * x) * psi2(t * x))
        big, small = max(s, t), min(s, t)
        bound = (small / big) * big ** eta_exp / (big + D) ** (n + eta_exp)
        rows.append({"s": float(s), "t": float(t), "ratio": small / big,
                     "sup_kernel": float(np.abs(K).max()),
                     "measured_C": float(np.max(np.abs(K) / bound))})
    measured = max((r["measured_C"] for r in rows), default=0.0)
    return DecayReport({"eta": eta_exp, "psi1": psi1.description,
                        "psi2": psi2.description}, measured, rows)
