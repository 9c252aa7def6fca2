"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools
import math

import numpy as np


def fft_apply(F, t, values, h):
    """``F(t sqrt(L)) f`` for the 1D periodic second-difference Laplacian,
    diagonalized by the discrete Fourier transform."""
    N = values.size
    k = np.arange(N)
    lam = (2.0 - 2.0 * np.cos(2 * np.pi * k / N)) / h ** 2
    return np.real(np.fft.ifft(F(t * np.sqrt(lam)) * np.fft.fft(values)))


def periodic_eigenvalue(k, N, h):
    return (2.0 - 2.0 * math.cos(2 * math.pi * k / N)) / h ** 2


def kato_bruteforce(values, N, h):
    """``max_x sum_{y != x} |V(y)| h^3 / |x - y|`` on the 3D torus, by a plain
    loop over ``x`` with explicit wrapped offsets."""
    idx = np.array(list(itertools.product(range(N), repeat=3)))
    a = np.abs(values)
    best = 0.0
    for x in range(idx.shape[0]):
        d = np.abs(idx - idx[x])
        d = np.minimum(d, N - d) * h
        r = np.sqrt((d ** 2).sum(axis=1))
        r[x] = np.inf
        best = max(best, float(np.sum(a / r)) * h ** 3)
    return best


def whitney_bruteforce(O, N, sep=1.0):
    """Maximal dyadic intervals of a 1D dirichlet grid (N a power of two)
    inside ``O`` with ``dist(Q, O^c) >= sep * diam(Q)``; single points of
    ``O`` are accepted. Enumerates every dyadic interval."""
    O = np.asarray(O, dtype=bool)
    comp = np.flatnonzero(~O)
    h = 1.0 / N

    def ok(a, s):
        pts = np.arange(a, a + s)
        if not O[pts].all():
            return False
        if s == 1:
            return True
        d = min(abs(p - c) for p in pts for c in comp) * h
        return d >= sep * s * h

    accepted = []
    s = N
    while s >= 1:
        for a in range(0, N, s):
            if not ok(a, s):
                continue
            # maximal: no accepted ancestor
            anc, covered = s * 2, False
            while anc <= N:
                if ok(a - a % anc, anc):
                    covered = True
                    break
                anc *= 2
            if not covered:
                accepted.append((a, s))
        s //= 2
    return sorted(accepted)


def brute_cone_max(table, dist, radii):
    """``max_{k, y: dist[x, y] < radii[k]} table[y, k]`` by triple loop."""
    P, K = table.shape
    out = np.zeros(P)
    for x in range(P):
        best = 0.0
        for k in range(K):
            for y in range(P):
                if dist[x, y] < radii[k]:
                    best = max(best, table[y, k])
        out[x] = best
    return out
