"""Nonlocal source terms ``P`` and ``Q`` in linear time.

With ``f = 2 U^2 y_xi + h``::

    P(xi) = 1/4 int exp(-|y(xi) - y(eta)|) f(eta) deta
    Q(xi) = -1/4 int sign(xi - eta) exp(-|y(xi) - y(eta)|) f(eta) deta

Because ``y`` is nondecreasing the kernel factorises across each node, so
both integrals follow from one forward and one backward recursion.  The
integrand has a kink at ``eta = xi``; Gregory end corrections on both half
lines restore high order there.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial

import numba
import numpy as np

from .coords import LagrangianState

#: number of Gregory correction differences applied at the kink
GREGORY_ORDER = 6


def _bernoulli(n: int) -> list[Fraction]:
    b = [Fraction(1)]
    for m in range(1, n + 1):
        b.append(-sum(comb(m + 1, k) * b[k] for k in range(m)) / (m + 1))
    return b


def _solve_exact(mat: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction]:
    n = len(rhs)
    a = [row[:] + [r] for row, r in zip(mat, rhs)]
    for c in range(n):
        p = next(r for r in range(c, n) if a[r][c] != 0)
        a[c], a[p] = a[p], a[c]
        for r in range(n):
            if r != c and a[r][c] != 0:
                fac = a[r][c] / a[c][c]
                a[r] = [x - fac * z for x, z in zip(a[r], a[c])]
    return [a[i][n] / a[i][i] for i in range(n)]


def gregory_weights(k: int) -> np.ndarray:
    """End correction weights ``c_0..c_k`` for the trapezoid rule.

    On a unit grid, ``trapezoid + sum_j c_j phi(j)`` integrates ``phi`` over
    ``[0, inf)`` exactly (up to the far end) for polynomials of degree <= k.
    The trapezoid error for ``x^p`` comes from the Euler-Maclaurin endpoint
    terms; the small Vandermonde system is solved in exact arithmetic.
    """
    if k == 0:
        return np.zeros(1)
    bern = _bernoulli(k + 2)
    mat = [[Fraction(j) ** p for j in range(k + 1)] for p in range(k + 1)]
    rhs = [Fraction(0)] * (k + 1)
    for p in range(1, k + 1, 2):
        rhs[p] = bern[p + 1] / factorial(p + 1) * factorial(p)
    return np.array([float(v) for v in _solve_exact(mat, rhs)])


def _table(order: int) -> np.ndarray:
    tab = np.zeros((order + 1, order + 1))
    for k in range(order + 1):
        tab[k, :k + 1] = gregory_weights(k)
    return tab


_TABLE = _table(GREGORY_ORDER)


@numba.njit(cache=True)
def _pq(y, s, f, dxi, tab, order, A, B, P, Q):
    # A and B are the one-sided sums of s = w f including node i itself
    n = y.size
    A[0] = s[0]
    for i in range(1, n):
        A[i] = np.exp(-(y[i] - y[i - 1])) * A[i - 1] + s[i]
    B[n - 1] = s[n - 1]
    for i in range(n - 2, -1, -1):
        B[i] = np.exp(-(y[i + 1] - y[i])) * B[i + 1] + s[i]
    half = 0.5 * dxi
    for i in range(n):
        # trapezoid sums over the left and right half lines ending at node i
        left = 0.0 if i == 0 else (A[i] if i == n - 1 else A[i] - half * f[i])
        right = 0.0 if i == n - 1 else (B[i] if i == 0 else B[i] - half * f[i])
        kl = min(order, i)
        for m in range(kl + 1):
            left += dxi * tab[kl, m] * np.exp(-(y[i] - y[i - m])) * f[i - m]
        kr = min(order, n - 1 - i)
        for m in range(kr + 1):
            right += dxi * tab[kr, m] * np.exp(-(y[i + m] - y[i])) * f[i + m]
        P[i] = 0.25 * (left + right)
        Q[i] = -0.25 * (left - right)


@dataclass
class KernelWorkspace:
    """Scratch arrays for the two recursions; one per concurrent caller."""

    forward_accum: np.ndarray
    backward_accum: np.ndarray

    @classmethod
    def for_size(cls, n: int) -> "KernelWorkspace":
        return cls(np.empty(n), np.empty(n))


def trapezoid_weights(n: int, dxi: float) -> np.ndarray:
    w = np.full(n, dxi)
    w[0] = w[-1] = 0.5 * dxi
    return w


def source_density(U: np.ndarray, yxi: np.ndarray, h: np.ndarray) -> np.ndarray:
    return 2.0 * U * U * yxi + h


def kernel_pq(y: np.ndarray, f: np.ndarray, dxi: float, ws: KernelWorkspace | None = None,
              order: int = GREGORY_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """``P`` and ``Q`` for positions ``y`` and source density ``f`` on a uniform grid."""
    y = np.ascontiguousarray(y, dtype=float)
    f = np.ascontiguousarray(f, dtype=float)
    n = y.size
    if f.shape != y.shape or n < 2:
        raise ValueError("y and f must be 1-d arrays of equal length >= 2")
    if ws is None or ws.forward_accum.size != n:
        ws = KernelWorkspace.for_size(n)
    tab = _TABLE if order == GREGORY_ORDER else _table(order)
    s = trapezoid_weights(n, dxi) * f
    P = np.empty(n)
    Q = np.empty(n)
    _pq(y, s, f, float(dxi), tab, int(order), ws.forward_accum, ws.backward_accum, P, Q)
    return P, Q


def eval_pq(X: LagrangianState, ws: KernelWorkspace | None = None) -> tuple[np.ndarray, np.ndarray]:
    return kernel_pq(X.y, source_density(X.U, X.yxi, X.h), X.dxi, ws)


def eval_P(X: LagrangianState, ws: KernelWorkspace | None = None) -> np.ndarray:
    return eval_pq(X, ws)[0]


def eval_Q(X: LagrangianState, ws: KernelWorkspace | None = None) -> np.ndarray:
    return eval_pq(X, ws)[1]
