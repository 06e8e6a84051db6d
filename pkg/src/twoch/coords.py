"""Eulerian and Lagrangian descriptions and the maps between them.

An Eulerian state is ``(u, rho, mu)`` on the real line.  A Lagrangian state
lives on a uniform label grid ``xi`` and carries the characteristic position
``y = xi + zeta``, the velocity ``U``, the energy density ``h``, the density
``r`` and the derivatives ``y_xi`` and ``U_xi``.  ``to_lagrangian`` picks the
labelling ``y + H = id``; ``to_eulerian`` pushes the Lagrangian densities
forward and turns flat stretches of ``y`` into point masses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .measures import (
    PLATEAU_TOL,
    RadonMeasure,
    WeightedSamples,
    cell_integrals,
    plateau_cells,
    plateau_runs,
    push_forward,
    push_forward_density,
)


class InvalidStateError(ValueError):
    """A state violates the invariants of its description."""


class GridError(ValueError):
    """A label grid is unsuitable (non-uniform, too short, too coarse)."""


def _arr(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class EulerianState:
    """``u`` and ``rho`` sampled on ``x_grid`` plus the energy measure ``mu``."""

    x_grid: np.ndarray
    u: np.ndarray
    rho: np.ndarray
    mu: RadonMeasure

    def __post_init__(self):
        x, u, rho = _arr(self.x_grid), _arr(self.u), _arr(self.rho)
        if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
            raise InvalidStateError("x_grid must be strictly increasing with >= 2 points")
        if u.shape != x.shape or rho.shape != x.shape:
            raise InvalidStateError("u and rho must match x_grid")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(rho))):
            raise InvalidStateError("non-finite samples")
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "rho", rho)

    # u and rho are read as cubic splines through the samples; a piecewise
    # linear reading leaves kinks that the label grid aliases into noise
    @cached_property
    def _u_spline(self) -> CubicSpline:
        return CubicSpline(self.x_grid, self.u)

    @cached_property
    def _rho_spline(self) -> CubicSpline:
        return CubicSpline(self.x_grid, self.rho)

    def _clamped(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, float), self.x_grid[0], self.x_grid[-1])

    def u_x(self) -> np.ndarray:
        return self._u_spline(self.x_grid, 1)

    def u_x_at(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        inside = (x >= self.x_grid[0]) & (x <= self.x_grid[-1])
        return np.where(inside, self._u_spline(self._clamped(x), 1), 0.0)

    def u_at(self, x) -> np.ndarray:
        return self._u_spline(self._clamped(x))

    def rho_at(self, x) -> np.ndarray:
        return self._rho_spline(self._clamped(x))

    def u_l2_squared(self) -> float:
        return float(simpson(self.u * self.u, x=self.x_grid))

    def energy(self) -> float:
        return self.u_l2_squared() + self.mu.total_mass()

    def consistency_residual(self) -> float:
        """Relative gap between the density of ``mu`` and ``u_x^2 + rho^2``."""
        g = self.mu.density_at(self.x_grid)
        ref = self.u_x() ** 2 + self.rho ** 2
        scale = max(float(np.max(np.abs(ref))), float(np.max(g)), 1e-300)
        return float(np.max(np.abs(g - ref)) / scale)

    def to_dict(self) -> dict:
        return {"x_grid": self.x_grid.tolist(), "u": self.u.tolist(),
                "rho": self.rho.tolist(), "mu": self.mu.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "EulerianState":
        return cls(np.asarray(d["x_grid"], float), np.asarray(d["u"], float),
                   np.asarray(d["rho"], float), RadonMeasure.from_dict(d["mu"]))


def check_uniform(xi: np.ndarray, rtol: float = 1e-9) -> float:
    xi = np.asarray(xi, float)
    if xi.ndim != 1 or xi.size < 4:
        raise GridError("label grid needs at least four points")
    d = np.diff(xi)
    if np.any(d <= 0) or np.max(np.abs(d - d.mean())) > rtol * d.mean():
        raise GridError("label grid must be uniform and increasing")
    return float((xi[-1] - xi[0]) / (xi.size - 1))


@dataclass(frozen=True)
class LagrangianState:
    """Lagrangian fields on a uniform label grid.

    ``yxi`` and ``Uxi`` are carried as independent unknowns; the relation
    ``yxi * h = Uxi**2 + r**2`` is an invariant of the flow, not enforced here.
    """

    xi: np.ndarray
    zeta: np.ndarray
    U: np.ndarray
    h: np.ndarray
    r: np.ndarray
    yxi: np.ndarray
    Uxi: np.ndarray
    dxi: float = field(init=False)

    def __post_init__(self):
        xi = _arr(self.xi)
        object.__setattr__(self, "dxi", check_uniform(xi))
        object.__setattr__(self, "xi", xi)
        for name in ("zeta", "U", "h", "r", "yxi", "Uxi"):
            a = _arr(getattr(self, name))
            if a.shape != xi.shape:
                raise InvalidStateError(f"{name} has shape {a.shape}, expected {xi.shape}")
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.xi.size

    @property
    def y(self) -> np.ndarray:
        return self.xi + self.zeta

    def H(self) -> np.ndarray:
        """Cumulative energy ``int_{xi_0}^{xi} h``."""
        c = cell_integrals(self.h, np.full(self.n - 1, self.dxi))
        return np.concatenate(([0.0], np.cumsum(c)))

    def weights(self) -> np.ndarray:
        w = np.full(self.n, self.dxi)
        w[0] = w[-1] = 0.5 * self.dxi
        return w

    def energy(self) -> float:
        return float(np.sum(self.weights() * (self.U ** 2 * self.yxi + self.h)))

    def constraint_residual(self) -> float:
        """Sup of ``|yxi h - Uxi^2 - r^2|`` relative to ``max(1, max h)``."""
        res = self.yxi * self.h - self.Uxi ** 2 - self.r ** 2
        return float(np.max(np.abs(res)) / max(1.0, float(np.max(np.abs(self.h)))))

    def arrays(self) -> np.ndarray:
        return np.stack([self.zeta, self.yxi, self.U, self.Uxi, self.h, self.r])

    @classmethod
    def from_arrays(cls, xi, a: np.ndarray) -> "LagrangianState":
        return cls(xi, a[0], a[2], a[4], a[5], a[1], a[3])

    def replace(self, **kw) -> "LagrangianState":
        d = {k: getattr(self, k) for k in ("xi", "zeta", "U", "h", "r", "yxi", "Uxi")}
        d.update(kw)
        return LagrangianState(**d)

    def invariant_violations(self, tol: float = 1e-6) -> list[str]:
        """Names of invariants that fail by more than ``tol`` (relative)."""
        out = []
        scale = max(1.0, float(np.max(np.abs(self.h))))
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            out.append("finite")
        if np.min(self.yxi) < -tol:
            out.append("yxi>=0")
        if np.min(self.h) < -tol * scale:
            out.append("h>=0")
        if np.min(self.yxi + self.h) <= 0:
            out.append("yxi+h>0")
        if self.constraint_residual() > tol:
            out.append("yxi*h=Uxi^2+r^2")
        dy = np.diff(self.y)
        if np.min(dy) < -tol * self.dxi:
            out.append("y nondecreasing")
        return out

    def validate(self, tol: float = 1e-6) -> None:
        bad = self.invariant_violations(tol)
        if bad:
            raise InvalidStateError("invariants violated: " + ", ".join(bad))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("xi", "zeta", "U", "h", "r", "yxi", "Uxi")}

    @classmethod
    def from_dict(cls, d: dict) -> "LagrangianState":
        return cls(*(np.asarray(d[k], float) for k in ("xi", "zeta", "U", "h", "r", "yxi", "Uxi")))


def label_grid(e: EulerianState, n: int, margin: float = 0.0) -> np.ndarray:
    """Uniform label grid just covering ``e`` (plus ``margin`` on both sides)."""
    lo = min(float(e.x_grid[0]), e.mu.support_bounds()[0]) - margin
    hi = max(float(e.x_grid[-1]), e.mu.support_bounds()[1]) + e.mu.total_mass() + margin
    return np.linspace(lo, hi, n)


def _inverse_G(mu: RadonMeasure, xi: np.ndarray):
    """Generalised inverse of ``G(x) = x + mu((-inf, x))``.

    Returns ``y`` and the density of ``mu`` at ``y``; nodes that land on the
    vertical segment of ``G`` at an atom are flagged in the boolean mask.
    """
    knots = np.union1d(mu.grid, mu.atom_positions)
    dens = mu.density_at(knots)
    amass = np.zeros(knots.size)
    if mu.atom_positions.size:
        amass[np.searchsorted(knots, mu.atom_positions)] = mu.atom_masses
    gl = knots + mu.cdf(knots)
    gr = gl + amass

    k = np.searchsorted(gr, xi, side="left")
    y = np.empty_like(xi)
    g = np.zeros_like(xi)
    on_atom = np.zeros(xi.shape, bool)

    left = k == 0
    hit = np.zeros(xi.shape, bool)
    inside = k < knots.size
    hit[inside] = gl[k[inside]] <= xi[inside]
    y[left] = xi[left]
    right = k == knots.size
    y[right] = xi[right] - mu.total_mass()

    kh = k[hit]
    y[hit] = knots[kh]
    g[hit] = dens[kh]
    on_atom[hit] = amass[kh] > 0

    seg = ~(left | right | hit)
    j = k[seg] - 1
    c = xi[seg] - gr[j]
    width = knots[j + 1] - knots[j]
    s = (dens[j + 1] - dens[j]) / width
    b = 1.0 + dens[j]
    disc = np.maximum(b * b + 2.0 * s * c, 0.0)
    t = np.clip(2.0 * c / (b + np.sqrt(disc)), 0.0, width)
    y[seg] = knots[j] + t
    g[seg] = np.maximum(dens[j] + s * t, 0.0)
    return y, g, on_atom


def to_lagrangian(e: EulerianState, xi: np.ndarray) -> LagrangianState:
    """Lagrangian representative with ``y + H = id`` on the label grid ``xi``.

    ``y`` is the exact generalised inverse of ``x + mu((-inf, x))`` for the
    piecewise-linear density of ``mu``, so ``y_xi = 1/(1 + g(y))`` and
    ``h = 1 - y_xi`` hold pointwise; nodes inside an atom get ``y_xi = 0``,
    ``h = 1``.  ``U`` and ``rho`` are interpolated at ``y`` and ``U_xi`` is
    fixed by the constraint, with the sign of ``u_x(y)``.
    """
    xi = np.asarray(xi, float)
    check_uniform(xi)
    lo, hi = e.mu.support_bounds()
    lo, hi = min(lo, float(e.x_grid[0])), max(hi, float(e.x_grid[-1]))
    if xi[0] > lo or xi[-1] < hi + e.mu.total_mass():
        raise GridError(
            f"label grid [{xi[0]:g}, {xi[-1]:g}] must cover [{lo:g}, {hi + e.mu.total_mass():g}]")

    y, g, on_atom = _inverse_G(e.mu, xi)
    yxi = np.where(on_atom, 0.0, 1.0 / (1.0 + g))
    h = np.where(on_atom, 1.0, g / (1.0 + g))
    U = e.u_at(y)
    r = np.where(on_atom, 0.0, e.rho_at(y) * yxi)
    sign = np.sign(e.u_x_at(y))
    Uxi = sign * np.sqrt(np.maximum(yxi * h - r * r, 0.0))
    return LagrangianState(xi, y - xi, U, h, r, yxi, Uxi)


def to_eulerian(X: LagrangianState, plateau_tol: float = PLATEAU_TOL,
                tol: float = 1e-6) -> EulerianState:
    """Push a Lagrangian state forward to ``(u, rho, mu)``.

    The Eulerian grid is the set of distinct characteristic positions; every
    flat run of ``y`` becomes one grid point carrying an atom of ``mu``.  The
    measure ``mu`` has its own (refined) grid, see :func:`push_forward`.
    """
    X.validate(tol)
    y = np.maximum.accumulate(X.y)
    mu = push_forward(y, WeightedSamples(X.xi, np.maximum(X.h, 0.0)), slope=X.yxi,
                      plateau_tol=plateau_tol)
    rho = push_forward_density(y, WeightedSamples(X.xi, X.r), slope=X.yxi,
                               plateau_tol=plateau_tol)

    flat = plateau_cells(y, X.xi, plateau_tol)
    keep = np.ones(X.n, bool)
    xs, us, rs = y.copy(), X.U.copy(), rho.copy()
    for a, b in plateau_runs(flat):
        keep[a + 1:b + 1] = False
        xs[a] = np.mean(y[a:b + 1])
        us[a] = np.mean(X.U[a:b + 1])
        nb = [rho[k] for k in (a - 1, b + 1) if 0 <= k < X.n]
        rs[a] = np.mean(nb) if nb else 0.0
    return EulerianState(xs[keep], us[keep], rs[keep], mu)


@dataclass(frozen=True)
class Relabeling:
    """A relabelling ``f`` sampled on a label grid, with its derivative."""

    xi: np.ndarray
    f: np.ndarray
    df: np.ndarray | None = None
    kappa: float | None = None

    def __post_init__(self):
        xi, f = _arr(self.xi), _arr(self.f)
        if xi.shape != f.shape:
            raise ValueError("xi and f differ in shape")
        df = CubicSpline(xi, f)(xi, 1) if self.df is None else self.df
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "df", _arr(df))

    @classmethod
    def from_function(cls, fn, dfn, xi, kappa: float | None = None) -> "Relabeling":
        xi = np.asarray(xi, float)
        return cls(xi, fn(xi), dfn(xi), kappa)

    def inverse(self) -> "Relabeling":
        """``f^{-1}`` on the same grid (monotone cubic interpolation)."""
        if np.any(np.diff(self.f) <= 0):
            raise ValueError("relabelling is not strictly increasing")
        g = CubicSpline(self.f, self.xi)(self.xi)
        slope = CubicSpline(self.xi, self.df)(g)
        return Relabeling(self.xi, g, 1.0 / slope, self.kappa)


def _w1inf(d: np.ndarray, dd: np.ndarray) -> float:
    return max(float(np.max(np.abs(d))), float(np.max(np.abs(dd))))


def check_relabeling(f: Relabeling, kappa: float) -> bool:
    """Whether ``f`` lies in the bounded relabelling class of size ``kappa``.

    Requires ``1/(1+kappa) <= f' <= 1+kappa`` at every node and
    ``|f - id| + |f^{-1} - id| <= kappa`` in the norm
    ``max(sup|g|, sup|g'|)``.
    """
    if kappa < 0:
        return False
    lo, hi = 1.0 / (1.0 + kappa), 1.0 + kappa
    eps = 1e-12
    if np.any(f.df < lo - eps) or np.any(f.df > hi + eps):
        return False
    if np.any(np.diff(f.f) <= 0):
        return False
    inv = f.inverse()
    size = _w1inf(f.f - f.xi, f.df - 1.0) + _w1inf(inv.f - inv.xi, inv.df - 1.0)
    return size <= kappa + eps


def relabel(X: LagrangianState, f: Relabeling) -> LagrangianState:
    """``X o f``: compose every field with ``f`` and rescale the densities.

    Fields are interpolated with cubic splines; beyond the grid ``y`` is
    extended with unit slope and the other fields by their end values.
    """
    if f.xi.shape != X.xi.shape or np.any(np.abs(f.xi - X.xi) > 1e-12 * (1 + np.abs(X.xi))):
        raise GridError("relabelling must be sampled on the state's label grid")
    if np.any(f.df <= 0) or np.any(np.diff(f.f) <= 0):
        raise ValueError("relabelling must be strictly increasing")
    at = np.clip(f.f, X.xi[0], X.xi[-1])

    def comp(a):
        return CubicSpline(X.xi, a)(at)

    y = f.f + comp(X.zeta)
    fx = f.df
    return LagrangianState(X.xi, y - X.xi, comp(X.U), comp(X.h) * fx, comp(X.r) * fx,
                           comp(X.yxi) * fx, comp(X.Uxi) * fx)


def energy(X: LagrangianState) -> float:
    return X.energy()
