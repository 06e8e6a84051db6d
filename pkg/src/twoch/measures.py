"""Finite positive Radon measures on the line and their push-forwards.

A measure is stored as a continuous piecewise-linear density on a grid plus
a finite list of point masses.  Push-forwards of weighted Lagrangian samples
through a nondecreasing map are converted back into this form; flat stretches
of the map (plateaus) become point masses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: plateau detection threshold, relative to the mean slope of the map
PLATEAU_TOL = 1e-8


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RadonMeasure:
    """Piecewise-linear absolutely continuous part plus point masses.

    ``grid`` is strictly increasing with at least two points, ``density`` is
    nonnegative and is taken to vanish outside the grid.  ``atoms`` holds
    ``(position, mass)`` pairs; positions are merged and sorted on construction.
    """

    grid: np.ndarray
    density: np.ndarray
    atoms: tuple[tuple[float, float], ...] = ()
    _pos: np.ndarray = field(init=False, repr=False, compare=False)
    _mass: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        grid = _readonly(self.grid)
        dens = _readonly(self.density)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid needs at least two points")
        if dens.shape != grid.shape:
            raise ValueError("density and grid differ in shape")
        if not np.all(np.isfinite(grid)) or not np.all(np.isfinite(dens)):
            raise ValueError("non-finite grid or density")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(dens < 0):
            raise ValueError("density must be nonnegative")

        merged: dict[float, float] = {}
        for p, m in self.atoms:
            p, m = float(p), float(m)
            if not (np.isfinite(p) and np.isfinite(m)) or m <= 0:
                raise ValueError(f"invalid atom ({p}, {m})")
            merged[p] = merged.get(p, 0.0) + m
        pos = sorted(merged)
        atoms = tuple((p, merged[p]) for p in pos)

        cells = 0.5 * np.diff(grid) * (dens[:-1] + dens[1:])
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "_pos", _readonly([a[0] for a in atoms]))
        object.__setattr__(self, "_mass", _readonly([a[1] for a in atoms]))
        object.__setattr__(self, "_cum", _readonly(np.concatenate(([0.0], np.cumsum(cells)))))

    @classmethod
    def zero(cls, lo: float = 0.0, hi: float = 1.0) -> "RadonMeasure":
        return cls(np.array([lo, hi]), np.zeros(2))

    @property
    def atom_positions(self) -> np.ndarray:
        return self._pos

    @property
    def atom_masses(self) -> np.ndarray:
        return self._mass

    def ac_mass(self) -> float:
        return float(self._cum[-1])

    def singular_mass(self) -> float:
        return float(np.sum(self._mass))

    def total_mass(self) -> float:
        return self.ac_mass() + self.singular_mass()

    def density_at(self, x) -> np.ndarray:
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)

    def ac_cdf(self, x) -> np.ndarray:
        """Mass of the absolutely continuous part on ``(-inf, x)``."""
        x = np.asarray(x, dtype=float)
        g, d = self.grid, self.density
        j = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
        t = np.clip(x - g[j], 0.0, g[j + 1] - g[j])
        slope = (d[j + 1] - d[j]) / (g[j + 1] - g[j])
        out = self._cum[j] + d[j] * t + 0.5 * slope * t * t
        out = np.where(x <= g[0], 0.0, out)
        return np.where(x >= g[-1], self._cum[-1], out)

    def atom_cdf(self, x, inclusive: bool = False) -> np.ndarray:
        if self._pos.size == 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        cm = np.concatenate(([0.0], np.cumsum(self._mass)))
        side = "right" if inclusive else "left"
        return cm[np.searchsorted(self._pos, x, side=side)]

    def cdf(self, x) -> np.ndarray:
        """``mu((-inf, x))`` (left-continuous, atoms at ``x`` excluded)."""
        return self.ac_cdf(x) + self.atom_cdf(x)

    def cdf_right(self, x) -> np.ndarray:
        """``mu((-inf, x])``."""
        return self.ac_cdf(x) + self.atom_cdf(x, inclusive=True)

    def support_bounds(self) -> tuple[float, float]:
        lo, hi = float(self.grid[0]), float(self.grid[-1])
        if self._pos.size:
            lo, hi = min(lo, float(self._pos[0])), max(hi, float(self._pos[-1]))
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "density": self.density.tolist(),
            "atoms": [[p, m] for p, m in self.atoms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadonMeasure":
        return cls(np.asarray(d["grid"], float), np.asarray(d["density"], float),
                   tuple((float(p), float(m)) for p, m in d.get("atoms", [])))


def total_mass(m: RadonMeasure) -> float:
    return m.total_mass()


def cdf(m: RadonMeasure, x) -> np.ndarray:
    return m.cdf(x)


@dataclass(frozen=True)
class WeightedSamples:
    """Nodal values of a Lagrangian density ``w(xi)`` on a grid."""

    xi: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        xi, w = np.asarray(self.xi, float), np.asarray(self.weights, float)
        if xi.shape != w.shape or xi.ndim != 1 or xi.size < 2:
            raise ValueError("xi and weights must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(xi) <= 0):
            raise ValueError("xi must be strictly increasing")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "weights", w)


def cell_integrals(w: np.ndarray, dxi: np.ndarray, smooth: np.ndarray | None = None) -> np.ndarray:
    """Integrals of ``w`` over grid cells.

    Each cell uses the cubic through four ``smooth`` nodes around it: the
    centred stencil ``i-1..i+2`` when available, otherwise one shifted by a
    node to either side, otherwise the trapezoid rule.  The grid spacing is
    assumed locally uniform where a cubic rule applies.
    """
    w = np.asarray(w, float)
    dxi = np.asarray(dxi, float)
    out = 0.5 * dxi * (w[:-1] + w[1:])
    n = w.size
    if n < 4:
        return out
    ok = np.ones(n, bool) if smooth is None else np.asarray(smooth, bool)
    quad4 = ok[:-3] & ok[1:-2] & ok[2:-1] & ok[3:]     # stencil k..k+3
    done = np.zeros(n - 1, bool)
    # (offset of the cell inside the stencil, weights minus trapezoid)
    rules = ((1, np.array([-1.0, 1.0, 1.0, -1.0]) / 24.0),
             (0, np.array([-3.0, 7.0, -5.0, 1.0]) / 24.0),
             (2, np.array([1.0, -5.0, 7.0, -3.0]) / 24.0))
    for off, c in rules:
        k = np.nonzero(quad4)[0]
        cell = k + off
        sel = ~done[cell]
        k, cell = k[sel], cell[sel]
        out[cell] += dxi[cell] * (c[0] * w[k] + c[1] * w[k + 1] + c[2] * w[k + 2] + c[3] * w[k + 3])
        done[cell] = True
    return out


def plateau_cells(y: np.ndarray, xi: np.ndarray, tol: float = PLATEAU_TOL) -> np.ndarray:
    """Cells on which ``y`` is flat up to ``tol`` times its mean slope."""
    dxi = np.diff(xi)
    dy = np.diff(y)
    span = (y[-1] - y[0]) / (xi[-1] - xi[0])
    if not span > 0:
        span = 1.0
    return dy <= tol * span * dxi


def plateau_runs(flat: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of flat cells as node ranges ``(a, b)``, cells ``a..b-1``."""
    runs = []
    edges = np.diff(np.concatenate(([0], flat.astype(np.int8), [0])))
    for a, b in zip(np.nonzero(edges == 1)[0], np.nonzero(edges == -1)[0]):
        runs.append((int(a), int(b)))
    return runs


def _slope_estimate(y, xi, slope, flat, thr):
    """Nodal slope of ``y``; one-sided next to plateaus."""
    n = y.size
    dxi = np.diff(xi)
    cell = np.diff(y) / dxi
    est = np.empty(n)
    est[0], est[-1] = cell[0], cell[-1]
    est[1:-1] = 0.5 * (cell[:-1] + cell[1:])
    # next to a flat run use the cell on the far side
    start = np.zeros(n, bool)
    start[:-2] = flat[1:] & ~flat[:-1]
    end = np.zeros(n, bool)
    end[2:] = flat[:-1] & ~flat[1:]
    i = np.nonzero(start)[0]
    i = i[i >= 1]
    est[i] = cell[i - 1]
    j = np.nonzero(end)[0]
    j = j[j <= n - 2]
    est[j] = cell[j]
    if slope is not None:
        slope = np.asarray(slope, float)
        est = np.where(slope > thr, slope, est)
    return est


def _partial(dy, dxi, est, w, k, away, on_plat, thr):
    """Split a cell at the edge of a plateau.

    ``k`` is the cell's smooth node and ``away`` points from it away from the
    plateau.  Slope and weight are extrapolated into the cell with
    polynomials through up to three smooth nodes; the rising part ends where
    the integrated slope reaches ``dy``.  Returns its label length and mass.
    """
    idx = [k]
    for step in (1, 2):
        j = k + step * away
        if 0 <= j < est.size and not on_plat[j]:
            idx.append(j)
        else:
            break
    t = -np.arange(len(idx)) * dxi
    deg = len(idx) - 1
    sp = np.polynomial.Polynomial.fit(t, est[idx], deg, domain=[-1, 1], window=[-1, 1]) \
        if deg else np.polynomial.Polynomial([est[k]])
    wp = np.polynomial.Polynomial.fit(t, w[idx], deg, domain=[-1, 1], window=[-1, 1]) \
        if deg else np.polynomial.Polynomial([w[k]])
    yp = sp.integ()
    ell = min(dy / max(est[k], thr), dxi)
    for _ in range(8):
        slope = sp(ell)
        if slope <= thr:
            break
        step = (yp(ell) - dy) / slope
        ell = min(max(ell - step, 0.0), dxi)
        if abs(step) <= 1e-15 * dxi:
            break
    mass = float(wp.integ()(ell))
    s_end = sp(ell)
    edge = max(float(wp(ell)), 0.0) / s_end if s_end > thr else w[k] / max(est[k], thr)
    return ell, max(mass, 0.0), edge


def push_forward(y: np.ndarray, samples: WeightedSamples, slope: np.ndarray | None = None,
                 plateau_tol: float = PLATEAU_TOL) -> RadonMeasure:
    """Push the measure ``w dxi`` forward through the nondecreasing map ``y``.

    Cells where ``y`` is flat are gathered into point masses.  On every other
    cell the mass is computed with :func:`cell_integrals` and the output
    density is piecewise linear with one or two extra interior nodes chosen so
    that each cell carries exactly that mass.  ``slope`` optionally supplies
    the exact derivative of ``y`` at the nodes.
    """
    xi = samples.xi
    w = np.maximum(samples.weights, 0.0)
    y = np.asarray(y, float)
    if y.shape != xi.shape:
        raise ValueError("y and samples differ in shape")
    n = y.size
    dxi = np.diff(xi)
    dy = np.diff(y)
    span = (y[-1] - y[0]) / (xi[-1] - xi[0])
    span = span if span > 0 else 1.0
    if np.any(dy < -1e-12 * span * dxi):
        raise ValueError("map must be nondecreasing")
    flat = plateau_cells(y, xi, plateau_tol)
    thr = plateau_tol * span

    on_plat = np.zeros(n, bool)
    on_plat[:-1] |= flat
    on_plat[1:] |= flat
    est = _slope_estimate(y, xi, slope, flat, thr)
    dens = np.where(on_plat, 0.0, w / np.where(est > thr, est, 1.0))
    dens = np.where(~on_plat & (est <= thr), 0.0, dens)
    masses = cell_integrals(w, dxi, ~on_plat)

    # collapsed node positions: each plateau run becomes one point
    rep = np.arange(n)
    keep = np.ones(n, bool)
    xpos = y.copy()
    dpos = dens.copy()
    atoms = []
    for a, b in plateau_runs(flat):
        xp = float(np.mean(y[a:b + 1]))
        mass = float(np.sum(masses[a:b]))
        side = []
        if a >= 1 and not (a >= 2 and flat[a - 2]):
            ell, sm, edge = _partial(dy[a - 1], dxi[a - 1], est, w, a - 1, -1, on_plat, thr)
            masses[a - 1] = sm
            mass += w[a] * (dxi[a - 1] - ell)
            side.append(edge)
        if b <= n - 2 and not (b + 1 <= n - 2 and flat[b + 1]):
            ell, sm, edge = _partial(dy[b], dxi[b], est, w, b + 1, 1, on_plat, thr)
            masses[b] = sm
            mass += w[b] * (dxi[b] - ell)
            side.append(edge)
        rep[a:b + 1] = a
        keep[a + 1:b + 1] = False
        xpos[a] = xp
        dpos[a] = float(np.mean(side)) if side else 0.0
        if mass > 0:
            atoms.append((xp, mass))

    cells = np.nonzero(~flat)[0]
    if cells.size == 0:
        xp = float(xpos[0])
        return RadonMeasure(np.array([xp - 0.5, xp + 0.5]), np.zeros(2), tuple(atoms))

    xl, xr = xpos[rep[cells]], xpos[rep[cells + 1]]
    dl, dr = dpos[rep[cells]], dpos[rep[cells + 1]]
    m = masses[cells]
    width = xr - xl
    dsum = dl + dr
    # one midpoint when it can carry the leftover mass with a nonnegative value
    single = m >= 0.25 * width * dsum
    dmid = np.where(single, 2.0 * m / width - 0.5 * dsum, 0.0)
    theta = np.where(single, 0.5, 2.0 * m / np.where(dsum > 0, width * dsum, 1.0))
    theta = np.clip(theta, 1e-12, 0.5)
    near_half = ~single & (1.0 - 2.0 * theta < 1e-9)
    single |= near_half
    dmid = np.where(near_half, 0.0, dmid)

    p1 = np.where(single, 0.5 * (xl + xr), xl + theta * width)
    p2 = np.where(single, np.nan, xr - theta * width)
    d1 = np.where(single, np.maximum(dmid, 0.0), 0.0)
    pts = np.stack([xl, p1, p2], axis=1).ravel()
    den = np.stack([dl, d1, np.zeros_like(d1)], axis=1).ravel()
    pts = np.concatenate((pts, [xr[-1]]))
    den = np.concatenate((den, [dr[-1]]))
    ok = ~np.isnan(pts)
    return RadonMeasure(pts[ok], den[ok], tuple(atoms))


def push_forward_density(y: np.ndarray, samples: WeightedSamples,
                         slope: np.ndarray | None = None,
                         plateau_tol: float = PLATEAU_TOL) -> np.ndarray:
    """Nodal density ``w / y_xi`` of the push-forward, zero on plateaus.

    Works for signed weights; used for quantities that are only needed
    pointwise such as the Eulerian density ``rho``.
    """
    xi = samples.xi
    y = np.asarray(y, float)
    flat = plateau_cells(y, xi, plateau_tol)
    span = (y[-1] - y[0]) / (xi[-1] - xi[0])
    thr = plateau_tol * (span if span > 0 else 1.0)
    est = _slope_estimate(y, xi, slope, flat, thr)
    return np.where(est > thr, samples.weights / np.where(est > thr, est, 1.0), 0.0)


def merge_atoms(atoms: Iterable[Sequence[float]]) -> list[tuple[float, float]]:
    out: dict[float, float] = {}
    for p, m in atoms:
        out[float(p)] = out.get(float(p), 0.0) + float(m)
    return sorted(out.items())
