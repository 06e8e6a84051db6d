"""Initial data families sampled on a uniform Eulerian grid.

Every preset supplies ``u`` and ``u_x`` in closed form; the energy density is
sampled as ``u_x^2 + rho^2``.  Two overlays apply to any preset: a constant
density ``rho`` on a smoothed interval and a single point mass in ``mu``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .coords import EulerianState
from .measures import RadonMeasure

DEFAULT_NX = 65537


@dataclass(frozen=True)
class Profile:
    u: Callable[[np.ndarray], np.ndarray]
    ux: Callable[[np.ndarray], np.ndarray]
    half_width: float


def _sech_sq(z):
    e = np.exp(-2.0 * np.abs(z))
    return 4.0 * e / (1.0 + e) ** 2


def _zero() -> Profile:
    z = lambda x: np.zeros_like(np.asarray(x, float))
    return Profile(z, z, 5.0)


def _gaussian(amplitude: float = 1.0, width: float = 1.0) -> Profile:
    a, w = amplitude, width
    u = lambda x: a * np.exp(-(x / w) ** 2)
    ux = lambda x: -2.0 * x / w ** 2 * u(x)
    return Profile(u, ux, 15.0 * w)


def _sech2(amplitude: float = 1.0, width: float = 1.0) -> Profile:
    a, w = amplitude, width
    u = lambda x: a * _sech_sq(x / w)
    ux = lambda x: -2.0 * a / w * np.tanh(x / w) * _sech_sq(x / w)
    return Profile(u, ux, 18.0 * w)


def _peakon(amplitude: float = 1.0) -> Profile:
    a = amplitude
    u = lambda x: a * np.exp(-np.abs(x))
    # one-sided at the crest so that u_x^2 is continuous there
    ux = lambda x: -a * np.where(x >= 0, 1.0, -1.0) * np.exp(-np.abs(x))
    return Profile(u, ux, 30.0)


def steep_front_delta(slope_ratio: float, envelope: float = 1.0) -> float:
    """Front width giving ``min u_x = -slope_ratio * sqrt(2C)`` with ``rho = 0``.

    The ratio does not depend on the amplitude, so it is solved for ``A = 1``.
    """
    ell = envelope

    def ratio(delta):
        u = lambda x: np.tanh(x / delta) * np.exp(-(x / ell) ** 2)
        ux = lambda x: (_sech_sq(x / delta) / delta
                        - 2.0 * x / ell ** 2 * np.tanh(x / delta)) * np.exp(-(x / ell) ** 2)
        lim = 8.0 * ell
        pts = [-4 * delta, 0.0, 4 * delta]
        l2 = quad(lambda x: u(x) ** 2, -lim, lim, points=pts, limit=400)[0]
        h1 = quad(lambda x: ux(x) ** 2, -lim, lim, points=pts, limit=400)[0]
        c = 2.0 * (l2 + h1)
        return (1.0 / delta) / np.sqrt(2.0 * c) - slope_ratio

    if slope_ratio <= 0:
        raise ValueError("slope_ratio must be positive")
    lo, hi = 1e-5 * ell, 10.0 * ell
    if ratio(hi) > 0:
        return hi
    return brentq(ratio, lo, hi, xtol=1e-14, rtol=1e-14)


def _steep(amplitude: float = 1.0, envelope: float = 1.0, slope_ratio: float = 1.5,
           delta: float | None = None) -> Profile:
    a, ell = amplitude, envelope
    d = steep_front_delta(slope_ratio, ell) if delta is None else delta
    env = lambda x: np.exp(-(x / ell) ** 2)
    u = lambda x: -a * np.tanh(x / d) * env(x)
    ux = lambda x: -a * (_sech_sq(x / d) / d
                         - 2.0 * x / ell ** 2 * np.tanh(x / d)) * env(x)
    return Profile(u, ux, 6.0 * ell)


PROFILES: dict[str, Callable[..., Profile]] = {
    "zero": _zero,
    "gaussian": _gaussian,
    "sech2": _sech2,
    "peakon": _peakon,
    "steep": _steep,
    "atom": _zero,
}


def rho_overlay(x: np.ndarray, value: float, half_width: float, edge: float = 0.25) -> np.ndarray:
    """``value`` on ``[-half_width, half_width]`` with tanh shoulders."""
    return 0.5 * value * (np.tanh((x + half_width) / edge) - np.tanh((x - half_width) / edge))


@dataclass(frozen=True)
class PresetSpec:
    name: str = "gaussian"
    params: dict = field(default_factory=dict)
    nx: int = DEFAULT_NX
    half_width: float | None = None
    rho: float = 0.0
    rho_half_width: float | None = None
    atom_mass: float = 0.0
    atom_pos: float = 0.0


def build(spec: PresetSpec) -> EulerianState:
    if spec.name not in PROFILES:
        raise KeyError(f"unknown preset {spec.name!r}; choose from {sorted(PROFILES)}")
    params = dict(spec.params)
    atom_mass = spec.atom_mass
    if spec.name == "atom":
        atom_mass = float(params.pop("c", atom_mass if atom_mass > 0 else 1.0))
    prof = PROFILES[spec.name](**params)
    hw = prof.half_width if spec.half_width is None else spec.half_width
    if spec.nx < 2:
        raise ValueError("nx must be >= 2")
    x = np.linspace(-hw, hw, spec.nx)
    u = prof.u(x)
    ux = prof.ux(x)
    rhw = spec.rho_half_width if spec.rho_half_width is not None else 0.5 * hw
    rho = rho_overlay(x, spec.rho, rhw) if spec.rho else np.zeros_like(x)
    atoms = ((spec.atom_pos, atom_mass),) if atom_mass > 0 else ()
    return EulerianState(x, u, rho, RadonMeasure(x, ux * ux + rho * rho, atoms))


def preset(name: str, nx: int = DEFAULT_NX, **kw) -> EulerianState:
    """Shorthand: ``preset("gaussian", amplitude=2.0, rho=0.5)``."""
    fields = {"half_width", "rho", "rho_half_width", "atom_mass", "atom_pos"}
    top = {k: kw.pop(k) for k in list(kw) if k in fields}
    return build(PresetSpec(name, kw, nx, **top))
