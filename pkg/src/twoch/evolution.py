"""Time stepping of the Lagrangian system.

The semilinear system is integrated with classical RK4 on the label grid::

    zeta_t = U          y_xi_t = U_xi        U_t = -Q
    U_xi_t = h/2 + (U^2 - P) y_xi            h_t = 2 (U^2 - P) U_xi
    r_t    = 0

Nothing in the right-hand side divides by ``y_xi``, so solutions continue
through wave breaking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coords import LagrangianState, energy  # noqa: F401
from .kernel import KernelWorkspace, kernel_pq, source_density


class StepRejected(RuntimeError):
    """The energy jumped by more than the allowed fraction in one step."""

    def __init__(self, msg: str, state: LagrangianState, t: float):
        super().__init__(msg)
        self.state = state
        self.t = t


class NumericalAbort(RuntimeError):
    """Non-finite values appeared."""


@dataclass(frozen=True)
class EvolveConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    diag_every: int = 10
    breaking_eps: float | None = None
    max_energy_jump: float = 1e-3
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if not math.isfinite(self.t_end):
            raise ValueError("t_end must be finite")
        if self.diag_every < 1:
            raise ValueError("diag_every must be >= 1")


@dataclass(frozen=True)
class Diagnostics:
    t: float
    energy: float
    constraint_residual: float
    min_yxi: float
    breaking_nodes: np.ndarray
    max_forcing: float
    max_P: float
    bounds_ok: bool
    floor_violation: float

    def row(self) -> dict:
        return {"t": self.t, "E": self.energy, "min_yxi": self.min_yxi,
                "constraint_residual": self.constraint_residual,
                "breaking_count": int(self.breaking_nodes.size),
                "max_abs_forcing": self.max_forcing}


@dataclass
class EvolveResult:
    final: LagrangianState
    diagnostics: list[Diagnostics]
    breaking_times: np.ndarray
    snapshots: dict[float, LagrangianState] = field(default_factory=dict)

    def first_breaking(self) -> tuple[float, int] | None:
        """Earliest breaking time and node, or ``None``."""
        bt = self.breaking_times
        if not np.any(np.isfinite(bt)):
            return None
        i = int(np.nanargmin(bt))
        return float(bt[i]), i


def rhs(X: LagrangianState, ws: KernelWorkspace | None = None) -> np.ndarray:
    """Time derivative of ``X.arrays()``: rows ``zeta, y_xi, U, U_xi, h, r``."""
    return _rhs(X.xi, X.arrays(), X.dxi, ws)


def _rhs(xi, a, dxi, ws):
    zeta, yxi, U, Uxi, h = a[0], a[1], a[2], a[3], a[4]
    P, Q = kernel_pq(xi + zeta, source_density(U, yxi, h), dxi, ws)
    F = U * U - P
    out = np.empty_like(a)
    out[0] = U
    out[1] = Uxi
    out[2] = -Q
    out[3] = 0.5 * h + F * yxi
    out[4] = 2.0 * F * Uxi
    out[5] = 0.0
    return out


def _rk4(xi, a, dt, dxi, ws):
    k1 = _rhs(xi, a, dxi, ws)
    k2 = _rhs(xi, a + 0.5 * dt * k1, dxi, ws)
    k3 = _rhs(xi, a + 0.5 * dt * k2, dxi, ws)
    k4 = _rhs(xi, a + dt * k3, dxi, ws)
    new = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    new[5] = a[5]
    return new


def _floor(a):
    """Clip ``y_xi`` and ``h`` at zero; returns the largest clipped amount."""
    v = max(0.0, -float(np.min(a[1])), -float(np.min(a[4])))
    if v > 0:
        np.maximum(a[1], 0.0, out=a[1])
        np.maximum(a[4], 0.0, out=a[4])
    return v


def step(X: LagrangianState, dt: float, ws: KernelWorkspace | None = None,
         max_energy_jump: float = 1e-3) -> LagrangianState:
    """One RK4 step of size ``dt`` (negative steps go backward in time)."""
    a = _rk4(X.xi, X.arrays(), dt, X.dxi, ws or KernelWorkspace.for_size(X.n))
    if not np.all(np.isfinite(a)):
        raise NumericalAbort("non-finite values after step")
    _floor(a)
    Y = LagrangianState.from_arrays(X.xi, a)
    e0, e1 = X.energy(), Y.energy()
    if abs(e1 - e0) > max_energy_jump * max(e0, 1e-300):
        raise StepRejected(f"energy jump {abs(e1 - e0):.3e} exceeds limit", X, 0.0)
    return Y


def detect_breaking(X: LagrangianState, eps: float) -> np.ndarray:
    """Nodes with ``y_xi < eps``.

    There the constraint forces ``U_xi`` and ``r`` to be small as well; nodes
    where that fails are reported by :func:`consistency_failures`.
    """
    return np.nonzero(X.yxi < eps)[0]


def consistency_failures(X: LagrangianState, nodes: np.ndarray, eps: float) -> np.ndarray:
    """Subset of ``nodes`` where ``|U_xi|`` or ``|r|`` exceeds ``sqrt(eps max h)``."""
    lim = math.sqrt(eps * max(float(np.max(X.h)), 0.0)) * (1 + 1e-9) + 1e-300
    bad = (np.abs(X.Uxi[nodes]) > lim) | (np.abs(X.r[nodes]) > lim)
    return nodes[bad]


def breaking_threshold(X: LagrangianState, eps: float | None = None) -> float:
    """Absolute threshold on ``y_xi``: ``eps`` or 1e-6 times the median of ``y_xi``."""
    return float(eps) if eps is not None else 1e-6 * float(np.median(X.yxi))


def diagnose(X: LagrangianState, t: float, eps_abs: float, e0: float,
             ws: KernelWorkspace | None = None, floor_violation: float = 0.0) -> Diagnostics:
    P, _ = kernel_pq(X.y, source_density(X.U, X.yxi, X.h), X.dxi, ws)
    forcing = X.U ** 2 - P
    max_f = float(np.max(np.abs(forcing)))
    max_p = float(np.max(P))
    # P <= E/2 and |U^2 - P| <= E hold for the exact flow; allow quadrature slack
    slack = 1e-6 * max(e0, 1.0)
    ok = bool(max_p <= 0.5 * e0 + slack and max_f <= e0 + slack and np.min(P) >= -slack)
    return Diagnostics(t, X.energy(), X.constraint_residual(), float(np.min(X.yxi)),
                       detect_breaking(X, eps_abs), max_f, max_p, ok, floor_violation)


def evolve(X0: LagrangianState, cfg: EvolveConfig,
           sink: Callable[[Diagnostics], None] | None = None,
           on_step: Callable[[float, LagrangianState], None] | None = None) -> EvolveResult:
    """Integrate from ``t = 0`` to ``cfg.t_end`` (which may be negative).

    Diagnostics are produced every ``cfg.diag_every`` steps and at the end and
    are passed to ``sink`` as they appear.  ``breaking_times[i]`` is the first
    time ``y_xi`` at node ``i`` drops below the breaking threshold (linearly
    interpolated between steps), ``nan`` if it never does.
    """
    ws = KernelWorkspace.for_size(X0.n)
    eps_abs = breaking_threshold(X0, cfg.breaking_eps)
    direction = 1.0 if cfg.t_end >= 0 else -1.0
    nsteps = int(math.ceil(abs(cfg.t_end) / cfg.dt - 1e-9))
    dt = direction * abs(cfg.t_end) / nsteps if nsteps else 0.0
    e0 = X0.energy()

    diags: list[Diagnostics] = []

    def emit(d):
        diags.append(d)
        if sink is not None:
            sink(d)

    btimes = np.full(X0.n, np.nan)
    below = X0.yxi < eps_abs
    btimes[below] = 0.0
    snaps: dict[float, LagrangianState] = {}
    pending = sorted((float(s) for s in cfg.snapshot_times), key=abs)
    if pending and pending[0] == 0.0:
        snaps[0.0] = X0
        pending.pop(0)

    emit(diagnose(X0, 0.0, eps_abs, e0, ws))
    if on_step is not None:
        on_step(0.0, X0)
    a = X0.arrays()
    xi = X0.xi
    e_prev = e0
    t = 0.0
    worst = 0.0
    for k in range(1, nsteps + 1):
        new = _rk4(xi, a, dt, X0.dxi, ws)
        if not np.all(np.isfinite(new)):
            raise NumericalAbort(f"non-finite values at t={t + dt:.6g}")
        worst = max(worst, _floor(new))
        t_new = k * dt
        Y = LagrangianState.from_arrays(xi, new)
        e1 = Y.energy()
        if abs(e1 - e_prev) > cfg.max_energy_jump * max(e_prev, 1e-300):
            raise StepRejected(f"energy jump at t={t_new:.6g}", LagrangianState.from_arrays(xi, a), t)
        crossed = (new[1] < eps_abs) & np.isnan(btimes)
        if np.any(crossed):
            q0, q1 = a[1][crossed], new[1][crossed]
            frac = np.clip((q0 - eps_abs) / np.where(q0 > q1, q0 - q1, 1.0), 0.0, 1.0)
            btimes[crossed] = t + frac * dt
        a, t, e_prev = new, t_new, e1
        while pending and abs(pending[0]) <= abs(t) + 1e-12:
            snaps[pending.pop(0)] = Y
        if on_step is not None:
            on_step(t, Y)
        if k % cfg.diag_every == 0 or k == nsteps:
            emit(diagnose(Y, t, eps_abs, e0, ws, worst))
    return EvolveResult(LagrangianState.from_arrays(xi, a), diags, btimes, snaps)


def energy_drift(result: EvolveResult) -> float:
    e = np.array([d.energy for d in result.diagnostics])
    return float(np.max(np.abs(e - e[0])) / e[0])


def sup_distance(X: LagrangianState, Y: LagrangianState,
                 fields: Sequence[str] = ("zeta", "U", "h", "r", "yxi", "Uxi")) -> float:
    return max(float(np.max(np.abs(getattr(X, f) - getattr(Y, f)))) for f in fields)
