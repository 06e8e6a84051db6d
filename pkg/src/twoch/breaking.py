"""Breaking prediction along characteristics.

Along a characteristic the pair ``alpha = U_xi / y_xi`` and ``beta = r / y_xi``
(that is ``u_x`` and ``rho`` evaluated on the characteristic) solves::

    alpha_t = beta^2 / 2 - alpha^2 / 2 + (U^2 - P)
    beta_t  = -alpha beta

With ``C = 2 (||u0||^2 + mu0(R))`` the forcing is bounded by ``C/2`` and the
comparison function ``gamma_t = C - gamma^2 / 2`` bounds ``alpha`` from above
while ``beta`` vanishes.  A steep enough negative slope at a point where the
density vanishes therefore forces breaking before an explicit time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .coords import EulerianState, LagrangianState
from .evolution import consistency_failures, detect_breaking  # noqa: F401
from .kernel import eval_P


class IndeterminateError(ValueError):
    """The slope is within ``sqrt(2C)`` of zero: the comparison gives no bound."""


class NotInBError(ValueError):
    """The node is already at or past breaking (``y_xi`` below threshold)."""


class BreakingKind(str, enum.Enum):
    FUTURE = "FutureBreaking"
    PAST = "PastBreaking"
    NONE = "NoBreaking"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class BreakingVerdict:
    """Verdict at one point; ``t_bound`` bounds the time to (or since) breaking."""

    x: float
    u0x: float
    rho0: float
    C: float
    kind: BreakingKind
    t_bound: float | None
    near_cutoff: bool = False

    @property
    def c_const(self) -> float:
        return self.C

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


@dataclass(frozen=True)
class CharState:
    alpha: float
    beta: float
    forcing: float


@dataclass
class CharTrajectory:
    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    blowup: tuple[float, float] | None = None

    @property
    def ratio(self) -> np.ndarray:
        """``alpha^2 / beta^2`` (nan where ``beta`` vanishes)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.beta != 0, self.alpha ** 2 / self.beta ** 2, np.nan)


def energy_constant(e: EulerianState) -> float:
    """``C = 2 (||u||_{L^2}^2 + mu(R))``."""
    return 2.0 * (e.u_l2_squared() + e.mu.total_mass())


def breaking_time_bound(u0x: float, C: float) -> float:
    """Signed time by which a characteristic with slope ``u0x`` must break.

    Positive for ``u0x < -sqrt(2C)``, negative for ``u0x > sqrt(2C)``.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    s = math.sqrt(2.0 * C)
    if abs(u0x) <= s:
        raise IndeterminateError(f"|u0x| = {abs(u0x):.6g} does not exceed sqrt(2C) = {s:.6g}")
    # log((u0x - s)/(u0x + s)) written to avoid cancellation when u0x is near -s or s
    if u0x < 0:
        val = math.log1p(-2.0 * s / (u0x + s))
    else:
        val = -math.log1p(2.0 * s / (u0x - s))
    return val / s


def gamma_blowup_time(g0: float, C: float) -> float:
    """Time at which the comparison solution from ``g0`` reaches infinity."""
    return breaking_time_bound(g0, C)


def gamma_closed(g0: float, C: float, t):
    """Closed-form solution of ``gamma_t = C - gamma^2/2``, ``gamma(0) = g0``.

    Past the pole (where the denominator has changed sign) the solution has
    left the real line; a signed infinity is returned there.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    t = np.asarray(t, dtype=float)
    s = math.sqrt(2.0 * C)
    ex = np.exp(-s * t)
    num = s * g0 + 2.0 * C + (s * g0 - 2.0 * C) * ex
    den = g0 + s - (g0 - s) * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    past = den * (2.0 * s) <= 0.0
    out = np.where(past, np.copysign(np.inf, num), out)
    return float(out) if out.ndim == 0 else out


def classify_point(u0x: float, rho0: float, C: float, rho_tol: float = 0.0) -> tuple[BreakingKind, float | None]:
    """Verdict for one point given its slope, density and the constant ``C``.

    The returned bound is positive in both breaking cases; for past breaking
    it is the length of the interval ``[T, 0]``.
    """
    if abs(rho0) > rho_tol:
        return BreakingKind.NONE, None
    s = math.sqrt(2.0 * C)
    if u0x < -s:
        return BreakingKind.FUTURE, breaking_time_bound(u0x, C)
    if u0x > s:
        return BreakingKind.PAST, -breaking_time_bound(u0x, C)
    return BreakingKind.INDETERMINATE, None


def rho_tolerance(e: EulerianState) -> float:
    return 1e-12 * float(np.max(np.abs(e.rho))) if e.rho.size else 0.0


def classify(e: EulerianState, x: float, C: float | None = None) -> BreakingVerdict:
    """Classify the characteristic through ``x`` at ``t = 0``.

    ``rho0(x)`` counts as zero when within ``1e-12 max|rho0|``.  Verdicts whose
    density lies within a factor ten of that cutoff are flagged.
    """
    if not (e.x_grid[0] <= x <= e.x_grid[-1]):
        raise ValueError(f"x = {x} outside the grid")
    C = energy_constant(e) if C is None else C
    if not C >= 0:
        raise ValueError("C must be nonnegative")
    u0x = float(e.u_x_at(x))
    rho0 = float(e.rho_at(x))
    tol = rho_tolerance(e)
    kind, tb = classify_point(u0x, rho0, C, tol)
    near = tol > 0 and tol / 10.0 <= abs(rho0) <= 10.0 * tol
    return BreakingVerdict(float(x), u0x, rho0, C, kind, tb, near)


def classify_grid(e: EulerianState, xs=None) -> list[BreakingVerdict]:
    xs = e.x_grid if xs is None else xs
    C = energy_constant(e)
    return [classify(e, float(x), C) for x in xs]


def steepest_point(e: EulerianState) -> tuple[float, float]:
    """Grid point of the most negative slope and that slope."""
    ux = e.u_x()
    i = int(np.argmin(ux))
    return float(e.x_grid[i]), float(ux[i])


def alpha_beta(X: LagrangianState, node: int, eps: float | None = None,
               P: np.ndarray | None = None) -> CharState:
    """``(u_x, rho, U^2 - P)`` on the characteristic through ``node``."""
    eps = 1e-6 * float(np.median(X.yxi)) if eps is None else eps
    q = float(X.yxi[node])
    if q <= eps:
        raise NotInBError(f"node {node} has y_xi = {q:.3e} <= {eps:.3e}")
    P = eval_P(X) if P is None else P
    return CharState(float(X.Uxi[node]) / q, float(X.r[node]) / q,
                     float(X.U[node] ** 2 - P[node]))


def char_rhs(alpha, beta=None, forcing=None):
    """``(alpha_t, beta_t)`` with frozen forcing; accepts a :class:`CharState`
    or the three values (scalars or arrays)."""
    if isinstance(alpha, CharState):
        alpha, beta, forcing = alpha.alpha, alpha.beta, alpha.forcing
    return 0.5 * beta * beta - 0.5 * alpha * alpha + forcing, 0.0 - alpha * beta


def forcing_from_samples(t: np.ndarray, values: np.ndarray) -> Callable[[float], float]:
    """Piecewise-linear forcing from a sampled time series."""
    t = np.asarray(t, float)
    values = np.asarray(values, float)
    order = np.argsort(t)
    t, values = t[order], values[order]
    return lambda s: float(np.interp(s, t, values))


def integrate_char(s0: CharState | tuple[float, float], forcing: float | Callable[[float], float],
                   t_end: float, dt: float = 1e-3, guard: float = 1e8) -> CharTrajectory:
    """RK4 for the characteristic pair from ``t = 0`` to ``t_end`` (either sign).

    Output is on a uniform grid of step ``dt``; a step is split into substeps
    when ``|alpha| dt`` is large.

    Stops early when ``|alpha|`` exceeds ``guard`` and reports the step that
    crossed it as the blow-up bracket.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(s0, CharState):
        a, b = s0.alpha, s0.beta
        if forcing is None:
            forcing = s0.forcing
    else:
        a, b = s0
    F = (lambda _t, c=float(forcing): c) if not callable(forcing) else forcing
    n = int(math.ceil(abs(t_end) / dt - 1e-12))
    h = (t_end / n) if n else 0.0
    ts, al, be = [0.0], [a], [b]
    t = 0.0
    blow = None
    for k in range(1, n + 1):
        # substep where |alpha| h is large so RK4 stays stable near blow-up
        m = min(int(math.ceil(abs(a) * abs(h) / 0.25)), 4096) or 1
        sub = h / m
        a_new, b_new = a, b
        for j in range(m):
            s = t + j * sub
            f0, fm, f1 = F(s), F(s + 0.5 * sub), F(s + sub)
            k1 = char_rhs(a_new, b_new, f0)
            k2 = char_rhs(a_new + 0.5 * sub * k1[0], b_new + 0.5 * sub * k1[1], fm)
            k3 = char_rhs(a_new + 0.5 * sub * k2[0], b_new + 0.5 * sub * k2[1], fm)
            k4 = char_rhs(a_new + sub * k3[0], b_new + sub * k3[1], f1)
            a_new = a_new + sub / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            b_new = b_new + sub / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            if not (math.isfinite(a_new) and abs(a_new) <= guard):
                break
        t_new = k * h
        if not (math.isfinite(a_new) and abs(a_new) <= guard):
            blow = (t, t_new)
            break
        a, b, t = a_new, b_new, t_new
        ts.append(t)
        al.append(a)
        be.append(b)
    return CharTrajectory(np.array(ts), np.array(al), np.array(be), blow)


def vectorfield_grid(forcing: float, alpha_range: tuple[float, float],
                     beta_range: tuple[float, float], n: int) -> np.ndarray:
    """Rows ``(alpha, beta, alpha_t, beta_t)`` on an ``n x n`` lattice."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not (alpha_range[0] < alpha_range[1] and beta_range[0] < beta_range[1]):
        raise ValueError("ranges must be increasing")
    al = np.linspace(alpha_range[0], alpha_range[1], n)
    be = np.linspace(beta_range[0], beta_range[1], n)
    A, B = np.meshgrid(al, be, indexing="ij")
    A, B = A.ravel(), B.ravel()
    at, bt = char_rhs(A, B, forcing)
    return np.column_stack([A, B, at, bt])
