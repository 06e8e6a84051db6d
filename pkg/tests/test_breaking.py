import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))
from oracles import rk4_scalar  # noqa: E402

from twoch.breaking import (  # noqa: E402
    BreakingKind,
    CharState,
    IndeterminateError,
    NotInBError,
    alpha_beta,
    breaking_time_bound,
    char_rhs,
    classify,
    classify_grid,
    classify_point,
    energy_constant,
    forcing_from_samples,
    gamma_blowup_time,
    gamma_closed,
    integrate_char,
    steepest_point,
    vectorfield_grid,
)
from twoch.coords import LagrangianState, label_grid, to_eulerian, to_lagrangian  # noqa: E402
from twoch.presets import preset  # noqa: E402


def tiny_state(n=16):
    xi = np.linspace(0, 1, n)
    z = np.zeros(n)
    return LagrangianState(xi, z, z, z, z, np.ones(n), z)


# alpha_beta

def test_alpha_beta_zero_state():
    assert alpha_beta(tiny_state(), 3) == CharState(0.0, 0.0, 0.0)


def test_alpha_beta_arithmetic():
    X = tiny_state()
    yxi, Uxi, r = np.ones(16), np.zeros(16), np.zeros(16)
    yxi[5], Uxi[5], r[5] = 0.5, -1.0, 0.2
    s = alpha_beta(X.replace(yxi=yxi, Uxi=Uxi, r=r), 5, P=np.zeros(16))
    assert (s.alpha, s.beta) == (-2.0, 0.4)


def test_alpha_beta_outside_B():
    X = tiny_state()
    yxi = np.ones(16)
    yxi[4] = 0.0
    with pytest.raises(NotInBError):
        alpha_beta(X.replace(yxi=yxi), 4)


def test_alpha_matches_eulerian_slope():
    errs = []
    for n in (1024, 2048):
        e = preset("gaussian")
        X = to_lagrangian(e, label_grid(e, n))
        back = to_eulerian(X)
        x, u = back.x_grid, back.u
        nodes = np.arange(n // 2 - 40, n // 2 + 40, 7)
        err = 0.0
        for i in nodes:
            j = int(np.searchsorted(x, X.y[i]))
            fd = (u[j + 1] - u[j - 1]) / (x[j + 1] - x[j - 1])
            err = max(err, abs(alpha_beta(X, int(i)).alpha - fd))
        errs.append(err)
    # the gap is the centered difference's own error: second order in the grid
    assert errs[1] < 5e-4
    assert errs[0] / errs[1] > 3


# char_rhs and the vector field

def test_char_rhs_values():
    assert char_rhs(0.0, 0.0, 5.0) == (5.0, 0.0)
    assert char_rhs(CharState(0.0, 0.0, 5.0)) == (5.0, 0.0)
    a, b, F = 1.7, 0.9, -0.4
    assert char_rhs(a, 0.0, F) == (-0.5 * a * a + F, 0.0)
    assert char_rhs(0.0, b, F) == (0.5 * b * b + F, 0.0)


def test_vectorfield_rows():
    rows = vectorfield_grid(0.0, (-1, 1), (-1, 1), 3)
    assert rows.shape == (9, 4)
    for r in rows:
        assert tuple(r[2:]) == char_rhs(r[0], r[1], 0.0)
    rows = vectorfield_grid(5.0, (-6, 6), (-6, 6), 21)
    assert (rows == np.array([0.0, 0.0, 5.0, 0.0])).all(axis=1).any()


def test_vectorfield_parity():
    rows = vectorfield_grid(0.0, (-2, 2), (-5, 5), 11)
    grid = rows.reshape(11, 11, 4)
    flipped = grid[:, ::-1]
    assert np.array_equal(grid[..., 2], flipped[..., 2])
    assert np.array_equal(grid[..., 3], -flipped[..., 3])


def test_vectorfield_errors():
    with pytest.raises(ValueError):
        vectorfield_grid(0.0, (-1, 1), (-1, 1), 1)
    with pytest.raises(ValueError):
        vectorfield_grid(0.0, (1, -1), (-1, 1), 3)


# comparison function and bounds

def test_gamma_initial_and_equilibrium():
    C = 1.3
    s = math.sqrt(2 * C)
    for g0 in (-5.0, -s, 0.0, 2.0):
        assert gamma_closed(g0, C, 0.0) == pytest.approx(g0, abs=1e-14)
    t = np.linspace(0, 10, 11)
    assert np.allclose(gamma_closed(-s, C, t), -s, rtol=1e-14)
    with pytest.raises(ValueError):
        gamma_closed(-1.0, 0.0, 1.0)


def test_gamma_blowup_matches_bound_and_rk4():
    C = 2.0
    s = math.sqrt(2 * C)
    g0 = -3 * s
    tb = gamma_blowup_time(g0, C)
    assert tb == pytest.approx(math.log(2) / s, abs=1e-10)
    t, g = rk4_scalar(lambda x: C - 0.5 * x * x, g0, 0.99 * tb, 20000)
    assert np.max(np.abs(gamma_closed(g0, C, t) - g) / np.abs(g)) < 1e-8
    past = gamma_closed(g0, C, 1.01 * tb)
    assert past == -math.inf
    traj = integrate_char((g0, 0.0), C, 2 * tb, dt=tb / 1e4, guard=1e10)
    lo, hi = traj.blowup
    assert lo <= tb + 1e-4 and hi >= tb - 1e-4


def test_breaking_time_bound_cases():
    C = 0.8
    s = math.sqrt(2 * C)
    assert breaking_time_bound(-3 * s, C) == pytest.approx(math.log(2) / s, rel=1e-14)
    assert breaking_time_bound(3 * s, C) == pytest.approx(-math.log(2) / s, rel=1e-14)
    near = breaking_time_bound(-s * (1 + 1e-9), C)
    assert near == pytest.approx(math.log(2 / 1e-9) / s, rel=1e-6)
    for bad in (0.0, s, -s, 0.5 * s):
        with pytest.raises(IndeterminateError):
            breaking_time_bound(bad, C)
    with pytest.raises(ValueError):
        breaking_time_bound(-10.0, 0.0)


def test_breaking_time_bound_monotone_and_dual():
    C = 1.0
    s = math.sqrt(2 * C)
    a = -s * np.geomspace(1 + 1e-8, 100, 200)
    T = np.array([breaking_time_bound(v, C) for v in a])
    assert np.all(np.diff(T) < 0) and np.all(T > 0)
    for v in a:
        assert breaking_time_bound(-v, C) == pytest.approx(-breaking_time_bound(v, C), rel=1e-13)


def test_bound_solves_defining_relation():
    C = 3.0
    s = math.sqrt(2 * C)
    for u in (-1.2 * s, -2 * s, -7 * s):
        T = breaking_time_bound(u, C)
        assert (u + s) / (u - s) == pytest.approx(math.exp(-s * T), rel=1e-12)


# classification

def test_classify_point():
    C = 2.0
    s = 2.0
    assert classify_point(-3.0, 0.0, C) == (BreakingKind.FUTURE, breaking_time_bound(-3.0, C))
    kind, tb = classify_point(3.0, 0.0, C)
    assert kind is BreakingKind.PAST and tb == pytest.approx(-breaking_time_bound(3.0, C)) and tb > 0
    assert classify_point(-3.0, 0.1, C) == (BreakingKind.NONE, None)
    assert classify_point(0.5 * s, 0.0, C) == (BreakingKind.INDETERMINATE, None)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(0.01, 10), st.floats(0, 1))
def test_scaling_never_creates_future_breaking(u0x, C, rho):
    rho = rho if rho > 0.5 else 0.0
    before, _ = classify_point(u0x, rho, C)
    after, _ = classify_point(u0x, rho, 4 * C)  # doubles sqrt(2C)
    if after is BreakingKind.FUTURE:
        assert before is BreakingKind.FUTURE
    if before in (BreakingKind.INDETERMINATE, BreakingKind.NONE):
        assert after is before


def test_classify_zero_data():
    e = preset("zero", nx=101, atom_mass=0.5)
    assert {v.kind for v in classify_grid(e)} == {BreakingKind.INDETERMINATE}
    assert classify(preset("zero", nx=101), 0.0).kind is BreakingKind.INDETERMINATE
    with pytest.raises(ValueError):
        classify(e, 100.0)


@pytest.fixture(scope="module")
def steep():
    return preset("steep", nx=16385)


def test_classify_steep_front(steep):
    x0, slope = steepest_point(steep)
    v = classify(steep, x0)
    C = energy_constant(steep)
    assert v.kind is BreakingKind.FUTURE
    assert v.t_bound == pytest.approx(breaking_time_bound(slope, C), rel=1e-6)
    assert v.c_const == C
    d = v.to_dict()
    assert d["kind"] == "FutureBreaking" and set(d) >= {"x", "u0x", "rho0", "C", "kind", "t_bound"}
    kinds = [w.kind for w in classify_grid(steep)]
    fut = np.nonzero([k is BreakingKind.FUTURE for k in kinds])[0]
    assert fut.size > 0 and np.all(np.diff(fut) == 1)


def test_classify_with_density_is_no_breaking():
    e = preset("steep", nx=16385, rho=0.5, rho_half_width=100.0)
    assert {v.kind for v in classify_grid(e)} == {BreakingKind.NONE}


# characteristic integrator

def test_beta_zero_stays_exact():
    tr = integrate_char((-3.0, 0.0), lambda t: math.sin(t), 2.0, dt=1e-3)
    assert tr.beta.tobytes() == np.zeros_like(tr.beta).tobytes()


@settings(max_examples=40, deadline=None)
@given(st.floats(-8, 8), st.floats(1e-3, 5), st.floats(-3, 3))
@example(0.0, 1e-3, -2.0)
@example(-1.0078125, 1e-3, -1.0078125)
def test_beta_sign_and_monotone_response(a0, b0, F):
    tr = integrate_char((a0, b0), F, 2.0, dt=1e-3)
    assert np.all(tr.beta > 0)
    db = np.diff(tr.beta)
    a, b = tr.alpha[:-1], tr.alpha[1:]
    # steps over which alpha keeps one sign
    clear = (a * b > 0) & (np.minimum(np.abs(a), np.abs(b)) > 1e-6)
    assert np.all(np.sign(db[clear]) == -np.sign(a[clear]))


def test_density_prevents_blowup():
    C = 2.0
    free = integrate_char((-10.0, 0.0), C / 2, 5.0, dt=1e-4, guard=1e6)
    held = integrate_char((-10.0, 1.0), C / 2, 5.0, dt=1e-4, guard=1e6)
    assert free.blowup is not None
    assert held.blowup is None
    assert np.max(np.abs(held.alpha)) < 200


def test_comparison_property():
    # beta = 0 and worst-case forcing C/2: alpha^2 >= gamma^2 while both exist
    rng = np.random.default_rng(4)
    for _ in range(10):
        C = rng.uniform(0.2, 4)
        s = math.sqrt(2 * C)
        a0 = -s * rng.uniform(1.01, 3)
        F = rng.uniform(-C / 2, C / 2)
        tr = integrate_char((a0, 0.0), F, 3 * gamma_blowup_time(a0, C), dt=1e-4, guard=1e7)
        g = gamma_closed(a0, C, tr.t)
        ok = np.isfinite(g)
        assert np.all(tr.alpha[ok] ** 2 >= g[ok] ** 2 * (1 - 1e-9))
        assert tr.blowup is not None
        assert tr.blowup[0] <= gamma_blowup_time(a0, C) + 1e-3


def test_alpha_upper_bound_forward():
    rng = np.random.default_rng(8)
    for _ in range(10):
        E = rng.uniform(0.2, 3)
        F = rng.uniform(-E, E)
        a0 = rng.uniform(-1, 6)
        tr = integrate_char((a0, 0.0), F, 3.0, dt=1e-3, guard=1e7)
        assert np.max(tr.alpha) <= max(a0, 2 * math.sqrt(E)) + 1e-9


def test_ratio_monotone_when_steep():
    F = 0.5
    tr = integrate_char((-6.0, 0.3), F, 0.2, dt=1e-4)
    mask = (tr.alpha < 0) & (tr.alpha ** 2 >= 4 * abs(F))
    ratio = tr.ratio[mask]
    assert ratio.size > 100
    assert np.all(np.diff(ratio) <= 1e-9 * ratio[:-1])


def test_integrate_char_backward_and_sampled_forcing():
    t = np.linspace(0, 1, 11)
    f = forcing_from_samples(t[::-1], np.cos(t[::-1]))
    assert f(0.55) == pytest.approx(0.5 * (math.cos(0.5) + math.cos(0.6)))
    fwd = integrate_char((0.3, 0.4), 0.2, 1.0, dt=1e-3)
    back = integrate_char((fwd.alpha[-1], fwd.beta[-1]), 0.2, -1.0, dt=1e-3)
    assert back.alpha[-1] == pytest.approx(0.3, abs=1e-10)
    assert back.beta[-1] == pytest.approx(0.4, abs=1e-10)
    with pytest.raises(ValueError):
        integrate_char((0.0, 0.0), 0.0, 1.0, dt=0.0)
