import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erfc

sys.path.insert(0, str(Path(__file__).parent))
from oracles import direct_pq, gregory_node_weights, random_admissible  # noqa: E402

from twoch.coords import LagrangianState  # noqa: E402
from twoch.kernel import (  # noqa: E402
    KernelWorkspace,
    eval_P,
    eval_pq,
    eval_Q,
    gregory_weights,
    kernel_pq,
    source_density,
)


def state(xi, y, U, yxi, h):
    return LagrangianState(xi, y - xi, U, h, np.zeros_like(xi), yxi, np.sqrt(yxi * h))


def gaussian_sides(x):
    """Exact half-line integrals of exp(-|x-s|) exp(-s^2)."""
    c = 0.5 * np.sqrt(np.pi) * np.exp(0.25)
    return c * np.exp(-x) * erfc(0.5 - x), c * np.exp(x) * erfc(0.5 + x)


@pytest.mark.parametrize("k", range(7))
def test_gregory_weights_match_textbook(k):
    assert np.array_equal(gregory_weights(k), np.array(gregory_node_weights(k)))


def test_zero_source():
    xi = np.linspace(-3, 3, 33)
    z = np.zeros_like(xi)
    X = state(xi, xi, z, np.ones_like(xi), z)
    assert not np.any(eval_P(X)) and not np.any(eval_Q(X))


def test_even_data_gives_even_P_and_odd_Q():
    xi = np.linspace(-4, 4, 257)
    yxi = 1 / (1 + 4 * xi ** 2 * np.exp(-2 * xi ** 2))
    y = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(xi) * (yxi[1:] + yxi[:-1]))))
    y -= y[128]
    y = 0.5 * (y - y[::-1])
    U = np.exp(-xi ** 2)
    h = 1 - yxi
    P, Q = eval_pq(state(xi, y, U, yxi, h))
    assert np.max(np.abs(P - P[::-1])) < 1e-12 * np.max(P)
    assert np.max(np.abs(Q + Q[::-1])) < 1e-12 * np.max(P)
    assert abs(Q[128]) < 1e-12


def test_matches_direct_quadrature_n256():
    rng = np.random.default_rng(1)
    for _ in range(5):
        xi, y, U, yxi, h = random_admissible(rng, 256)
        f = source_density(U, yxi, h)
        P, Q = kernel_pq(y, f, xi[1] - xi[0])
        P0, Q0 = direct_pq(y, f, xi[1] - xi[0])
        assert np.max(np.abs(P - P0)) <= 1e-12 * np.max(np.abs(P0))
        assert np.max(np.abs(Q - Q0)) <= 1e-12 * np.max(np.abs(Q0))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2 ** 32 - 1))
def test_small_grids_match_direct(n, seed):
    xi, y, U, yxi, h = random_admissible(np.random.default_rng(seed), n)
    f = source_density(U, yxi, h)
    P, Q = kernel_pq(y, f, xi[1] - xi[0])
    P0, Q0 = direct_pq(y, f, xi[1] - xi[0])
    scale = max(np.max(np.abs(P0)), 1e-300)
    assert np.max(np.abs(P - P0)) <= 1e-12 * scale
    assert np.max(np.abs(Q - Q0)) <= 1e-12 * scale


def test_analytic_gaussian_source_converges():
    errs = []
    for n in (201, 401, 801):
        xi = np.linspace(-12, 12, n)
        P, Q = kernel_pq(xi, np.exp(-xi ** 2), xi[1] - xi[0])
        left, right = gaussian_sides(xi)
        errs.append(max(np.max(np.abs(P - 0.25 * (left + right))),
                        np.max(np.abs(Q + 0.25 * (left - right)))))
    assert errs[-1] < 1e-10
    # sixth-order kink corrections: far better than second order on refinement
    assert errs[0] / errs[1] > 30


def test_lower_order_is_less_accurate():
    xi = np.linspace(-12, 12, 201)
    left, right = gaussian_sides(xi)
    err = [np.max(np.abs(kernel_pq(xi, np.exp(-xi ** 2), xi[1] - xi[0], order=k)[0]
                         - 0.25 * (left + right))) for k in (0, 2, 6)]
    assert err[0] > err[1] > err[2]


def test_workspace_reuse_is_deterministic():
    rng = np.random.default_rng(5)
    xi, y, U, yxi, h = random_admissible(rng, 64)
    f = source_density(U, yxi, h)
    ws = KernelWorkspace.for_size(64)
    a = kernel_pq(y, f, xi[1] - xi[0], ws)
    b = kernel_pq(y, f, xi[1] - xi[0], ws)
    c = kernel_pq(y, f, xi[1] - xi[0], KernelWorkspace.for_size(3))
    for u, v, w in zip(a, b, c):
        assert np.array_equal(u, v) and np.array_equal(u, w)


def test_shape_errors():
    with pytest.raises(ValueError):
        kernel_pq(np.zeros(3), np.zeros(4), 1.0)
    with pytest.raises(ValueError):
        kernel_pq(np.zeros(1), np.zeros(1), 1.0)
