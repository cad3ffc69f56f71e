import math

import numpy as np
import pytest

from roughvol.quadrature import cube_axes, cube_weights, node_count, simplex_times, tanh_sinh


@pytest.mark.parametrize("level", [2, 4, 6])
def test_tanh_sinh_nodes_and_complements(level):
    u, v, w = tanh_sinh(level)
    # u rounds to 1 near the right face; the complement v stays exact there
    assert np.all((u > 0) & (u <= 1) & (v > 0))
    np.testing.assert_allclose(u + v, 1.0, atol=1e-15)
    assert np.all(w > 0)
    assert node_count(level) == len(u)
    assert node_count(level + 1) > node_count(level)


@pytest.mark.parametrize("a", [-0.4, -0.1, 0.0, 0.7])
def test_tanh_sinh_endpoint_singularity(a):
    u, v, w = tanh_sinh(5)
    got = np.sum(w * u ** a * v ** a)
    exact = math.gamma(1 + a) ** 2 / math.gamma(2 + 2 * a)
    assert got == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_simplex_volume(m):
    axes = cube_axes(m, 4)
    _, _, _, jac = simplex_times(axes, scale=2.0)
    vol = np.sum(jac * cube_weights(axes))
    assert vol == pytest.approx(2.0 ** m / math.factorial(m), rel=1e-13)


def test_simplex_ordering_and_gaps():
    axes = cube_axes(3, 3)
    t, ratio, gaps, _ = simplex_times(axes)
    t = np.broadcast_arrays(*t)
    assert np.all(t[0] >= t[1]) and np.all(t[1] >= t[2])
    for (a, b), y in gaps.items():
        np.testing.assert_allclose(np.broadcast_to(y, t[0].shape), 1 - t[b] / t[a], atol=1e-14)
        np.testing.assert_allclose(np.broadcast_to(ratio[a, b], t[0].shape), t[b] / t[a], atol=1e-14)


def test_cube_axes_slab():
    full = cube_axes(2, 3)
    part = cube_axes(2, 3, first=slice(0, 5))
    assert part[0][0].shape == (5, 1)
    assert part[1][0].shape == full[1][0].shape
