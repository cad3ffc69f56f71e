"""Tanh-sinh rules on (0, 1) and the simplex-to-cube map.

Nodes come with their complements 1 - u computed without cancellation, so
integrands with algebraic endpoint singularities can be evaluated right up to
the faces of the cube.
"""
from functools import lru_cache

import numpy as np

NODE_CUTOFF = 1e-30


@lru_cache(maxsize=None)
def tanh_sinh(level: int):
    """(u, 1 - u, weights) for step h = 2^-level on (0, 1)."""
    h = 2.0 ** -level
    smax = np.arcsinh(np.log(1 / NODE_CUTOFF) / np.pi)
    k = np.arange(-int(smax / h), int(smax / h) + 1)
    s = k * h
    a = np.pi * np.sinh(s)
    u = 1.0 / (1.0 + np.exp(-a))
    v = 1.0 / (1.0 + np.exp(a))
    w = h * np.pi * np.cosh(s) * u * v
    for arr in (u, v, w):
        arr.setflags(write=False)
    return u, v, w


def node_count(level: int) -> int:
    return len(tanh_sinh(level)[0])


def cube_axes(m, level, first=slice(None)):
    """Broadcastable (u_j, 1 - u_j, w_j) for a tensor rule on [0, 1]^m.

    `first` restricts axis 0, which lets callers stream the grid in slabs.
    """
    u, v, w = tanh_sinh(level)
    out = []
    for j in range(m):
        shape = [1] * m
        sl = first if j == 0 else slice(None)
        shape[j] = len(u[sl])
        out.append((u[sl].reshape(shape), v[sl].reshape(shape), w[sl].reshape(shape)))
    return out


def simplex_times(axes, scale=1.0):
    """Map the cube to scale > t_1 > t_2 > ... > 0 via t_j = t_{j-1} u_j.

    Returns (t, gaps, jacobian) where gaps[a][b] = 1 - t_b / t_a for a < b,
    accumulated as 1 - xy = (1 - x) + x (1 - y) to stay accurate near 1.
    """
    m = len(axes)
    t = []
    prev = scale
    jac = 1.0
    for u, _, _ in axes:
        jac = jac * prev
        prev = prev * u
        t.append(prev)
    ratio, gaps = {}, {}
    for a in range(m):
        z, y = 1.0, 0.0
        for b in range(a + 1, m):
            u, v, _ = axes[b]
            y = y + z * v
            z = z * u
            ratio[a, b], gaps[a, b] = z, y
    return t, ratio, gaps, jac


def cube_weights(axes):
    w = 1.0
    for _, _, wj in axes:
        w = w * wj
    return w
