"""Monte Carlo for the left-point Euler scheme with exact grid sampling.

Paths are generated in fixed blocks of BLOCK rows. Block b of seed s draws
its normals from Philox keyed by (s, b), so path p always sees the same
numbers whatever the thread count, and per-block partial sums are reduced
in block order.
"""
import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .kernel import GridSpec, grid_sampling_factor

BLOCK = 4096
RAW_MAGIC = b"RVPATH01"


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get("ROUGHVOL_THREADS", "1")
    try:
        threads = int(threads)
    except ValueError:
        raise PreconditionError(f"thread count must be an integer, got {threads!r}") from None
    if threads < 1:
        raise PreconditionError("thread count must be at least 1")
    return threads


@dataclass
class GridPath:
    hatW: np.ndarray    # W_hat(i/n), i = 0..M-1, hatW[0] = 0
    dW: np.ndarray
    dWperp: np.ndarray
    hatW_T: float


@dataclass
class McEstimate:
    mean: float
    std_error: float
    paths: int
    seed: int
    N: int = 1
    n: int = 1
    antithetic: bool = True

    def to_dict(self):
        return dict(self.__dict__)


class GridSampler:
    """Exact joint sampler of (W_hat on the grid, dW, dW_perp)."""

    def __init__(self, model, n):
        self.model = model
        self.grid = GridSpec(n, model.T)
        self.M = self.grid.steps
        self.h = self.grid.widths()
        self.L = grid_sampling_factor(self.grid, model.H)

    def normals(self, seed, block, rows=BLOCK):
        key = np.array([seed % 2 ** 64, block], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key))
        return rng.standard_normal((rows, 3 * self.M))

    def transform(self, Z):
        """Normals (rows, 3M) -> (hatW left points, dW, dWperp, W_hat(T))."""
        M = self.M
        joint = Z[:, : 2 * M] @ self.L.T
        dW = joint[:, :M]
        upper = joint[:, M:]
        hatW = np.concatenate([np.zeros((len(Z), 1)), upper[:, :-1]], axis=1)
        dWperp = Z[:, 2 * M:] * np.sqrt(self.h)
        return hatW, dW, dWperp, upper[:, -1]

    def block(self, seed, b, rows=BLOCK):
        return self.transform(self.normals(seed, b, rows))


def scheme_terminal_batch(hatW, dW, dWperp, model):
    """X_T^n = sum_i f(W_hat(t_i)) (rho dW_i + sqrt(1 - rho^2) dWperp_i), row-wise."""
    rho = model.rho
    dB = rho * dW + np.sqrt(max(0.0, 1.0 - rho * rho)) * dWperp
    return np.sum(model.f.derivative(0, hatW) * dB, axis=-1)


def scheme_terminal(path: GridPath, model, n):
    grid = GridSpec(n, model.T)
    if len(path.dW) != grid.steps:
        raise PreconditionError(f"path has {len(path.dW)} steps, grid needs {grid.steps}")
    return float(scheme_terminal_batch(path.hatW, path.dW, path.dWperp, model))


def _blocks(paths):
    full, rest = divmod(paths, BLOCK)
    return [(b, BLOCK) for b in range(full)] + ([(full, rest)] if rest else [])


def sample_grid_arrays(model, n, paths, seed):
    """All sampled paths as arrays of shape (paths, M), plus W_hat(T)."""
    sampler = GridSampler(model, n)
    parts = [sampler.block(seed, b, rows) for b, rows in _blocks(paths)]
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(4))


def sample_grid_paths(model, n, paths, seed):
    """Stream of GridPath, reproducible per (seed, path index)."""
    sampler = GridSampler(model, n)
    for b, rows in _blocks(paths):
        hatW, dW, dWperp, last = sampler.block(seed, b, rows)
        for i in range(rows):
            yield GridPath(hatW[i], dW[i], dWperp[i], float(last[i]))


def _block_stats(values):
    mean = float(np.mean(values))
    return len(values), mean, float(np.sum((values - mean) ** 2))


def _merge(a, b):
    # Chan et al. pairwise update of (count, mean, M2)
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    d = mb - ma
    return n, ma + d * nb / n, sa + sb + d * d * na * nb / n


def estimate_moment(model, N, n, paths, seed=42, antithetic=True, threads=None) -> McEstimate:
    """Sample mean and standard error of (X_T^n)^N.

    With antithetics, each normal vector Z is paired with -Z (the joint law is
    symmetric) and the pair average is the sampling unit; `paths` counts both.
    """
    if paths < 2:
        raise PreconditionError("need at least 2 paths")
    sampler = GridSampler(model, n)
    units = paths // 2 if antithetic else paths

    def work(job):
        b, rows = job
        Z = sampler.normals(seed, b, rows)
        x = scheme_terminal_batch(*sampler.transform(Z)[:3], model) ** N
        if antithetic:
            x = 0.5 * (x + scheme_terminal_batch(*sampler.transform(-Z)[:3], model) ** N)
        return _block_stats(x)

    jobs = _blocks(units)
    workers = resolve_threads(threads)
    if workers == 1:
        stats = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(work, jobs))
    acc = stats[0]
    for s in stats[1:]:
        acc = _merge(acc, s)
    count, mean, m2 = acc
    se = float(np.sqrt(m2 / (count - 1) / count)) if count > 1 else float("inf")
    return McEstimate(mean, se, count * (2 if antithetic else 1), seed, N, n, antithetic)


def write_raw_paths(fileobj, model, n, paths, seed):
    """Binary dump: magic, uint32 header length, JSON header, float64 rows.

    Each row is hatW[0..M-1], dW[0..M-1], dWperp[0..M-1], W_hat(T), stored
    little-endian and row-major.
    """
    hatW, dW, dWperp, last = sample_grid_arrays(model, n, paths, seed)
    M = hatW.shape[1]
    header = json.dumps({
        "paths": paths, "steps": M, "row_length": 3 * M + 1, "dtype": "<f8", "order": "C",
        "columns": ["hatW[0:M]", "dW[0:M]", "dWperp[0:M]", "hatW_T"],
        "seed": seed, "n": n, **model.to_dict(),
    }, sort_keys=True).encode()
    fileobj.write(RAW_MAGIC)
    fileobj.write(struct.pack("<I", len(header)))
    fileobj.write(header)
    rows = np.concatenate([hatW, dW, dWperp, last[:, None]], axis=1)
    fileobj.write(rows.astype("<f8").tobytes(order="C"))


def read_raw_paths(fileobj):
    if fileobj.read(8) != RAW_MAGIC:
        raise PreconditionError("not a raw path dump")
    (size,) = struct.unpack("<I", fileobj.read(4))
    header = json.loads(fileobj.read(size))
    data = np.frombuffer(fileobj.read(), dtype="<f8")
    return header, data.reshape(header["paths"], header["row_length"])
