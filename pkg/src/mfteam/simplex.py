"""Enumeration, quantization and distances on the spaces of distributions.

Four spaces are involved: the probability simplex, the empirical
distributions of ``n`` agents (``M_n``), the unit box, and the uniform product
grid of resolution ``nu`` on the unit box (``Q_nu``). Points are plain numpy
vectors; enumerations return 2-D arrays with one point per row.
"""
from __future__ import annotations

import math

import numpy as np

DEFAULT_CAP = 10**7


class CapExceededError(RuntimeError):
    """An enumeration or computation would exceed its configured size cap."""


def _check_cap(size: int, cap: int, what: str):
    if size > cap:
        raise CapExceededError(f"{what} has {size} elements, cap is {cap}")


def mean_field_of(states, num_states: int) -> np.ndarray:
    """Empirical distribution of a population of states."""
    states = np.asarray(states, dtype=np.int64)
    if states.size == 0:
        raise ValueError("empty population")
    if states.min() < 0 or states.max() >= num_states:
        raise ValueError("state out of range")
    return np.bincount(states, minlength=num_states) / states.size


def num_empirical(n: int, dim: int) -> int:
    return math.comb(n + dim - 1, dim - 1)


def compositions(n: int, dim: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``dim`` summing to ``n``, lex ascending."""
    if dim == 1:
        return np.array([[n]], dtype=np.int64)
    rows = []
    for first in range(n + 1):
        rest = compositions(n - first, dim - 1)
        rows.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.concatenate(rows)


def enumerate_empirical(n: int, dim: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Points of ``M_n`` ordered lexicographically by their count vectors."""
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be >= 1")
    _check_cap(num_empirical(n, dim), cap, "M_n")
    return compositions(n, dim) / n


class EmpiricalIndex:
    """Maps count vectors of ``n`` agents to their position in :func:`enumerate_empirical`.

    Lookup goes through a dense table over the first ``dim - 1`` counts.
    """

    def __init__(self, n: int, dim: int, cap: int = DEFAULT_CAP):
        self.n, self.dim = n, dim
        self.counts = compositions(n, dim) if dim > 1 else np.array([[n]])
        _check_cap(len(self.counts), cap, "M_n")
        self.size = len(self.counts)
        shape = (n + 1,) * (dim - 1)
        self._table = np.full(shape, -1, dtype=np.int64)
        if dim > 1:
            self._table[tuple(self.counts[:, :-1].T)] = np.arange(self.size)

    @property
    def points(self) -> np.ndarray:
        return self.counts / self.n

    def index(self, counts) -> np.ndarray:
        counts = np.asarray(counts, dtype=np.int64)
        if self.dim == 1:
            return np.zeros(counts.shape[:-1], dtype=np.int64)
        return self._table[tuple(np.moveaxis(counts[..., :-1], -1, 0))]


def enumerate_grid(nu: int, dim: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Points of ``Q_nu`` in row-major order of their integer coordinates."""
    if nu < 1 or dim < 1:
        raise ValueError("nu and dim must be >= 1")
    _check_cap((nu + 1) ** dim, cap, "Q_nu")
    axes = np.indices((nu + 1,) * dim).reshape(dim, -1).T
    return axes / nu


def quantize_counts(z, nu: int) -> np.ndarray:
    """Integer grid coordinates of the nearest point of ``Q_nu`` (ties round up)."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    return np.floor(z * nu + 0.5).astype(np.int64)


def quantize(z, nu: int) -> np.ndarray:
    """Nearest point of ``Q_nu`` to ``z`` in the sup norm.

    The grid is a product of 1-D grids, so rounding each coordinate to the
    nearest multiple of ``1/nu`` is an exact argmin. Ties round up. Inputs
    outside ``[0, 1]`` are clipped first, which keeps the argmin property.
    """
    return quantize_counts(z, nu) / nu


def grid_flat_index(counts, nu: int) -> np.ndarray:
    """Row-major position of integer grid coordinates in :func:`enumerate_grid`."""
    counts = np.asarray(counts, dtype=np.int64)
    dim = counts.shape[-1]
    weights = (nu + 1) ** np.arange(dim - 1, -1, -1, dtype=np.int64)
    return counts @ weights


def linf(z1, z2) -> float:
    z1, z2 = np.asarray(z1, dtype=float), np.asarray(z2, dtype=float)
    if z1.shape != z2.shape:
        raise ValueError("dimension mismatch")
    return float(np.max(np.abs(z1 - z2), initial=0.0))


def is_simplex(z, tol: float = 1e-12) -> bool:
    z = np.asarray(z, dtype=float)
    return bool(np.all(z >= -tol) and np.all(z <= 1 + tol) and abs(z.sum() - 1) <= tol)


def is_empirical(z, n: int, tol: float = 1e-12) -> bool:
    z = np.asarray(z, dtype=float)
    return is_simplex(z, tol) and bool(np.all(np.abs(z * n - np.round(z * n)) <= tol * n))


def is_grid(z, nu: int, tol: float = 1e-12) -> bool:
    z = np.asarray(z, dtype=float)
    return bool(
        np.all(z >= -tol) and np.all(z <= 1 + tol)
        and np.all(np.abs(z * nu - np.round(z * nu)) <= tol * nu)
    )


def sample_simplex(rng: np.random.Generator, dim: int, size=None) -> np.ndarray:
    return rng.dirichlet(np.ones(dim), size=size)
