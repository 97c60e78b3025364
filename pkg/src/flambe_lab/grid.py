"""Uniform grids on the action cube [0, 1]^m.

Cells are indexed lexicographically: the flat index of cell ``(c_1, ..., c_m)``
is ``sum_j c_j * G**(m - 1 - j)``, so dimension 1 varies slowest.
"""

from __future__ import annotations

import itertools

import numpy as np

DEFAULT_GRID = {1: 32, 2: 16}


def default_grid(m: int) -> int:
    return DEFAULT_GRID.get(m, 8)


def midpoints(G: int, m: int) -> np.ndarray:
    """Cell midpoints of the ``G**m`` uniform grid, shape ``(G**m, m)``."""
    centers = (np.arange(G) + 0.5) / G
    mesh = np.meshgrid(*([centers] * m), indexing="ij")
    return np.stack([x.ravel() for x in mesh], axis=-1)


def nodes(G: int, m: int) -> np.ndarray:
    """Regular node grid including the cube's boundary, shape ``(G**m, m)``."""
    pts = np.linspace(0.0, 1.0, G)
    mesh = np.meshgrid(*([pts] * m), indexing="ij")
    return np.stack([x.ravel() for x in mesh], axis=-1)


def cell_index(a: np.ndarray, G: int) -> np.ndarray:
    """Flat cell index of each action row; the point 1.0 belongs to the last cell."""
    a = np.atleast_2d(a)
    c = np.minimum(np.floor(a * G).astype(int), G - 1)
    c = np.maximum(c, 0)
    m = a.shape[1]
    weights = G ** np.arange(m - 1, -1, -1)
    return c @ weights


def refine_probs(probs: np.ndarray, G_coarse: int, G_fine: int, m: int) -> np.ndarray:
    """Spread coarse cell probabilities uniformly over the sub-cells of a finer grid."""
    r = G_fine // G_coarse
    p = probs.reshape((G_coarse,) * m)
    for axis in range(m):
        p = np.repeat(p, r, axis=axis)
    return p.ravel() / r**m


def interval_overlap(lo: np.ndarray, hi: np.ndarray, G: int) -> np.ndarray:
    """Length of ``[lo, hi]`` intersected with each of the G cells of [0, 1].

    ``lo`` and ``hi`` broadcast together; the result has a trailing axis of size G.
    """
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    left = np.arange(G) / G
    right = (np.arange(G) + 1) / G
    return np.clip(np.minimum(hi, right) - np.maximum(lo, left), 0.0, None)


def outer_product_weights(factors: list[np.ndarray]) -> np.ndarray:
    """Flattened lexicographic outer product of per-dimension weight vectors."""
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return np.asarray(out).ravel()


def hypercube_vertices(n: int) -> np.ndarray:
    """All points of {0, 1}^n, shape ``(2**n, n)``."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=n)))


def trapezoid_weights(G: int, m: int) -> np.ndarray:
    """Tensor trapezoid weights on the node grid, summing to 1."""
    w = np.full(G, 1.0 / (G - 1))
    w[0] = w[-1] = 0.5 / (G - 1)
    return outer_product_weights([w] * m)
