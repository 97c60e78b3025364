"""State-action embedding families phi(s, a) over a finite state set and [0, 1]^m."""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .grid import cell_index, hypercube_vertices


def _prepare(s, a, m: int):
    a = np.asarray(a, dtype=float)
    single = a.ndim == 1 and np.ndim(s) == 0
    a = a.reshape(-1, m)
    s = np.asarray(s, dtype=int).reshape(-1)
    if s.size == 1 and a.shape[0] != 1:
        s = np.full(a.shape[0], s[0])
    if s.shape[0] != a.shape[0]:
        raise DomainError(f"got {s.shape[0]} states for {a.shape[0]} actions")
    return s, a, single


class FeatureMap:
    """Base class. Subclasses evaluate ``phi(s, a)`` on batches.

    Calling with a scalar state and an action of shape ``(m,)`` returns a
    length-d vector; otherwise the result has shape ``(N, d)``.
    """

    kind = "abstract"
    concave = False

    n_states: int
    d: int
    m: int

    def max_variation_scale(self) -> float:
        """Largest factor accepted by ``with_variation_scale``; unbounded by default."""
        return np.inf

    def __call__(self, s, a) -> np.ndarray:
        s, a, single = _prepare(s, a, self.m)
        out = self._evaluate(s, a)
        return out[0] if single else out

    def _evaluate(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and _dicts_equal(self.to_dict(), other.to_dict())

    def __hash__(self):
        return id(self)


def _dicts_equal(x, y) -> bool:
    if x.keys() != y.keys():
        return False
    return all(np.array_equal(np.asarray(x[k]), np.asarray(y[k])) for k in x)


class CosineFeatures(FeatureMap):
    """Simplex-valued features built from a truncated cosine expansion.

    ``raw_i(s, a) = bias[s, i] + sum_{j, k} coef[s, i, j, k] * cos(pi * (k + 1) * a_j)``
    and ``phi(s, a) = softplus(raw) / sum(softplus(raw))``. The output is
    entrywise positive and sums to one, hence ``||phi||_2 <= 1``.
    """

    kind = "cosine"

    def __init__(self, bias, coef):
        self.bias = np.asarray(bias, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        if self.bias.ndim != 2 or self.coef.ndim != 4 or self.coef.shape[:2] != self.bias.shape:
            raise DomainError(f"bias {self.bias.shape} and coef {self.coef.shape} are inconsistent")
        self.n_states, self.d = self.bias.shape
        self.m, self.bandwidth = self.coef.shape[2:]

    def _evaluate(self, s, a):
        k = np.arange(1, self.bandwidth + 1)
        basis = np.cos(np.pi * a[:, :, None] * k)
        raw = self.bias[s] + np.einsum("ndjk,njk->nd", self.coef[s], basis)
        sp = np.logaddexp(0.0, raw)
        return sp / sp.sum(axis=1, keepdims=True)

    def with_variation_scale(self, c: float) -> "CosineFeatures":
        return CosineFeatures(self.bias, c * self.coef)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bias": self.bias.tolist(), "coef": self.coef.tolist()}


class AffineFeatures(FeatureMap):
    """``phi(s, a) = offset[s] + slope[s] @ a``; affine, hence concave in ``a``.

    Validity (nonnegative, summing to one on the whole cube) is checked at the
    cube's vertices, which suffices for an affine map.
    """

    kind = "affine"
    concave = True

    def __init__(self, offset, slope):
        self.offset = np.asarray(offset, dtype=float)
        self.slope = np.asarray(slope, dtype=float)
        if self.slope.ndim != 3 or self.slope.shape[:2] != self.offset.shape:
            raise DomainError(f"offset {self.offset.shape} and slope {self.slope.shape} are inconsistent")
        self.n_states, self.d, self.m = self.slope.shape

    def _evaluate(self, s, a):
        return self.offset[s] + np.einsum("ndj,nj->nd", self.slope[s], a)

    def with_variation_scale(self, c: float) -> "AffineFeatures":
        return AffineFeatures(self.offset, c * self.slope)

    def max_variation_scale(self) -> float:
        """Largest slope multiplier that keeps every cube corner on the simplex."""
        moves = np.einsum("sdj,vj->svd", self.slope, hypercube_vertices(self.m))
        off = np.broadcast_to(self.offset[:, None, :], moves.shape)
        neg = moves < 0
        return float(np.min(off[neg] / -moves[neg])) if neg.any() else np.inf

    def to_dict(self) -> dict:
        return {"kind": self.kind, "offset": self.offset.tolist(), "slope": self.slope.tolist()}


class TableFeatures(FeatureMap):
    """Features that are constant on the cells of a ``G**m`` grid.

    ``table`` has shape ``(n_states, G**m, d)``. With ``G = 1`` the features do
    not depend on the action at all.
    """

    kind = "table"

    def __init__(self, table, G: int, m: int):
        self.table = np.asarray(table, dtype=float)
        self.G = int(G)
        self.m = int(m)
        if self.table.ndim != 3 or self.table.shape[1] != self.G**self.m:
            raise DomainError(f"table shape {self.table.shape} does not match G={G}, m={m}")
        self.n_states, _, self.d = self.table.shape

    @classmethod
    def constant(cls, vectors, m: int) -> "TableFeatures":
        """Action-independent features from a ``(n_states, d)`` array."""
        v = np.asarray(vectors, dtype=float)
        return cls(v[:, None, :], 1, m)

    def _evaluate(self, s, a):
        return self.table[s, cell_index(a, self.G)]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "table": self.table.tolist(), "G": self.G, "m": self.m}


_KINDS = {"cosine": CosineFeatures, "affine": AffineFeatures, "table": TableFeatures}


def feature_map_from_dict(data: dict) -> FeatureMap:
    kind = data.get("kind")
    if kind == "cosine":
        return CosineFeatures(data["bias"], data["coef"])
    if kind == "affine":
        return AffineFeatures(data["offset"], data["slope"])
    if kind == "table":
        return TableFeatures(data["table"], data["G"], data["m"])
    raise DomainError(f"unknown feature kind {kind!r}; expected one of {sorted(_KINDS)}")
