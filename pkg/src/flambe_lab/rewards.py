"""Per-step reward functions with values in [0, 1] and optional Hölder metadata."""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .grid import cell_index, hypercube_vertices


class StepReward:
    """A reward shape ``r(s, a)`` for one step, evaluated on batches."""

    alpha: float | None = None
    L: float | None = None

    def __call__(self, s, a) -> np.ndarray:
        raise NotImplementedError


class ConstantReward(StepReward):
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        if self.values.min() < 0 or self.values.max() > 1:
            raise DomainError("constant rewards must lie in [0, 1]")
        self.alpha, self.L = 1.0, 0.0

    def __call__(self, s, a):
        return self.values[np.asarray(s, dtype=int)]


class AffineReward(StepReward):
    """``r(s, a) = offset[s] + slope[s] @ a``, checked to stay in [0, 1] on the cube."""

    def __init__(self, offset, slope):
        self.offset = np.asarray(offset, dtype=float)
        self.slope = np.atleast_2d(np.asarray(slope, dtype=float))
        corners = self.offset[:, None] + self.slope @ hypercube_vertices(self.slope.shape[1]).T
        if corners.min() < -1e-12 or corners.max() > 1 + 1e-12:
            raise DomainError("affine reward leaves [0, 1] on the action cube")
        self.alpha = 1.0
        self.L = float(np.linalg.norm(self.slope, axis=1).max())

    def __call__(self, s, a):
        s = np.asarray(s, dtype=int)
        a = np.asarray(a, dtype=float).reshape(s.size, -1)
        return np.clip(self.offset[s] + np.einsum("nj,nj->n", self.slope[s], a), 0.0, 1.0)


class CosineReward(StepReward):
    """``r(s, a) = amp[s] * (1 + cos(2 pi k . a + phase[s])) / 2``.

    Lipschitz in ``a`` with constant ``pi * ||k|| * max(amp)``.
    """

    def __init__(self, amp, freq, phase):
        self.amp = np.asarray(amp, dtype=float)
        self.freq = np.asarray(freq, dtype=float)
        self.phase = np.asarray(phase, dtype=float)
        if np.any(self.amp < 0) or np.any(self.amp > 1):
            raise DomainError("cosine reward amplitudes must lie in [0, 1]")
        self.alpha = 1.0
        self.L = float(np.pi * np.linalg.norm(self.freq) * self.amp.max())

    def __call__(self, s, a):
        s = np.asarray(s, dtype=int)
        a = np.asarray(a, dtype=float).reshape(s.size, -1)
        return self.amp[s] * (1.0 + np.cos(2 * np.pi * a @ self.freq + self.phase[s])) / 2.0


class CellReward(StepReward):
    """Reward constant on the cells of a ``G**m`` grid; ``table`` has shape ``(n_states, G**m)``."""

    def __init__(self, table, G: int):
        self.table = np.asarray(table, dtype=float)
        self.G = int(G)
        if self.table.min() < 0 or self.table.max() > 1:
            raise DomainError("cell rewards must lie in [0, 1]")

    def __call__(self, s, a):
        s = np.asarray(s, dtype=int)
        a = np.asarray(a, dtype=float).reshape(s.size, -1)
        return self.table[s, cell_index(a, self.G)]


class RewardFunction:
    """Rewards for steps ``0..H-1``; steps absent from ``steps`` pay zero.

    Parameters
    ----------
    steps : dict
        Maps a step index to a :class:`StepReward`.
    H : int
        Horizon.
    sparse : bool
        Set by :meth:`single_step`; such rewards have value at most 1 under any policy.
    """

    def __init__(self, steps: dict, H: int, sparse: bool = False):
        self.steps = dict(steps)
        self.H = int(H)
        self.sparse = bool(sparse)
        if any(h < 0 or h >= H for h in self.steps):
            raise DomainError(f"reward steps {sorted(self.steps)} outside 0..{H - 1}")
        if sparse and len(self.steps) > 1:
            raise DomainError("a sparse reward may be nonzero at one step only")
        alphas = [r.alpha for r in self.steps.values()]
        Ls = [r.L for r in self.steps.values()]
        if all(x is not None for x in alphas + Ls):
            self.alpha = min(alphas, default=1.0)
            self.L = max(Ls, default=0.0)
        else:
            self.alpha = self.L = None

    @classmethod
    def single_step(cls, h: int, shape: StepReward, H: int) -> "RewardFunction":
        return cls({h: shape}, H, sparse=True)

    def step(self, h: int) -> StepReward | None:
        return self.steps.get(h)

    def __call__(self, h, s, a) -> np.ndarray:
        """Reward at step h; ``a`` is one action ``(m,)`` or a batch ``(N, m)``."""
        a = np.asarray(a, dtype=float)
        single = np.ndim(s) == 0 and a.ndim <= 1
        a2 = a.reshape(1, -1) if a.ndim <= 1 else a
        s2 = np.broadcast_to(np.asarray(s, dtype=int), (a2.shape[0],))
        shape = self.steps.get(h)
        out = np.zeros(a2.shape[0]) if shape is None else shape(s2, a2)
        return float(out[0]) if single else out


def random_sparse_reward(n_states: int, m: int, H: int, rng: np.random.Generator, kind: str = "cosine") -> RewardFunction:
    """A seeded single-step reward at a random step."""
    h = int(rng.integers(H))
    if kind == "cosine":
        shape = CosineReward(rng.uniform(0.2, 1.0, n_states), rng.integers(0, 3, m).astype(float), rng.uniform(0, 2 * np.pi, n_states))
    elif kind == "affine":
        offset = rng.uniform(0, 0.5, n_states)
        slope = rng.uniform(-1, 1, (n_states, m))
        # rescale slopes so every corner stays in [0, 1]
        span = np.abs(slope).sum(axis=1)
        room = np.minimum(offset, 1 - offset)
        slope *= np.where(span > room, room / np.maximum(span, 1e-300), 1.0)[:, None]
        shape = AffineReward(offset, slope)
    elif kind == "state":
        shape = ConstantReward(rng.uniform(0, 1, n_states))
    else:
        raise DomainError(f"unknown reward kind {kind!r}")
    return RewardFunction.single_step(h, shape, H)
