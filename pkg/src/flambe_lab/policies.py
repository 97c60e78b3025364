"""Time-indexed action distributions over the cube [0, 1]^m.

Every Markov policy exposes, per step ``h`` and state ``s``:

* ``atoms(h, s, G)``: quadrature atoms (points and weights) used by exact
  dynamic programming with a ``G**m`` midpoint grid;
* ``sample(h, states, rng)``: vectorised draws;
* ``density(h, s, a)``: the density w.r.t. Lebesgue measure on the cube
  (``inf`` at the support of a point mass).

Finite mixtures are mixtures over whole trajectories: a component is drawn once
per episode. ``components()`` flattens any policy into ``(weight, markov)`` pairs.
"""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, DomainError
from .grid import cell_index, interval_overlap, midpoints, outer_product_weights, refine_probs


class PointMasses(NamedTuple):
    points: np.ndarray  # (k, m)
    weights: np.ndarray  # (k,)


class CellDensity(NamedTuple):
    """Piecewise-constant density: probability ``probs[c]`` spread uniformly on cell c."""

    G: int
    probs: np.ndarray  # (G**m,)


UNIFORM_LAW = CellDensity(1, np.ones(1))


def law_atoms(law, G: int, m: int):
    """Quadrature atoms of a step law on the ``G**m`` midpoint grid."""
    if isinstance(law, PointMasses):
        return law.points, law.weights
    if G % law.G != 0:
        raise ConfigurationError(
            f"quadrature grid G={G} does not refine the policy grid G={law.G}"
        )
    probs = law.probs if law.G == G else refine_probs(law.probs, law.G, G, m)
    keep = probs > 0
    return midpoints(G, m)[keep], probs[keep]


def law_sample(law, n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(law, PointMasses):
        if law.points.shape[0] == 1:
            return np.repeat(law.points, n, axis=0)
        idx = rng.choice(law.points.shape[0], size=n, p=law.weights)
        return law.points[idx]
    if law.G == 1:
        return rng.random((n, m))
    cells = rng.choice(law.probs.size, size=n, p=law.probs)
    coords = np.stack(np.unravel_index(cells, (law.G,) * m), axis=-1)
    return (coords + rng.random((n, m))) / law.G


def law_density(law, a: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(a)
    if isinstance(law, PointMasses):
        out = np.zeros(a.shape[0])
        for p in law.points:
            out[np.all(a == p, axis=1)] = np.inf
        return out
    m = a.shape[1]
    return law.probs[cell_index(a, law.G)] * law.G**m


def law_max_density(law, m: int) -> float:
    if isinstance(law, PointMasses):
        return np.inf
    return float(law.probs.max() * law.G**m)


class Policy:
    kind = "abstract"
    m: int
    horizon: int | None = None  # None: defined for every step

    def components(self) -> list[tuple[float, "MarkovPolicy"]]:
        return [(1.0, self)]

    def max_density(self, from_step: int = 0) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class MarkovPolicy(Policy):
    def law(self, h: int, s: int):
        raise NotImplementedError

    def atoms(self, h: int, s: int, G: int):
        return law_atoms(self.law(h, s), G, self.m)

    def sample(self, h: int, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        states = np.asarray(states, dtype=int)
        out = np.empty((states.size, self.m))
        for s in np.unique(states):
            mask = states == s
            out[mask] = law_sample(self.law(h, int(s)), int(mask.sum()), self.m, rng)
        return out

    def density(self, h: int, s: int, a) -> np.ndarray:
        return law_density(self.law(h, s), np.asarray(a, dtype=float).reshape(-1, self.m))

    def step_max_density(self, h: int, n_states: int) -> float:
        return max(law_max_density(self.law(h, s), self.m) for s in range(n_states))

    def max_density(self, from_step: int = 0, n_states: int | None = None, H: int | None = None) -> float:
        H = H if H is not None else self.horizon
        if H is None:
            raise DomainError("horizon needed to compute max_density")
        n_states = n_states if n_states is not None else getattr(self, "n_states", 1)
        return max((self.step_max_density(h, n_states) for h in range(from_step, H)), default=0.0)


class GridMixture(MarkovPolicy):
    """Piecewise-constant density: per (h, s), a probability vector over ``G**m`` cells."""

    kind = "GridMixture"

    def __init__(self, probs, G: int, m: int):
        self.probs = np.asarray(probs, dtype=float)
        self.G, self.m = int(G), int(m)
        if self.probs.ndim != 3 or self.probs.shape[2] != self.G**self.m:
            raise DomainError(f"probs shape {self.probs.shape} does not match G={G}, m={m}")
        if np.any(self.probs < 0) or np.any(np.abs(self.probs.sum(axis=2) - 1.0) > 1e-12):
            raise DomainError("cell probabilities must be nonnegative and sum to 1 within 1e-12")
        self.horizon, self.n_states = self.probs.shape[:2]

    def law(self, h, s):
        return CellDensity(self.G, self.probs[h, s])

    def max_density(self, from_step=0, n_states=None, H=None):
        return float(self.probs[from_step:].max() * self.G**self.m)

    def to_dict(self):
        return {"kind": self.kind, "G": self.G, "m": self.m, "probs": self.probs.tolist()}


class Deterministic(MarkovPolicy):
    """One action per (h, s); ``actions`` has shape ``(H, n_states, m)``."""

    kind = "Deterministic"

    def __init__(self, actions):
        self.actions = np.asarray(actions, dtype=float)
        if self.actions.ndim != 3:
            raise DomainError(f"actions must have shape (H, n_states, m), got {self.actions.shape}")
        if np.any(self.actions < 0) or np.any(self.actions > 1):
            raise DomainError("deterministic actions must lie in [0, 1]^m")
        self.horizon, self.n_states, self.m = self.actions.shape

    def law(self, h, s):
        return PointMasses(self.actions[h, s][None, :], np.ones(1))

    def sample(self, h, states, rng):
        return self.actions[h, np.asarray(states, dtype=int)].copy()

    def max_density(self, from_step=0, n_states=None, H=None):
        return np.inf

    def to_dict(self):
        return {"kind": self.kind, "actions": self.actions.tolist()}


class UniformRandom(MarkovPolicy):
    kind = "UniformRandom"

    def __init__(self, m: int, horizon: int | None = None):
        self.m = int(m)
        self.horizon = horizon

    def law(self, h, s):
        return UNIFORM_LAW

    def sample(self, h, states, rng):
        return rng.random((np.size(states), self.m))

    def max_density(self, from_step=0, n_states=None, H=None):
        return 1.0

    def to_dict(self):
        return {"kind": self.kind, "m": self.m, "horizon": self.horizon}


class SplicedUniform(MarkovPolicy):
    """Follow ``base`` for steps ``h < switch_step`` and act uniformly afterwards."""

    kind = "SplicedUniform"

    def __init__(self, base: MarkovPolicy, switch_step: int):
        if base.horizon is not None and base.horizon < switch_step:
            raise DomainError(f"base policy covers {base.horizon} steps, need {switch_step}")
        self.base = base
        self.switch_step = int(switch_step)
        self.m = base.m
        self.horizon = None
        self.n_states = getattr(base, "n_states", 1)

    def law(self, h, s):
        return self.base.law(h, s) if h < self.switch_step else UNIFORM_LAW

    def atoms(self, h, s, G):
        if h < self.switch_step:
            return self.base.atoms(h, s, G)
        return law_atoms(UNIFORM_LAW, G, self.m)

    def sample(self, h, states, rng):
        if h < self.switch_step:
            return self.base.sample(h, states, rng)
        return rng.random((np.size(states), self.m))

    def density(self, h, s, a):
        if h < self.switch_step:
            return self.base.density(h, s, a)
        return np.ones(np.asarray(a).reshape(-1, self.m).shape[0])

    def step_max_density(self, h, n_states):
        if h < self.switch_step:
            return self.base.step_max_density(h, n_states)
        return 1.0

    def max_density(self, from_step=0, n_states=None, H=None):
        if from_step >= self.switch_step:
            return 1.0
        n_states = n_states if n_states is not None else self.n_states
        inner = max(self.base.step_max_density(h, n_states) for h in range(from_step, self.switch_step))
        return max(inner, 1.0)

    def to_dict(self):
        return {"kind": self.kind, "switch_step": self.switch_step, "base": self.base.to_dict()}


# --- box-kernel smoothing -------------------------------------------------------------


def _clipped_box(x, r):
    lo = np.maximum(0.0, x - r)
    hi = np.minimum(1.0, x + r)
    return lo, hi


def _n_sub(Gb: int) -> int:
    return max(64, 4096 // Gb)


@lru_cache(maxsize=64)
def _cell_to_cell_matrix(Gb: int, G: int, r: float) -> np.ndarray:
    """``M[b, c]``: probability that a box-smoothed draw from base cell b lands in cell c (1-D)."""
    n_sub = _n_sub(Gb)
    x = (np.arange(Gb * n_sub) + 0.5) / (Gb * n_sub)
    lo, hi = _clipped_box(x, r)
    frac = interval_overlap(lo, hi, G) / (hi - lo)[:, None]
    return frac.reshape(Gb, n_sub, G).mean(axis=1)


def _inv_volume_integral(a, b, r: float):
    """``int_a^b dx / |[x - r, x + r] & [0, 1]|`` for ``0 <= a <= b <= 1`` and ``r <= 1/2``."""
    # the truncated box length is x + r left of r, 2r in the middle and 1 - x + r right of 1 - r
    la, lb = np.minimum(a, r), np.minimum(b, r)
    left = np.log((lb + r) / (la + r))
    ma, mb = np.clip(a, r, 1 - r), np.clip(b, r, 1 - r)
    middle = (mb - ma) / (2 * r)
    ra, rb = np.maximum(a, 1 - r), np.maximum(b, 1 - r)
    right = np.log((1 - ra + r) / (1 - rb + r))
    return left + middle + right


def _max_window_integral(r: float) -> float:
    """``max_y int_{|x - y| <= r, x in [0, 1]} dx / |[x - r, x + r] & [0, 1]|``.

    The integrand is piecewise of the form 1/(x + r), 1/(2r), 1/(1 - x + r), so
    the maximum over y sits at one of the breakpoints checked here.
    """
    y = np.array([0.0, r, 2 * r, 0.5, 1 - 2 * r, 1 - r, 1.0])
    y = y[(y >= 0) & (y <= 1)]
    lo, hi = np.maximum(0.0, y - r), np.minimum(1.0, y + r)
    return float(np.max(_inv_volume_integral(lo, hi, r)))


def _cell_density_1d(Gb: int, r: float, y: np.ndarray) -> np.ndarray:
    """``g[b, i]``: smoothed density at ``y[i]`` from a uniform draw on base cell b (1-D), in closed form."""
    c0 = np.arange(Gb)[:, None] / Gb
    lo = np.maximum(c0, y[None, :] - r)
    hi = np.minimum(c0 + 1.0 / Gb, y[None, :] + r)
    hi = np.maximum(hi, lo)
    return Gb * _inv_volume_integral(lo, hi, r)


class Smoothed(MarkovPolicy):
    """Box-kernel smoothing of a Markov base policy.

    A draw takes ``a' ~ base(. | s)`` and then ``a`` uniform on the
    l-infinity ball of radius ``K**(-1/m) / 2`` around ``a'`` intersected with
    the cube. The truncated box is renormalised per ``a'``, so next to the
    boundary the density may exceed K (by at most a factor ``2**m``).
    """

    kind = "Smoothed"

    def __init__(self, base: MarkovPolicy, K: float):
        if not K >= 1:
            raise DomainError(f"smoothing width parameter K must be >= 1, got {K}")
        if isinstance(base, Smoothed):
            raise DomainError("smoothing an already smoothed policy is not supported")
        self.base = base
        self.K = float(K)
        self.m = base.m
        self.horizon = base.horizon
        self.n_states = getattr(base, "n_states", 1)
        self.radius = self.K ** (-1.0 / self.m) / 2.0
        self._atom_cache: dict = {}

    def law(self, h, s):
        raise DomainError("a smoothed policy has no cell/point law; use atoms(), sample() or density()")

    def atoms(self, h, s, G):
        key = (h, s, G)
        if key not in self._atom_cache:
            self._atom_cache[key] = self._atoms(self.base.law(h, s), G)
        return self._atom_cache[key]

    def _atoms(self, law, G):
        m, r = self.m, self.radius
        if isinstance(law, PointMasses):
            weights = np.zeros(G**m)
            for p, w in zip(law.points, law.weights):
                lo, hi = _clipped_box(p, r)
                frac = interval_overlap(lo, hi, G) / (hi - lo)[:, None]
                weights += w * outer_product_weights(list(frac))
        else:
            M = _cell_to_cell_matrix(law.G, G, r)
            P = law.probs.reshape((law.G,) * m)
            for axis in range(m):
                P = np.moveaxis(np.tensordot(P, M, axes=([axis], [0])), -1, axis)
            weights = P.ravel()
        keep = weights > 0
        return midpoints(G, m)[keep], weights[keep] / weights.sum()

    def sample(self, h, states, rng):
        centre = self.base.sample(h, states, rng)
        lo, hi = _clipped_box(centre, self.radius)
        return lo + (hi - lo) * rng.random(centre.shape)

    def density(self, h, s, a):
        a = np.asarray(a, dtype=float).reshape(-1, self.m)
        law = self.base.law(h, s)
        r = self.radius
        if isinstance(law, PointMasses):
            out = np.zeros(a.shape[0])
            for p, w in zip(law.points, law.weights):
                lo, hi = _clipped_box(p, r)
                inside = np.all(np.abs(a - p) <= r, axis=1)
                out += w * inside / np.prod(hi - lo)
            return out
        Gb, m = law.G, self.m
        per_dim = [_cell_density_1d(Gb, r, a[:, j]) for j in range(m)]  # each (Gb, N)
        P = law.probs.reshape((Gb,) * m)
        out = np.zeros(a.shape[0])
        for idx in zip(*np.nonzero(P)):
            term = P[idx] * np.ones(a.shape[0])
            for j, b in enumerate(idx):
                term = term * per_dim[j][b]
            out += term
        return out

    def _law_max_density(self, law) -> float:
        r = self.radius
        if isinstance(law, PointMasses):
            lo, hi = _clipped_box(law.points, r)
            return float(np.max(1.0 / np.prod(hi - lo, axis=1)))
        # the smoothed density is at most the base density's maximum times the
        # largest window integral of 1 / (box length) in each coordinate
        Gb, m = law.G, self.m
        return float(law.probs.max() * Gb**m * _max_window_integral(r) ** m)

    def step_max_density(self, h, n_states):
        return max(self._law_max_density(self.base.law(h, s)) for s in range(n_states))

    def max_density(self, from_step=0, n_states=None, H=None):
        """Upper bound ``K_eff`` on the density, accounting for boundary truncation."""
        return MarkovPolicy.max_density(self, from_step, n_states or self.n_states, H)

    def to_dict(self):
        return {"kind": self.kind, "K": self.K, "base": self.base.to_dict()}


class FiniteMixture(Policy):
    """Trajectory-level mixture of policies."""

    kind = "FiniteMixture"

    def __init__(self, policies, weights=None, degenerate: bool = False):
        self.policies = list(policies)
        if not self.policies:
            raise DomainError("a finite mixture needs at least one component")
        if weights is None:
            weights = np.full(len(self.policies), 1.0 / len(self.policies))
        self.weights = np.asarray(weights, dtype=float)
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise DomainError("mixture weights must be nonnegative and sum to 1")
        self.m = self.policies[0].m
        horizons = [p.horizon for p in self.policies if p.horizon is not None]
        self.horizon = min(horizons) if horizons else None
        self.degenerate = degenerate

    def components(self):
        out = []
        for w, p in zip(self.weights, self.policies):
            out.extend((w * wc, c) for wc, c in p.components())
        return out

    def max_density(self, from_step=0, n_states=None, H=None):
        return max(c.max_density(from_step, n_states, H) for _, c in self.components())

    def to_dict(self):
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "policies": [p.to_dict() for p in self.policies],
        }


def splice_uniform(policy: Policy, switch_step: int) -> Policy:
    """``policy`` for steps before ``switch_step``, uniform actions from then on."""
    if isinstance(policy, FiniteMixture):
        return FiniteMixture([splice_uniform(p, switch_step) for p in policy.policies], policy.weights)
    return SplicedUniform(policy, switch_step)


def policy_from_dict(data: dict) -> Policy:
    kind = data.get("kind")
    if kind == "GridMixture":
        return GridMixture(data["probs"], data["G"], data["m"])
    if kind == "Deterministic":
        return Deterministic(data["actions"])
    if kind == "UniformRandom":
        return UniformRandom(data["m"], data.get("horizon"))
    if kind == "SplicedUniform":
        return SplicedUniform(policy_from_dict(data["base"]), data["switch_step"])
    if kind == "Smoothed":
        return Smoothed(policy_from_dict(data["base"]), data["K"])
    if kind == "FiniteMixture":
        return FiniteMixture([policy_from_dict(p) for p in data["policies"]], data["weights"])
    raise DomainError(f"unknown policy kind {kind!r}")
