"""Low-rank MDPs over a finite state set and the action cube, with exact evaluation.

Transitions factor as ``T_h(s' | s, a) = phi_h(s, a) . psi_h(s')``. Because the
state set is finite, every expectation reduces to a finite sum plus an action
integral, which is computed by midpoint quadrature on a uniform grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ModelIntegrityError
from .grid import default_grid, hypercube_vertices, midpoints, nodes
from .policies import Policy
from .rewards import RewardFunction

NEG_CLAMP = 1e-12
HARD_TOL = 1e-9


def clean_density(p: np.ndarray, where: str = "") -> np.ndarray:
    """Clamp tiny negatives and renormalise rows of ``p``; raise beyond tolerance."""
    p = np.asarray(p, dtype=float)
    low = p.min(axis=-1)
    sums = p.sum(axis=-1)
    if np.any(low < -HARD_TOL) or np.any(np.abs(sums - 1.0) > HARD_TOL) or not np.all(np.isfinite(p)):
        bad = np.argmax((low < -HARD_TOL) | (np.abs(sums - 1.0) > HARD_TOL) | ~np.isfinite(sums))
        raise ModelIntegrityError(
            f"invalid transition density{where}: min={np.ravel(low)[bad]:.3e}, sum={np.ravel(sums)[bad]:.12f}"
        )
    p = np.where(p < 0, 0.0, p)
    return p / p.sum(axis=-1, keepdims=True)


def check_actions(a, m: int) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, m)
    if not np.all(np.isfinite(a)) or np.any(a < 0) or np.any(a > 1):
        raise DomainError(f"actions must lie in [0, 1]^{m}")
    return a


class LowRankMDP:
    """Finite-horizon low-rank MDP.

    Parameters
    ----------
    phi : FeatureMap or sequence of FeatureMap
        State-action embedding, shared across steps or one per step.
    psi : array (n_states, d) or sequence of such arrays
        Row ``s'`` holds ``psi_h(s')``.
    rho : array (n_states,)
        Initial state distribution.
    H : int
        Horizon; steps are ``0..H-1``.
    validate : bool
        Run the normalisation and density checks on construction.
    """

    def __init__(self, phi, psi, rho, H: int, validate: bool = True):
        self.H = int(H)
        if self.H < 1:
            raise DomainError("horizon must be at least 1")
        self.phis = tuple(phi) if isinstance(phi, (list, tuple)) else (phi,) * self.H
        if isinstance(psi, (list, tuple)):
            self.psis = tuple(np.asarray(p, dtype=float) for p in psi)
        else:
            self.psis = (np.asarray(psi, dtype=float),) * self.H
        if len(self.phis) != self.H or len(self.psis) != self.H:
            raise DomainError("need one embedding pair per step")
        self.rho = np.asarray(rho, dtype=float)
        f0 = self.phis[0]
        self.n_states, self.d, self.m = f0.n_states, f0.d, f0.m
        for f, p in zip(self.phis, self.psis):
            if (f.n_states, f.d, f.m) != (self.n_states, self.d, self.m) or p.shape != (self.n_states, self.d):
                raise DomainError("embedding shapes disagree across steps")
        if self.rho.shape != (self.n_states,) or np.any(self.rho < 0) or abs(self.rho.sum() - 1) > 1e-12:
            raise DomainError("rho must be a probability vector over the states")
        if validate:
            self.validate()

    # --- structure -------------------------------------------------------------------

    def phi(self, h: int, s, a) -> np.ndarray:
        return self.phis[h](s, a)

    def psi(self, h: int) -> np.ndarray:
        return self.psis[h]

    @property
    def time_homogeneous(self) -> bool:
        return all(f is self.phis[0] for f in self.phis) and all(p is self.psis[0] for p in self.psis)

    def validate(self, G: int | None = None) -> None:
        """Check the normalisation conditions and density validity on a probe grid."""
        G = G or default_grid(self.m)
        probe = np.vstack([midpoints(G, self.m), nodes(min(G, 9), self.m)])
        seen = set()
        for h in range(self.H):
            key = (id(self.phis[h]), id(self.psis[h]))
            if key in seen:
                continue
            seen.add(key)
            psi = self.psis[h]
            if self.n_states <= 12:
                verts = hypercube_vertices(self.n_states)
            else:
                verts = np.random.default_rng(0).integers(0, 2, (10_000, self.n_states)).astype(float)
            if np.max(np.linalg.norm(verts @ psi, axis=1)) > np.sqrt(self.d) * (1 + 1e-12):
                raise ModelIntegrityError(f"psi normalisation violated at step {h}")
            for s in range(self.n_states):
                f = self.phis[h](s, probe)
                if np.max(np.linalg.norm(f, axis=1)) > 1 + 1e-12:
                    raise ModelIntegrityError(f"||phi|| > 1 at step {h}, state {s}")
                clean_density(f @ psi.T, f" at step {h}, state {s}")

    # --- transitions -----------------------------------------------------------------

    def transition_matrix(self, h: int, s: int, actions: np.ndarray) -> np.ndarray:
        """Densities ``T_h(. | s, a)`` for a batch of actions, shape ``(N, n_states)``."""
        f = self.phis[h](s, np.asarray(actions, dtype=float).reshape(-1, self.m))
        return clean_density(f @ self.psis[h].T, f" at step {h}, state {s}")

    def transition_batch(self, h: int, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        f = self.phis[h](np.asarray(states, dtype=int), np.asarray(actions, dtype=float).reshape(-1, self.m))
        return clean_density(f @ self.psis[h].T, f" at step {h}")

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "rho": self.rho.tolist(),
            "phi": [f.to_dict() for f in self.phis],
            "psi": [p.tolist() for p in self.psis],
        }


class ModelEstimate(LowRankMDP):
    """A learned model: one selected class pair per step plus provenance."""

    def __init__(self, phi, psi, rho, H, phi_idx=None, psi_idx=None, iteration: int = 0,
                 dataset_sizes=None, validate: bool = True):
        super().__init__(phi, psi, rho, H, validate=validate)
        self.phi_idx = list(phi_idx) if phi_idx is not None else [None] * self.H
        self.psi_idx = list(psi_idx) if psi_idx is not None else [None] * self.H
        self.iteration = int(iteration)
        self.dataset_sizes = list(dataset_sizes) if dataset_sizes is not None else [0] * self.H

    def to_dict(self) -> dict:
        out = super().to_dict()
        out.update(
            phi_idx=self.phi_idx, psi_idx=self.psi_idx, iteration=self.iteration,
            dataset_sizes=self.dataset_sizes,
        )
        return out


def transition_density(mdp: LowRankMDP, h: int, s: int, a) -> np.ndarray:
    """``T_h(. | s, a)`` as a clamped, renormalised probability vector."""
    if not 0 <= h < mdp.H or not 0 <= s < mdp.n_states:
        raise DomainError(f"(h={h}, s={s}) out of range")
    a = check_actions(a, mdp.m)
    f = mdp.phis[h](s, a[0])
    return clean_density(f @ mdp.psis[h].T, f" at (h={h}, s={s}, a={a[0].tolist()})")


# --- distances -----------------------------------------------------------------------


def _check_pair(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DomainError(f"length mismatch {p.shape} vs {q.shape}")
    for v in (p, q):
        if np.any(v < -NEG_CLAMP) or np.any(np.abs(v.sum(axis=-1) - 1) > 1e-9):
            raise DomainError("inputs must be probability vectors")
    return np.clip(p, 0, None), np.clip(q, 0, None)


def tv_distance(p, q) -> float:
    p, q = _check_pair(p, q)
    return 0.5 * np.abs(p - q).sum(axis=-1)


def hellinger_distance(p, q) -> float:
    p, q = _check_pair(p, q)
    return np.sqrt(np.clip(0.5 * ((np.sqrt(p) - np.sqrt(q)) ** 2).sum(axis=-1), 0, 1))


# --- exact evaluation ----------------------------------------------------------------


def _check_policy(model: LowRankMDP, policy: Policy, steps: int):
    if policy.m != model.m:
        raise DomainError(f"policy acts in dimension {policy.m}, model in {model.m}")
    for _, comp in policy.components():
        if comp.horizon is not None and comp.horizon < steps:
            raise DomainError(f"policy covers {comp.horizon} steps, need {steps}")


def value_exact(model: LowRankMDP, policy: Policy, reward: RewardFunction, G: int | None = None) -> float:
    """Value of ``policy`` by backward dynamic programming with ``G**m`` midpoint quadrature."""
    G = G or default_grid(model.m)
    _check_policy(model, policy, model.H)
    total = 0.0
    for w, comp in policy.components():
        V = np.zeros(model.n_states)
        for h in range(model.H - 1, -1, -1):
            V_new = np.empty(model.n_states)
            for s in range(model.n_states):
                pts, wts = comp.atoms(h, s, G)
                q = model.transition_matrix(h, s, pts) @ V
                if reward.step(h) is not None:
                    q = q + reward(h, np.full(len(pts), s), pts)
                V_new[s] = wts @ q
            V = V_new
        total += w * (model.rho @ V)
    return float(total)


def state_occupancy(model: LowRankMDP, policy: Policy, G: int | None = None, steps: int | None = None) -> np.ndarray:
    """Marginal state distributions ``d_h`` for ``h = 0..steps``, shape ``(steps + 1, n_states)``."""
    G = G or default_grid(model.m)
    steps = model.H if steps is None else steps
    _check_policy(model, policy, steps)
    out = np.zeros((steps + 1, model.n_states))
    for w, comp in policy.components():
        dist = model.rho.copy()
        out[0] += w * dist
        for h in range(steps):
            nxt = np.zeros(model.n_states)
            for s in np.nonzero(dist)[0]:
                pts, wts = comp.atoms(h, s, G)
                nxt += dist[s] * (wts @ model.transition_matrix(h, s, pts))
            dist = nxt
            out[h + 1] += w * dist
    return out


# --- simulation ----------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """One episode: ``steps[h] = (h, s_h, a_h, s_{h+1})``."""

    steps: tuple
    seed: object = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.steps)


def sample_next_states(dens: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of ``dens`` by inverse-CDF lookup."""
    cdf = np.cumsum(dens, axis=1)
    u = rng.random(dens.shape[0]) * cdf[:, -1]
    return np.minimum((u[:, None] >= cdf).sum(axis=1), dens.shape[1] - 1)


def sample_rollouts(model: LowRankMDP, policy: Policy, n: int, rng: np.random.Generator, steps: int | None = None):
    """Simulate ``n`` episodes of ``steps`` transitions.

    Returns ``states`` of shape ``(n, steps + 1)`` and ``actions`` of shape
    ``(n, steps, m)``. For mixtures, one component is drawn per episode.
    """
    steps = model.H if steps is None else steps
    _check_policy(model, policy, steps)
    comps = policy.components()
    weights = np.array([w for w, _ in comps])
    which = rng.choice(len(comps), size=n, p=weights / weights.sum()) if len(comps) > 1 else np.zeros(n, int)
    states = np.empty((n, steps + 1), dtype=int)
    actions = np.empty((n, steps, model.m))
    states[:, 0] = rng.choice(model.n_states, size=n, p=model.rho)
    for h in range(steps):
        for c in np.unique(which):
            rows = np.nonzero(which == c)[0]
            actions[rows, h] = comps[c][1].sample(h, states[rows, h], rng)
        dens = model.transition_batch(h, states[:, h], actions[:, h])
        states[:, h + 1] = sample_next_states(dens, rng)
    return states, actions


def rollout(model: LowRankMDP, policy: Policy, seed) -> Trajectory:
    rng = np.random.default_rng(seed)
    states, actions = sample_rollouts(model, policy, 1, rng)
    steps = tuple((h, int(states[0, h]), actions[0, h].copy(), int(states[0, h + 1])) for h in range(model.H))
    return Trajectory(steps, seed)


def value_mc(model: LowRankMDP, policy: Policy, reward: RewardFunction, n_traj: int, seed) -> tuple[float, float]:
    """Monte Carlo value estimate and its standard error."""
    if n_traj < 1:
        raise DomainError("n_traj must be at least 1")
    rng = np.random.default_rng(seed)
    states, actions = sample_rollouts(model, policy, n_traj, rng)
    returns = np.zeros(n_traj)
    for h in range(model.H):
        if reward.step(h) is not None:
            returns += reward(h, states[:, h], actions[:, h])
    stderr = float(returns.std(ddof=1) / np.sqrt(n_traj)) if n_traj > 1 else 0.0
    return float(returns.mean()), stderr


def greedy_grid_policy(model: LowRankMDP, reward: RewardFunction, G: int | None = None):
    """Optimal deterministic policy over grid-midpoint actions, by backward induction."""
    from .policies import Deterministic

    G = G or default_grid(model.m)
    pts = midpoints(G, model.m)
    S = model.n_states
    V = np.zeros(S)
    actions = np.empty((model.H, S, model.m))
    for h in range(model.H - 1, -1, -1):
        Q = np.stack([model.transition_matrix(h, s, pts) @ V + reward(h, np.full(len(pts), s), pts)
                      for s in range(S)])
        best = np.argmax(Q, axis=1)
        actions[h] = pts[best]
        V = Q[np.arange(S), best]
    return Deterministic(actions)
