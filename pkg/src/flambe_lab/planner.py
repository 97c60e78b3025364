"""Elliptical planner: grow a policy mixture that covers the feature space of one step.

All expectations are exact under the model (finite states, grid quadrature
over actions), so the inner maximisation is an exact dynamic program over
grid-midpoint actions.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DomainError, IterationBoundError
from .grid import default_grid, midpoints
from .mdp import LowRankMDP, state_occupancy
from .policies import Deterministic, FiniteMixture, GridMixture, Policy, UniformRandom


def iteration_bound(d: int, beta: float) -> int:
    return math.ceil(8 * d * math.log(1 + 8 / beta) / beta)


@dataclass
class ObjectiveResult:
    policy: Deterministic
    objective: float
    certified: bool
    variation_bound: float
    optimizer: str
    warnings: list = field(default_factory=list)


def _check_sym(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or np.max(np.abs(M - M.T)) > 1e-9:
        raise DomainError("Sigma_inv must be a symmetric square matrix")
    return 0.5 * (M + M.T)


def _golden_max(f, lo=0.0, hi=1.0, iters=60):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    cand = [(f(lo), lo), (fc, c), (fd, d), (f(hi), hi)]
    return max(cand, key=lambda t: t[0])


def _coordinate_ascent(fn, start: np.ndarray, sweeps: int = 4) -> np.ndarray:
    """Maximise a concave function over the unit box one coordinate at a time."""
    x = start.copy()
    for _ in range(sweeps):
        for j in range(len(x)):
            def along(t, j=j):
                y = x.copy()
                y[j] = t
                return fn(y)
            val, t = _golden_max(along)
            if val >= fn(x):
                x[j] = t
    return x


def optimize_elliptical_objective(model: LowRankMDP, h_tilde: int, Sigma_inv, G: int | None = None,
                                  optimizer: str = "grid", smoothness=None) -> ObjectiveResult:
    """Maximise ``E[phi_h(s_h, a_h)' Sigma_inv phi_h(s_h, a_h)]`` over deterministic policies.

    Parameters
    ----------
    model : LowRankMDP
        Must define steps ``0..h_tilde``.
    smoothness : tuple, optional
        ``(L_phi, L_T, alpha)`` for the model class. Used to certify that the
        grid optimum is within ``beta / 2`` of the continuous optimum; without
        it the result is marked uncertified.
    optimizer : {"grid", "concave"}
        ``"concave"`` refines the linear steps by coordinate ascent when the
        embedding is marked concave; otherwise it falls back to grid search.
    """
    M = _check_sym(Sigma_inv)
    if not 0 <= h_tilde < model.H:
        raise DomainError(f"h_tilde={h_tilde} outside the model's horizon")
    G = G or default_grid(model.m)
    S, m = model.n_states, model.m
    pts = midpoints(G, m)
    notes = []

    F = np.stack([model.phis[h_tilde](s, pts) for s in range(S)])  # (S, N, d)
    r = np.einsum("snd,de,sne->sn", F, M, F)
    best = np.argmax(r, axis=1)
    V = r[np.arange(S), best]
    actions = np.empty((h_tilde + 1, S, m))
    actions[h_tilde] = pts[best]

    use_concave = optimizer == "concave"
    if optimizer not in ("grid", "concave"):
        raise DomainError(f"unknown optimizer {optimizer!r}")
    for h in range(h_tilde - 1, -1, -1):
        P = np.stack([model.transition_matrix(h, s, pts) for s in range(S)])  # (S, N, S)
        Q = P @ V
        best = np.argmax(Q, axis=1)
        acts = pts[best]
        Vh = Q[np.arange(S), best]
        if use_concave:
            w = model.psis[h].T @ V
            if model.phis[h].concave and np.all(w >= 0):
                for s in range(S):
                    fn = lambda a, s=s: float(model.phis[h](s, a) @ w)
                    a_star = _coordinate_ascent(fn, acts[s])
                    val = float(model.transition_matrix(h, s, a_star[None])[0] @ V)
                    if val > Vh[s]:
                        acts[s], Vh[s] = a_star, val
            else:
                notes.append(f"step {h}: embedding not certified concave; used grid search")
                warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
        actions[h] = acts
        V = Vh

    objective = float(model.rho @ V)
    if smoothness is None:
        variation, certified = np.inf, False
    else:
        L_phi, L_T, alpha = smoothness
        variation = (2 * L_phi + h_tilde * L_T) * (math.sqrt(m) / G) ** alpha
        certified = True
    return ObjectiveResult(Deterministic(actions), objective, certified, float(variation),
                           "concave" if use_concave else "grid", notes)


def expected_feature_covariance(model: LowRankMDP, policy: Policy, h_tilde: int, G: int | None = None) -> np.ndarray:
    """``E[phi_h phi_h']`` at step ``h_tilde`` under the model's occupancy."""
    G = G or default_grid(model.m)
    out = np.zeros((model.d, model.d))
    for w, comp in policy.components():
        occ = state_occupancy(model, comp, G, steps=h_tilde)[h_tilde]
        for s in np.nonzero(occ)[0]:
            pts, wts = comp.atoms(h_tilde, s, G)
            F = model.phis[h_tilde](s, pts)
            out += w * occ[s] * (F.T * wts) @ F
    return 0.5 * (out + out.T)


def elliptical_objective(model: LowRankMDP, policy: Policy, h_tilde: int, Sigma_inv, G: int | None = None) -> float:
    """``E[phi' Sigma_inv phi]`` at step ``h_tilde`` for a given policy."""
    return float(np.sum(expected_feature_covariance(model, policy, h_tilde, G) * np.asarray(Sigma_inv)))


def random_grid_policies(n_states: int, m: int, steps: int, G: int, n: int, rng) -> list:
    """Half deterministic policies on grid midpoints, half random grid mixtures."""
    pts = midpoints(G, m)
    out = []
    for k in range(n):
        if k % 2 == 0:
            out.append(Deterministic(pts[rng.integers(len(pts), size=(steps, n_states))]))
        else:
            probs = rng.dirichlet(np.full(len(pts), 0.3), size=(steps, n_states))
            probs /= probs.sum(axis=2, keepdims=True)
            out.append(GridMixture(probs, G, m))
    return out


@dataclass
class PlanResult:
    rho: FiniteMixture
    iterations: int
    trace: list  # (t, objective, logdet of the matrix the objective used)
    Sigma: np.ndarray
    policies: list
    degenerate_mixture: bool
    certified: bool
    bound: int
    beta: float
    spot_check_max: float = float("nan")
    spot_check_scaled_max: float = float("nan")
    spot_check_ok: bool = True

    def write_trace(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["t", "objective", "logdet"])
            for row in self.trace:
                w.writerow([row[0], repr(float(row[1])), repr(float(row[2]))])


def elliptical_plan(model: LowRankMDP, h_tilde: int, beta: float, G: int | None = None, optimizer: str = "grid",
                    smoothness=None, n_probes: int = 32, probe_seed: int = 0) -> PlanResult:
    """Run the planner for target step ``h_tilde`` with tolerance ``beta``."""
    if not 0 < beta <= 8:
        raise DomainError("beta must lie in (0, 8]")
    G = G or default_grid(model.m)
    d = model.d
    bound = iteration_bound(d, beta)
    Sigma = np.eye(d)
    policies, trace = [], []
    certified = True
    t = 0
    while True:
        t += 1
        if t > bound:
            raise IterationBoundError(f"planner exceeded {bound} iterations (d={d}, beta={beta})")
        chol = cho_factor(Sigma)
        Sigma_inv = cho_solve(chol, np.eye(d))
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
        res = optimize_elliptical_objective(model, h_tilde, Sigma_inv, G, optimizer, smoothness)
        certified &= res.certified and res.variation_bound < beta / 2
        trace.append((t, res.objective, logdet))
        if res.objective <= beta / 2:
            break
        policies.append(res.policy)
        Sigma = Sigma + expected_feature_covariance(model, res.policy, h_tilde, G)

    if not certified and smoothness is not None:
        warnings.warn("grid too coarse to certify the beta/2 optimisation slack", RuntimeWarning, stacklevel=2)
    degenerate = not policies
    rho = FiniteMixture([UniformRandom(model.m)], degenerate=True) if degenerate else FiniteMixture(policies)
    out = PlanResult(rho, t, trace, Sigma, policies, degenerate, certified, bound, beta)
    if n_probes:
        rng = np.random.default_rng(probe_seed)
        Sigma_inv = np.linalg.inv(Sigma)
        T = max(len(policies), 1)
        vals = [elliptical_objective(model, p, h_tilde, Sigma_inv, G)
                for p in random_grid_policies(model.n_states, model.m, h_tilde + 1, G, n_probes, rng)]
        out.spot_check_max = float(max(vals))
        if policies:
            Sigma_rho = sum(expected_feature_covariance(model, p, h_tilde, G) for p in policies) / T
            scaled = np.linalg.inv(Sigma_rho + np.eye(d) / T)
            # equals T times the objective against the final matrix
            out.spot_check_scaled_max = float(max(
                elliptical_objective(model, p, h_tilde, scaled, G)
                for p in random_grid_policies(model.n_states, model.m, h_tilde + 1, G, n_probes,
                                              np.random.default_rng(probe_seed))))
        out.spot_check_ok = out.spot_check_max <= beta and (
            not policies or out.spot_check_scaled_max <= T * beta * (1 + 1e-9))
    return out
