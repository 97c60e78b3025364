"""The FLAMBE outer loop, its theoretical hyperparameters, and model-accuracy evaluation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .grid import default_grid
from .mdp import LowRankMDP, clean_density, sample_rollouts, tv_distance, value_exact
from .oracles import TransitionDataset, mle_fit
from .planner import elliptical_plan
from .policies import Deterministic, FiniteMixture, GridMixture, UniformRandom, splice_uniform
from .rewards import random_sparse_reward
from .smoothness import SmoothnessProfile, smooth_policy

# --- hyperparameters -----------------------------------------------------------------


@dataclass
class HyperParams:
    """FLAMBE hyperparameters; ``log_*`` fields keep values that overflow a float."""

    beta: float
    n: float
    j_max: float
    provenance: str = "practical"
    lam: float | None = None
    eps_tv: float | None = None
    beta_prime: float | None = None
    K: float | None = None
    U: float | None = None
    tau: float | None = None
    kappa: float | None = None
    sigma: float | None = None
    eps_used: float | None = None
    log_n: float | None = None
    log_j_max: float | None = None
    log_eps_tv: float | None = None
    log_trajectories: float | None = None

    @property
    def trajectories(self) -> float:
        if self.log_trajectories is not None:
            return _safe_exp(self.log_trajectories)
        return self.n * self.j_max

    @classmethod
    def practical(cls, n: int, j_max: int, beta: float) -> "HyperParams":
        return cls(beta=float(beta), n=int(n), j_max=int(j_max), provenance="practical")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["trajectories"] = self.trajectories
        return out


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709 else math.inf


def _log1p_exp(y: float) -> float:
    """``log(1 + exp(y))`` without overflow."""
    return float(np.logaddexp(0.0, y))


def theoretical_hyperparams(eps: float, delta: float, profile: SmoothnessProfile, d: int, H: int, m: int,
                            class_sizes, mode: str = "restricted", K: float | None = None,
                            c: float = 1.0, freeze_logs: bool = False) -> HyperParams:
    """Hyperparameters that make the FLAMBE accuracy guarantee hold.

    Parameters
    ----------
    mode : {"restricted", "unrestricted"}
        ``"restricted"`` takes the density cap ``K`` as given; ``"unrestricted"``
        sets ``K = (8 sqrt(m) H L / eps)**sigma`` and then halves ``eps``.
    c : float
        Constant of the sup-versus-mean bound; ``U = c * L_E**(m / (m + alpha_E))``.
    freeze_logs : bool
        Replace every logarithmic factor by 1 (used for scaling checks).

    All intermediate quantities are computed in log space, so astronomically
    large counts are returned as ``inf`` with their logarithms intact.
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise DomainError("eps and delta must lie in (0, 1)")
    if profile.m != m:
        raise DomainError("profile action dimension disagrees with m")
    if profile.alpha_E is None or profile.L_E is None:
        raise DomainError("profile needs alpha_E and L_E")
    tau, kappa = profile.tau, profile.kappa
    sigma = None
    if mode == "unrestricted":
        sigma = profile.sigma
        K = (8 * math.sqrt(m) * H * profile.L / eps) ** sigma
        eps = eps / 2
    elif mode == "restricted":
        if K is None or K < 1:
            raise DomainError("restricted mode needs a density cap K >= 1")
    else:
        raise DomainError(f"unknown mode {mode!r}")

    log = math.log
    U = c * profile.L_E ** kappa
    if U <= 0:
        raise DomainError("U = c * L_E**kappa must be positive")
    log_denom_term = 16 * log(2) + 4 * log(d) + 4 * log(H) + 2 * log(U) - 4 * log(eps)
    if log_denom_term <= 0:
        raise DomainError(
            f"beta' denominator 2^16 d^4 H^4 U^2 eps^-4 - 1 = {math.expm1(log_denom_term):.3e} is not positive"
        )
    # beta' = 8 / (exp(x) - 1) with x = log_denom_term
    log_beta_prime = log(8) - (log_denom_term + math.log(-math.expm1(-log_denom_term)))
    beta_prime = _safe_exp(log_beta_prime)
    # log(1 + 8 / beta') = log(1 + exp(log 8 - log beta'))
    ell = 1.0 if freeze_logs else _log1p_exp(log(8) - log_beta_prime)

    a = 1 + tau
    log_eps_tv = (-(4 * a) * log(8) - (8 * a) * log(H) - (4 * a) * log(U) - (2 * a) * log(K)
                  - (2 * a) * log(d) + (4 * a) * log(eps) - (2 * a) * log(ell))
    log_lam = log_eps_tv - log(2 * d)
    log_root = log_eps_tv / (2 * a)
    log_beta = log(2) + 2 * log(H) + log(K) + log(U) + log_root - log(d)
    log_x = log_lam + log(U) + log_root
    log_jm_lead = log(4 * H * d) - log_x
    jm_log = 1.0 if freeze_logs else _log1p_exp(log(4 * H) - log_x)
    log_j_max = log_jm_lead + log(jm_log)
    n_log_arg = log_j_max + log(H) + log(class_sizes[0]) + log(class_sizes[1]) - log(delta)
    n_log = 1.0 if freeze_logs else n_log_arg
    if n_log <= 0:
        raise DomainError("log(J_max H |Phi| |Psi| / delta) must be positive")
    log_n = -log_eps_tv + log(n_log)
    log_traj = log_n + log_j_max + log(H)

    return HyperParams(
        beta=_safe_exp(log_beta), n=_safe_exp(log_n), j_max=_safe_exp(log_j_max), provenance="theoretical",
        lam=_safe_exp(log_lam), eps_tv=_safe_exp(log_eps_tv), beta_prime=beta_prime, K=float(K), U=U,
        tau=tau, kappa=kappa, sigma=sigma, eps_used=eps, log_n=log_n, log_j_max=log_j_max,
        log_eps_tv=log_eps_tv, log_trajectories=log_traj,
    )


def unrestricted_K(eps: float, H: int, m: int, L: float, sigma: float) -> float:
    return (8 * math.sqrt(m) * H * L / eps) ** sigma


# --- the outer loop ------------------------------------------------------------------


@dataclass
class PlannerConfig:
    beta: float = 0.5
    G: int | None = None
    optimizer: str = "grid"
    smoothness: tuple | None = None  # (L_phi, L_T, alpha) for slack certification


@dataclass
class FlambeDiagnostics:
    rows: list = field(default_factory=list)
    models: list = field(default_factory=list)
    policies: list = field(default_factory=list)
    dataset: TransitionDataset | None = None

    def tv_by_iteration(self) -> dict:
        out = {}
        for r in self.rows:
            out.setdefault(r["iteration"], []).append(r["tv_probe_mean"])
        return {j: float(np.mean(v)) for j, v in out.items()}

    COLUMNS = ("iteration", "h", "tv_probe_mean", "planner_iters", "chosen_phi_idx", "chosen_psi_idx")


def probe_tv_error(model: LowRankMDP, env: LowRankMDP, h: int, probes_s, probes_a) -> float:
    """Mean TV between model and environment transitions over fixed probes at step h."""
    p = clean_density(model.phis[h](probes_s, probes_a) @ model.psis[h].T)
    q = clean_density(env.phis[h](probes_s, probes_a) @ env.psis[h].T)
    return float(np.mean(tv_distance(p, q)))


def run_flambe(env: LowRankMDP, hc, hyper: HyperParams, planner: PlannerConfig | None = None, seed: int = 0,
               probes=None):
    """Run FLAMBE for ``hyper.j_max`` iterations.

    Returns the final :class:`ModelEstimate` and per-iteration diagnostics.
    The planner for data at step h targets step ``h - 1`` with the model's
    first h transitions; its mixture acts for h steps and uniform actions
    take over from step h.
    """
    n, J = int(hyper.n), int(hyper.j_max)
    if n < 1 or J < 1:
        raise DomainError("FLAMBE needs n >= 1 and j_max >= 1")
    planner = planner or PlannerConfig(beta=hyper.beta)
    G = planner.G or default_grid(env.m)
    if probes is None:
        probes = (hc.probes_s, hc.probes_a)
    H = env.H
    data = TransitionDataset(H, env.n_states, env.m)
    diag = FlambeDiagnostics(dataset=data)
    rho = UniformRandom(env.m)
    true_pairs = [(hc.true_phi_idx[h], hc.true_psi_idx[h]) for h in range(H)]
    model = None
    for j in range(1, J + 1):
        phi_idx, psi_idx = [], []
        for h in range(H):
            rng = np.random.default_rng([seed, j, h])
            states, actions = sample_rollouts(env, splice_uniform(rho, h), n, rng, steps=h + 1)
            data.add(h, states[:, h], actions[:, h], states[:, h + 1], iteration=j, seed=seed)
            fit = mle_fit(data, hc, h, true_pair=true_pairs[h])
            phi_idx.append(fit.phi_idx)
            psi_idx.append(fit.psi_idx)
        model = hc.model(phi_idx, psi_idx, env.rho, H, iteration=j,
                         dataset_sizes=[data.size(h) for h in range(H)])
        comps, iters = [UniformRandom(env.m)], [0]
        for h in range(1, H):
            plan = elliptical_plan(model, h - 1, planner.beta, G, planner.optimizer, planner.smoothness, n_probes=0)
            comps.append(splice_uniform(plan.rho, h))
            iters.append(plan.iterations)
        rho = FiniteMixture(comps)
        for h in range(H):
            diag.rows.append({
                "iteration": j, "h": h,
                "tv_probe_mean": probe_tv_error(model, env, h, *probes),
                "planner_iters": iters[h],
                "chosen_phi_idx": phi_idx[h], "chosen_psi_idx": psi_idx[h],
            })
        diag.models.append(model)
        diag.policies.append(rho)
    return model, diag


# --- evaluation ----------------------------------------------------------------------


@dataclass
class EvalGap:
    max_gap: float
    table: list  # rows: (reward_idx, policy_idx, v_model, v_env, gap)


def model_eval_gap(env: LowRankMDP, model: LowRankMDP, rewards, policies, G: int | None = None) -> EvalGap:
    """Largest value discrepancy between model and environment over rewards and policies."""
    if any(not r.sparse for r in rewards):
        raise DomainError("model_eval_gap needs sparse rewards")
    table = []
    for i, R in enumerate(rewards):
        for k, pi in enumerate(policies):
            vm = value_exact(model, pi, R, G)
            ve = value_exact(env, pi, R, G)
            table.append((i, k, vm, ve, abs(vm - ve)))
    return EvalGap(max((row[4] for row in table), default=0.0), table)


def evaluation_policies(n_states: int, m: int, H: int, rng, n_grid: int = 6, n_smooth: int = 6,
                        K_cap: float = 4.0, K_smooth: float = 16.0, G_policy: int | None = None):
    """Grid-mixture policies with density at most ``K_cap`` and smoothed deterministic policies."""
    G_policy = G_policy or (8 if m == 1 else 4)
    cells = G_policy**m
    p_max = K_cap / cells
    out = []
    for _ in range(n_grid):
        probs = rng.dirichlet(np.ones(cells), size=(H, n_states))
        # mix toward uniform until every cell probability respects the cap
        over = probs.max(axis=2, keepdims=True)
        lam = np.clip((over - p_max) / np.maximum(over - 1.0 / cells, 1e-300), 0.0, 1.0)
        probs = (1 - lam) * probs + lam / cells
        probs /= probs.sum(axis=2, keepdims=True)
        out.append(GridMixture(probs, G_policy, m))
    for _ in range(n_smooth):
        out.append(smooth_policy(Deterministic(rng.random((H, n_states, m))), K_smooth, m))
    return out


def evaluation_rewards(n_states: int, m: int, H: int, rng, n: int = 10):
    kinds = ("cosine", "affine", "state")
    return [random_sparse_reward(n_states, m, H, rng, kinds[i % len(kinds)]) for i in range(n)]
