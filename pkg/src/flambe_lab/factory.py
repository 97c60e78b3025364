"""Seeded synthetic low-rank MDPs with certified action smoothness, and finite hypothesis classes."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConstructionError, DomainError, InvariantViolation
from .features import AffineFeatures, CosineFeatures, FeatureMap
from .grid import hypercube_vertices, nodes
from .mdp import LowRankMDP, clean_density, tv_distance, hellinger_distance
from .smoothness import SmoothnessProfile, holder_seminorm

# node grids used to scale embeddings; they contain the 256-node grid (m=1)
SCALING_GRID = {1: 1021, 2: 32}
MAX_DECOY_ATTEMPTS = 100
N_PROBES = 64


@dataclass
class EnvConfig:
    n_states: int = 3
    d: int = 2
    m: int = 1
    H: int = 3
    seed: int = 7
    alpha: float = 1.0
    L_target: float = 2.0
    n_phi_decoys: int = 4
    n_psi_decoys: int = 4
    decoy_scale: float = 0.3
    feature_scale: float = 1.0
    bandwidth: int = 1
    family: str = "cosine"
    per_step: bool = False
    psi_concentration: float = 1.0

    def __post_init__(self):
        if min(self.n_states, self.d, self.m, self.H) < 1:
            raise DomainError("n_states, d, m and H must be positive")
        if self.d > self.n_states:
            raise DomainError(f"d={self.d} exceeds n_states={self.n_states}")
        if not 0 < self.alpha <= 1:
            raise DomainError("alpha must lie in (0, 1]")
        if min(self.n_phi_decoys, self.n_psi_decoys) < 0:
            raise DomainError("decoy counts must be nonnegative")
        if self.family not in ("cosine", "affine"):
            raise DomainError(f"unknown feature family {self.family!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _streams(seed: int):
    names = ("phi", "psi", "rho", "phi_decoy", "psi_decoy", "shuffle", "probe")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def feature_holder_constant(phi: FeatureMap, alpha: float, G: int | None = None, window: int | None = None) -> float:
    """Largest node-grid Hölder quotient of ``a -> phi(s, a)`` (Euclidean norm) over states."""
    G = G or SCALING_GRID.get(phi.m, 16)
    pts = nodes(G, phi.m)
    best = 0.0
    for s in range(phi.n_states):
        vals = phi(s, pts).reshape((G,) * phi.m + (phi.d,))
        best = max(best, holder_seminorm(vals, alpha, phi.m, window))
    return best


def cap_variation(phi, alpha: float, L_cap: float, fill: bool = False):
    """Rescale the action dependence of ``phi`` so its Hölder constant is at most ``L_cap``.

    With ``fill`` the scale is pushed up to the cap; otherwise it is only reduced.
    """
    L1 = feature_holder_constant(phi, alpha)
    if L1 == 0.0:
        return phi
    if L_cap <= 0:
        raise ConstructionError(f"smoothness scale {L_cap} is below the flattest achievable for a varying embedding")
    if L1 <= L_cap and not fill:
        return phi
    lo, hi = 0.0, 1.0
    if L1 <= L_cap:
        c_max = min(phi.max_variation_scale(), 2.0**30)
        while feature_holder_constant(phi.with_variation_scale(hi), alpha) <= L_cap:
            if hi >= c_max:
                return phi.with_variation_scale(c_max)
            lo, hi = hi, min(2 * hi, c_max)
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if feature_holder_constant(phi.with_variation_scale(mid), alpha) <= L_cap:
            lo = mid
        else:
            hi = mid
    out = phi.with_variation_scale(lo)
    if feature_holder_constant(out, alpha) > L_cap:
        raise ConstructionError("could not scale the embedding below the smoothness target")
    return out


def _random_features(cfg: EnvConfig, rng: np.random.Generator) -> FeatureMap:
    S, d, m = cfg.n_states, cfg.d, cfg.m
    if cfg.family == "cosine":
        bias = rng.normal(0.0, 1.0, (S, d))
        coef = cfg.feature_scale * rng.normal(0.0, 1.0, (S, d, m, cfg.bandwidth))
        phi = CosineFeatures(bias, coef)
    else:
        # convex combination of two simplex points per state, moving linearly in a
        base = rng.dirichlet(np.ones(d), S)
        ends = rng.dirichlet(np.ones(d), (S, m))
        slope = cfg.feature_scale * (ends - base[:, None, :]).transpose(0, 2, 1) / m
        phi = AffineFeatures(base, slope)
    return cap_variation(phi, cfg.alpha, cfg.L_target, fill=cfg.feature_scale > 0)


def _random_psi(cfg: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    # column i is a distribution over next states, so phi on the simplex yields valid densities
    return rng.dirichlet(np.full(cfg.n_states, cfg.psi_concentration), cfg.d).T


def make_smooth_lowrank_mdp(config: EnvConfig) -> LowRankMDP:
    """Build a seeded low-rank MDP whose embeddings vary smoothly in the action."""
    if config.L_target < 0 or (config.L_target == 0 and config.feature_scale > 0 and config.d > 1):
        raise ConstructionError(
            f"L_target={config.L_target} is below the flattest achievable scale for feature_scale={config.feature_scale}"
        )
    rng = _streams(config.seed)
    n_truths = config.H if config.per_step else 1
    phis = [_random_features(config, rng["phi"]) for _ in range(n_truths)]
    psis = [_random_psi(config, rng["psi"]) for _ in range(n_truths)]
    rho = rng["rho"].dirichlet(np.ones(config.n_states))
    if config.per_step:
        return LowRankMDP(phis, psis, rho, config.H)
    return LowRankMDP(phis[0], psis[0], rho, config.H)


@dataclass
class HypothesisClass:
    """Finite candidate sets with the indices of the true pair per step."""

    Phi: list
    Psi: list
    true_phi_idx: list
    true_psi_idx: list
    probes_s: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    probes_a: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    separations: dict = field(default_factory=dict)

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.Phi), len(self.Psi)

    @property
    def min_separation(self) -> float:
        return min(self.separations.values(), default=np.inf)

    def model(self, phi_idx, psi_idx, rho, H, **kw) -> LowRankMDP:
        from .mdp import ModelEstimate

        phis = [self.Phi[i] for i in phi_idx]
        psis = [self.Psi[j] for j in psi_idx]
        return ModelEstimate(phis, psis, rho, H, phi_idx=phi_idx, psi_idx=psi_idx, **kw)


def make_probes(n_states: int, m: int, rng: np.random.Generator, n: int = N_PROBES):
    s = np.arange(n) % n_states
    a = rng.random((n, m))
    return s, a


def probe_tv(phi_a, psi_a, phi_b, psi_b, s, a) -> np.ndarray:
    """TV between two factored models at each probe ``(s_i, a_i)``."""
    p = clean_density(phi_a(s, a) @ psi_a.T)
    q = clean_density(phi_b(s, a) @ psi_b.T)
    return tv_distance(p, q)


def _perturb_phi(phi: FeatureMap, scale: float, rng, cfg: EnvConfig) -> FeatureMap:
    if isinstance(phi, CosineFeatures):
        bias_noise = rng.normal(size=phi.bias.shape)
        coef_noise = rng.normal(size=phi.coef.shape) * bool(np.any(phi.coef))  # flat truths get flat decoys
        out = CosineFeatures(phi.bias + scale * bias_noise, phi.coef + scale * coef_noise)
    elif isinstance(phi, AffineFeatures):
        # perturb the vertex values and refit; corners stay on the simplex
        verts = hypercube_vertices(phi.m)
        vals = phi.offset[:, None, :] + np.einsum("sdj,vj->svd", phi.slope, verts)
        noise = rng.normal(size=vals.shape)
        if not np.any(phi.slope):
            noise = np.broadcast_to(noise[:, :1, :], vals.shape)  # flat truths get flat decoys
        logits = np.log(np.clip(vals, 1e-12, None)) + scale * noise
        vals = np.exp(logits - logits.max(axis=2, keepdims=True))
        vals /= vals.sum(axis=2, keepdims=True)
        offset = vals[:, 0, :]
        slope = np.stack([vals[:, 2 ** (phi.m - 1 - j), :] - offset for j in range(phi.m)], axis=2)
        out = AffineFeatures(offset, slope)
    else:
        raise DomainError(f"cannot perturb features of kind {phi.kind!r}")
    return cap_variation(out, cfg.alpha, cfg.L_target)


def _perturb_psi(psi: np.ndarray, scale: float, rng) -> np.ndarray:
    logits = np.log(np.clip(psi, 1e-300, None)) + scale * rng.normal(size=psi.shape)
    logits -= logits.max(axis=0, keepdims=True)
    out = np.exp(logits)
    return out / out.sum(axis=0, keepdims=True)


def make_hypothesis_class(mdp: LowRankMDP, config: EnvConfig) -> HypothesisClass:
    """True embeddings plus seeded decoys, shuffled; reports probe TV separation per decoy."""
    rng = _streams(config.seed)
    probes_s, probes_a = make_probes(mdp.n_states, mdp.m, rng["probe"])

    true_phis, true_psis = [], []
    for f, p in zip(mdp.phis, mdp.psis):
        if not any(f is g for g in true_phis):
            true_phis.append(f)
        if not any(p is q for q in true_psis):
            true_psis.append(p)

    def accept(phi, psi, ref_phi, ref_psi):
        tv = probe_tv(phi, psi, ref_phi, ref_psi, probes_s, probes_a)
        return tv.max() >= 1e-6, float(tv.max())

    def build(kind, count, stream):
        made, seps = [], []
        for k in range(count):
            t = k % (len(true_phis) if kind == "phi" else len(true_psis))
            for attempt in range(MAX_DECOY_ATTEMPTS):
                sub = np.random.default_rng([config.seed, k, attempt, 0 if kind == "phi" else 1])
                sub = sub if attempt else stream
                if kind == "phi":
                    cand = _perturb_phi(true_phis[t], config.decoy_scale, sub, config)
                    ok, sep = accept(cand, true_psis[0], true_phis[t], true_psis[0])
                else:
                    cand = _perturb_psi(true_psis[t], config.decoy_scale, sub)
                    ok, sep = accept(true_phis[0], cand, true_phis[0], true_psis[t])
                if ok:
                    break
            else:
                raise ConstructionError(
                    f"{kind} decoy {k} stayed identical to the truth after {MAX_DECOY_ATTEMPTS} attempts"
                )
            made.append(cand)
            seps.append(sep)
        return made, seps

    phi_decoys, phi_seps = build("phi", config.n_phi_decoys, rng["phi_decoy"])
    psi_decoys, psi_seps = build("psi", config.n_psi_decoys, rng["psi_decoy"])

    Phi = true_phis + phi_decoys
    Psi = true_psis + psi_decoys
    perm_phi = rng["shuffle"].permutation(len(Phi))
    perm_psi = rng["shuffle"].permutation(len(Psi))
    Phi = [Phi[i] for i in perm_phi]
    Psi = [Psi[i] for i in perm_psi]
    pos_phi = {int(old): new for new, old in enumerate(perm_phi)}
    pos_psi = {int(old): new for new, old in enumerate(perm_psi)}

    def index_of(items, target):
        return next(i for i, x in enumerate(items) if x is target)

    true_phi_idx = [pos_phi[index_of(true_phis, f)] for f in mdp.phis]
    true_psi_idx = [pos_psi[index_of(true_psis, p)] for p in mdp.psis]
    separations = {("phi", pos_phi[len(true_phis) + k]): s for k, s in enumerate(phi_seps)}
    separations.update({("psi", pos_psi[len(true_psis) + k]): s for k, s in enumerate(psi_seps)})

    hc = HypothesisClass(Phi, Psi, true_phi_idx, true_psi_idx, probes_s, probes_a, separations)
    check_realizable(hc, mdp)
    for i, f in enumerate(hc.Phi):
        for j, p in enumerate(hc.Psi):
            clean_density(f(probes_s, probes_a) @ p.T, f" for class pair ({i}, {j})")
    return hc


def check_realizable(hc: HypothesisClass, mdp: LowRankMDP) -> None:
    for h in range(mdp.H):
        if hc.Phi[hc.true_phi_idx[h]] is not mdp.phis[h] or hc.Psi[hc.true_psi_idx[h]] is not mdp.psis[h]:
            raise InvariantViolation(f"true embeddings missing from the class at step {h}")


# --- smoothness certificate ----------------------------------------------------------


@dataclass
class SmoothnessCertificate:
    """Grid estimates (lower bounds) of the class smoothness constants."""

    alpha: float
    G: int
    L_phi: float
    L_T: float
    L_E: float
    L_hellinger: float
    U: float
    feature_error_bound: float
    feature_error_holds: bool

    def profile(self, m: int, reward_alpha: float | None = None, reward_L: float | None = None) -> SmoothnessProfile:
        return SmoothnessProfile(m, self.alpha, self.L_E, self.alpha, self.L_T, reward_alpha, reward_L)


def smoothness_certificate(hc: HypothesisClass, mdp: LowRankMDP, G: int = 64, alpha: float = 1.0,
                           window: int | None = 4) -> SmoothnessCertificate:
    """Estimate L_phi, L_T and L_E on a node grid and test ``L_E <= 2 d L_phi``."""
    if G < 16:
        raise DomainError("need at least 16 grid points per action dimension")
    m, S = mdp.m, mdp.n_states
    pts = nodes(G, m)
    shape = (G,) * m

    L_phi = 0.0
    feats = []
    for phi in hc.Phi:
        per_state = [phi(s, pts) for s in range(S)]
        feats.append(per_state)
        for v in per_state:
            L_phi = max(L_phi, holder_seminorm(v.reshape(shape + (-1,)), alpha, m, window))

    L_T = L_E = L_H = 0.0
    for h in range(mdp.H):
        fs, ps = hc.true_phi_idx[h], hc.true_psi_idx[h]
        for s in range(S):
            T_true = clean_density(feats[fs][s] @ hc.Psi[ps].T)
            # TV-continuity: the Hölder quotient of a -> T(.|s,a) under TV is half the L1 one
            L_T = max(L_T, 0.5 * holder_seminorm(T_true.reshape(shape + (S,)), alpha, m, window, ord=1))
            for i in range(len(hc.Phi)):
                for j in range(len(hc.Psi)):
                    T = clean_density(feats[i][s] @ hc.Psi[j].T)
                    err = tv_distance(T, T_true).reshape(shape)
                    L_E = max(L_E, holder_seminorm(err, alpha, m, window))
                    L_H = max(L_H, holder_seminorm(hellinger_distance(T, T_true).reshape(shape), alpha, m, window))
    U = float(mdp.d)
    bound = 2.0 * U * L_phi
    return SmoothnessCertificate(alpha, G, L_phi, L_T, L_E, L_H, U, bound, bool(L_E <= bound * (1 + 1e-12) + 1e-15))

