"""Verifier suites and the smoke pipeline, shared by the command line and the test-suite."""

from __future__ import annotations

import numpy as np

from .errors import InvariantViolation
from .factory import EnvConfig, make_hypothesis_class, make_smooth_lowrank_mdp, smoothness_certificate
from .flambe import HyperParams, PlannerConfig, evaluation_policies, evaluation_rewards, model_eval_gap, run_flambe
from .mdp import greedy_grid_policy, value_exact, value_mc
from .planner import elliptical_plan
from .policies import Deterministic, GridMixture, UniformRandom
from .rewards import CosineReward, RewardFunction
from .smoothness import (
    SmoothnessProfile, bump_slope, calibrate_constant, default_battery, discrete_is_check,
    expectation_gap_check, holder_test_functions, policy_gap_check, smooth_policy, uniform_bound_check,
)

SCALES = (1e-3, 1.0, 1e3)


def uniform_bound_suite(battery=None):
    """Rows for every battery member, with the calibrated constant and with c = 1."""
    battery = battery if battery is not None else default_battery()
    c_cal = calibrate_constant(battery)
    rows = []
    for f in battery:
        res = uniform_bound_check(f.values, f.alpha, f.L, f.m, c_cal)
        res1 = uniform_bound_check(f.values, f.alpha, f.L, f.m, 1.0)
        rows.append({
            "name": f.name, "m": f.m, "alpha": f.alpha, "L": f.L, "sup": res.sup, "mean": res.mean,
            "bound": res.bound, "ratio": res.ratio, "c_cal": c_cal, "holds": res.holds, "holds_c1": res1.holds,
        })
    return c_cal, rows


def scale_invariance_suite(battery=None, c_cal=None):
    battery = battery if battery is not None else default_battery()
    c_cal = calibrate_constant(battery) if c_cal is None else c_cal
    rows = []
    for f in battery:
        decisions = [uniform_bound_check(s * f.values, f.alpha, s * f.L, f.m, c_cal).holds for s in SCALES]
        rows.append({"name": f.name, **{f"holds_s{s:g}": h for s, h in zip(SCALES, decisions)},
                     "invariant": len(set(decisions)) == 1})
    return rows


def bump_slope_suite():
    return [{"m": m, "alpha": a, "slope": bump_slope(m, a), "expected": a / (m + a)}
            for m in (1, 2) for a in (0.5, 1.0)]


def certified_env(seed: int, G: int = 64, **overrides):
    """Factory environment plus class and certificate for one seed."""
    cfg = EnvConfig(seed=seed, **overrides)
    env = make_smooth_lowrank_mdp(cfg)
    hc = make_hypothesis_class(env, cfg)
    cert = smoothness_certificate(hc, env, G=G, alpha=cfg.alpha)
    return env, hc, cert


def policy_gap_suite(env_seeds, K_values=(4, 16, 64), G: int = 64):
    """Value gap of greedy deterministic policies against their smoothed versions."""
    rows = []
    for seed in env_seeds:
        env, hc, cert = certified_env(seed, G=G, n_phi_decoys=0, n_psi_decoys=0)
        rng = np.random.default_rng([seed, 17])
        h = int(rng.integers(env.H))
        shape = CosineReward(rng.uniform(0.3, 1.0, env.n_states), rng.integers(1, 3, env.m).astype(float),
                             rng.uniform(0, 2 * np.pi, env.n_states))
        reward = RewardFunction.single_step(h, shape, env.H)
        profile = SmoothnessProfile(env.m, alpha_T=cert.alpha, L_T=cert.L_T, alpha_R=reward.alpha, L_R=reward.L)
        base = greedy_grid_policy(env, reward, G)
        for K in K_values:
            res = policy_gap_check(env, base, K, reward, profile, G)
            rows.append({"env_seed": seed, "K": K, "gap": res.gap, "bound": res.bound, "tolerance": res.tolerance,
                         "K_eff": res.K_eff, "holds": res.holds})
    return rows


def expectation_gap_suite(seed: int = 0, K_values=(4, 16, 64), G: int = 256, n_functions: int = 6):
    """Smoothing-gap check over Hölder test functions and several base policies (m = 1)."""
    rng = np.random.default_rng(seed)
    bases = [
        Deterministic(np.full((1, 1, 1), 0.5)), Deterministic(np.zeros((1, 1, 1))),
        Deterministic(np.ones((1, 1, 1))), Deterministic(rng.random((1, 1, 1))),
        GridMixture(rng.dirichlet(np.ones(8), (1, 1)), 8, 1), UniformRandom(1, 1),
    ]
    rows = []
    for fi, (f, alpha, L) in enumerate(holder_test_functions(1, rng, n_functions)):
        for bi, base in enumerate(bases):
            for K in K_values:
                res = expectation_gap_check(base, f, alpha, L, K, G)
                rows.append({"function": fi, "alpha": alpha, "L": L, "policy": bi, "K": K, "gap": res.gap,
                             "bound": res.bound, "tolerance": res.tolerance, "holds": res.holds})
    return rows


def is_suite(n_pairs: int = 50, grids=(4, 8), seed: int = 0, n_states: int = 3):
    """Exact discrete importance-sampling inequality on random rational instances."""
    from fractions import Fraction

    rng = np.random.default_rng(seed)
    rows = []
    for G in grids:
        for k in range(n_pairs):
            weights = rng.integers(0, 20, (n_states, G))
            weights[:, 0] += 1
            probs = [[Fraction(int(w), int(row.sum())) for w in row] for row in weights]
            f = [[Fraction(int(x), int(rng.integers(1, 10))) for x in rng.integers(0, 50, G)] for _ in range(n_states)]
            rw = rng.integers(1, 10, n_states)
            rho = [Fraction(int(x), int(rw.sum())) for x in rw]
            res = discrete_is_check(probs, f, rho)
            rows.append({"G": G, "pair": k, "lhs": float(res.lhs), "rhs": float(res.rhs), "holds": res.holds})
    return rows


def feature_error_suite(seeds, G: int = 64):
    rows = []
    for seed in seeds:
        _, _, cert = certified_env(seed, G=G)
        rows.append({"seed": seed, "L_phi": cert.L_phi, "L_T": cert.L_T, "L_E": cert.L_E,
                     "L_hellinger": cert.L_hellinger, "bound": cert.feature_error_bound, "holds": cert.feature_error_holds})
    return rows


def value_check_configs(env, G: int, seed: int = 0):
    """Policy/reward pairs on which Monte Carlo and exact evaluation are compared."""
    rng = np.random.default_rng(seed)
    H, S, m = env.H, env.n_states, env.m
    reward = evaluation_rewards(S, m, H, rng, 3)
    probs = rng.dirichlet(np.ones(8), (H, S))
    return [
        ("uniform", UniformRandom(m), reward[0]),
        ("grid_mixture", GridMixture(probs, 8, m), reward[1]),
        ("smoothed_deterministic", smooth_policy(Deterministic(rng.random((H, S, m))), 16, m), reward[2]),
    ]


def smoke(n_mc: int = 20000, log=print) -> dict:
    """Full pipeline on the 3-state seed-7 environment; raises on any invariant violation."""
    summary = {}
    env, hc, cert = certified_env(7)
    if not cert.feature_error_holds:
        raise InvariantViolation("L_E exceeds 2 d L_phi")
    summary["certificate"] = cert
    log(f"env: |S|={env.n_states} d={env.d} m={env.m} H={env.H}; L_phi={cert.L_phi:.4f} L_E={cert.L_E:.4f}")

    G = 32
    for name, pi, R in value_check_configs(env, G):
        exact = value_exact(env, pi, R, G)
        est, se = value_mc(env, pi, R, n_mc, seed=1)
        if not 0 <= exact <= 1 or abs(est - exact) > 4 * se:
            raise InvariantViolation(f"value check failed for {name}: exact={exact} mc={est}+-{se}")
        log(f"value[{name}]: exact={exact:.5f} mc={est:.5f} (se {se:.5f})")

    smooth = (cert.L_phi, cert.L_T, cert.alpha)
    for h in range(env.H):
        plan = elliptical_plan(env, h, 0.5, G, smoothness=smooth)
        if plan.iterations > plan.bound or not plan.spot_check_ok:
            raise InvariantViolation(f"planner invariant failed at step {h}")
    log("planner: termination bound and post-halt spot check hold at every step")

    model, diag = run_flambe(env, hc, HyperParams.practical(200, 2, 0.5), PlannerConfig(0.5, G, smoothness=smooth),
                             seed=0)
    for h in range(env.H):
        if diag.dataset.size(h) != 2 * 200:
            raise InvariantViolation("dataset sizes do not grow by n per iteration")
    rng = np.random.default_rng(0)
    gap = model_eval_gap(env, model, evaluation_rewards(env.n_states, env.m, env.H, rng, 4),
                         evaluation_policies(env.n_states, env.m, env.H, rng, 2, 2), G)
    log(f"flambe: tv by iteration {diag.tv_by_iteration()}, max eval gap {gap.max_gap:.4f}")

    c_cal, rows = uniform_bound_suite([f for f in default_battery() if f.m == 1])
    if not all(r["holds"] for r in rows):
        raise InvariantViolation("uniform bound failed on the battery")
    log(f"uniform bound: c_cal={c_cal:.4f} on {len(rows)} functions")
    summary.update(model=model, diagnostics=diag, max_gap=gap.max_gap, c_cal=c_cal)
    return summary
