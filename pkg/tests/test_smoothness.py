from fractions import Fraction

import numpy as np
import pytest

from conftest import single_state_mdp
from flambe_lab.errors import DomainError
from flambe_lab.experiments import policy_gap_suite
from flambe_lab.features import TableFeatures
from flambe_lab.grid import nodes
from flambe_lab.mdp import LowRankMDP
from flambe_lab.policies import Deterministic, GridMixture, UniformRandom
from flambe_lab.rewards import AffineReward, ConstantReward, RewardFunction
from flambe_lab.smoothness import (
    SmoothnessProfile, action_grid_values, bracketing_check, bump, bump_slope, calibrate_constant,
    default_battery, discrete_is_check, expectation_gap_check, holder_norm_estimate, holder_seminorm,
    holder_test_functions, policy_gap_check, uniform_bound_check,
)


# --- profile -----------------------------------------------------------------------


def test_profile_derived_exponents():
    p = SmoothnessProfile(2, alpha_E=0.5, L_E=1, alpha_T=1, L_T=3, alpha_R=0.5, L_R=2)
    assert p.tau == 4 and p.kappa == pytest.approx(0.8)
    assert p.sigma == 4 and p.L == 3 and p.alpha == 0.5


def test_profile_validation():
    with pytest.raises(DomainError):
        SmoothnessProfile(1, alpha_T=1.5)
    with pytest.raises(DomainError):
        SmoothnessProfile(1, L_E=-1)
    with pytest.raises(DomainError):
        SmoothnessProfile(1).tau


# --- Hölder estimates --------------------------------------------------------------


def test_holder_constant_function():
    est = holder_norm_estimate(np.full(64, -0.7), 1.0)
    assert est.value == pytest.approx(0.7) and est.seminorm == 0


def test_holder_identity_is_one():
    assert holder_norm_estimate(np.linspace(0, 1, 64), 1.0).value == pytest.approx(1.0)


@pytest.mark.parametrize("G", [64, 256, 1024])
def test_holder_sine_estimate(G):
    x = np.linspace(0, 1, G)
    est = holder_norm_estimate(np.sin(2 * np.pi * x), 1.0)
    assert 2 * np.pi * (1 - 10 / G) <= est.value <= 2 * np.pi


def test_window_estimate_never_exceeds_all_pairs():
    rng = np.random.default_rng(0)
    v = rng.random((20, 20))
    for alpha in (0.5, 1.0):
        assert holder_seminorm(v, alpha, 2, window=3) <= holder_seminorm(v, alpha, 2, window=None) + 1e-15


def test_adjacent_pairs_exact_for_lipschitz_on_a_line():
    rng = np.random.default_rng(1)
    v = np.cumsum(rng.normal(size=200))
    full = max(abs(v[i] - v[j]) / (abs(i - j) / 199) for i in range(200) for j in range(i))
    assert holder_seminorm(v, 1.0, 1, window=None) == pytest.approx(full)


def test_holder_half_exponent_of_sqrt():
    x = np.linspace(0, 1, 257)
    assert holder_seminorm(np.sqrt(x), 0.5, 1, window=None) == pytest.approx(1.0)


def test_holder_estimate_requires_resolution():
    with pytest.raises(DomainError):
        holder_norm_estimate(np.zeros(8), 1.0)


def test_vector_valued_seminorm_uses_euclidean_norm():
    x = nodes(65, 1)
    v = np.hstack([x, x])
    assert holder_seminorm(v.reshape(65, 2), 1.0, 1) == pytest.approx(np.sqrt(2))
    assert holder_seminorm(v.reshape(65, 2), 1.0, 1, ord=1) == pytest.approx(2.0)


# --- sup versus mean ---------------------------------------------------------------


@pytest.mark.parametrize("m,alpha", [(1, 1.0), (1, 0.5), (2, 1.0)])
def test_uniform_bound_constant(m, alpha):
    c, L = 0.3, 1.0
    res = uniform_bound_check(np.full((17,) * m, c), alpha, L, m, 1.0)
    assert res.sup == pytest.approx(c) and res.mean == pytest.approx(c)
    assert res.bound == pytest.approx(L ** (m / (m + alpha)) * c ** (alpha / (m + alpha)))
    assert res.bound >= c and res.holds


def test_uniform_bound_zero():
    res = uniform_bound_check(np.zeros(33), 1.0, 1.0, 1)
    assert res.sup == 0 and res.bound == 0 and res.holds


def test_uniform_bound_rejects_negative():
    with pytest.raises(DomainError):
        uniform_bound_check(np.array([-0.1, 0.2]), 1.0, 1.0, 1)


def test_bump_closed_form_integrals():
    for r in (0.25, 0.0625):
        res = uniform_bound_check(bump(1, 1.0, r).values, 1.0, 1.0, 1)
        assert res.sup == pytest.approx(r, rel=1e-3) and res.mean == pytest.approx(r * r, rel=1e-3)


@pytest.mark.parametrize("m,alpha", [(1, 1.0), (1, 0.5), (2, 1.0), (2, 0.5)])
def test_bump_slope(m, alpha):
    assert bump_slope(m, alpha) == pytest.approx(alpha / (m + alpha), abs=0.02)


def test_battery_calibration():
    battery = default_battery()
    assert {(f.m, f.alpha) for f in battery} == {(1, 0.5), (1, 1.0), (2, 0.5), (2, 1.0)}
    c = calibrate_constant(battery)
    assert 0 < c <= 3
    assert all(uniform_bound_check(f.values, f.alpha, f.L, f.m, c).holds for f in battery)


# --- smoothing gaps ----------------------------------------------------------------


def test_gap_zero_when_nothing_depends_on_action():
    env = LowRankMDP(TableFeatures.constant([[1.0, 0.0], [0.0, 1.0]], 1), np.array([[0.6, 0.2], [0.4, 0.8]]),
                     np.array([0.5, 0.5]), 2)
    reward = RewardFunction.single_step(1, ConstantReward([0.3, 0.9]), 2)
    prof = SmoothnessProfile(1, alpha_T=1, L_T=0, alpha_R=reward.alpha, L_R=reward.L)
    res = policy_gap_check(env, Deterministic(np.full((2, 2, 1), 0.2)), 4, reward, prof, 32)
    assert res.gap == pytest.approx(0, abs=1e-15) and res.holds


def test_gap_zero_for_centred_point_mass_and_linear_reward():
    env = single_state_mdp()
    reward = RewardFunction.single_step(0, AffineReward([0.0], [[1.0]]), 1)
    prof = SmoothnessProfile(1, alpha_T=1, L_T=0, alpha_R=1, L_R=1)
    res = policy_gap_check(env, Deterministic(np.full((1, 1, 1), 0.5)), 16, reward, prof, 64)
    assert res.gap == pytest.approx(0, abs=1e-12)
    assert res.bound == pytest.approx(0.125)


def test_gap_nonincreasing_in_K_on_factory_envs():
    rows = policy_gap_suite(range(20), (4, 16, 64), 64)
    assert all(r["holds"] for r in rows)
    by_env = {}
    for r in rows:
        by_env.setdefault(r["env_seed"], []).append(r["gap"])
    monotone = sum(all(b <= a + 1e-12 for a, b in zip(g, g[1:])) for g in by_env.values())
    assert monotone >= 18


def test_expectation_gap_on_test_battery():
    rng = np.random.default_rng(3)
    bases = [Deterministic(np.full((1, 1, 1), 0.1)), GridMixture(rng.dirichlet(np.ones(4), (1, 1)), 4, 1),
             UniformRandom(1, 1)]
    for f, alpha, L in holder_test_functions(1, rng, 6):
        for base in bases:
            for K in (4, 16, 64):
                assert expectation_gap_check(base, f, alpha, L, K, 256).holds


def test_test_functions_in_unit_interval_and_within_constants():
    rng = np.random.default_rng(0)
    x = nodes(513, 1)
    for f, alpha, L in holder_test_functions(1, rng, 4):
        v = f(x)
        assert v.min() >= 0 and v.max() <= 1
        assert holder_seminorm(v, alpha, 1, window=None) <= L * (1 + 1e-9)


# --- discrete importance sampling --------------------------------------------------


def test_is_inequality_tight_for_single_action():
    f = [[Fraction(0), Fraction(3), Fraction(0), Fraction(0)]]
    pi = [[Fraction(0), Fraction(1), Fraction(0), Fraction(0)]]
    res = discrete_is_check(pi, f, [Fraction(1)])
    assert res.lhs == res.rhs == 3 and res.holds


def test_is_inequality_exact_rationals():
    res = discrete_is_check([[Fraction(1, 3), Fraction(2, 3)]], [[Fraction(1, 7), Fraction(2, 7)]], [Fraction(1)])
    assert res.lhs == Fraction(5, 21) and res.rhs == Fraction(3, 7)


def test_is_rejects_negative_f():
    with pytest.raises(DomainError):
        discrete_is_check([[0.5, 0.5]], [[-1, 1]], [1.0])


# --- error functionals -------------------------------------------------------------


def test_bracketing_for_tv_and_hellinger():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p, q = rng.dirichlet(np.ones(5), 2)
        assert all(bracketing_check(p, q, "tv"))
        assert bracketing_check(p, q, "hellinger")[1]


def test_action_grid_values_shape():
    v = action_grid_values(lambda a: np.stack([a[:, 0], a[:, 1]], axis=1), 5, 2)
    assert v.shape == (5, 5, 2)
