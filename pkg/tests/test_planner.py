import warnings

import numpy as np
import pytest

from bruteforce import enumerate_objective, enumerate_objective_one_step
from conftest import random_affine_mdp
from flambe_lab import planner as planner_mod
from flambe_lab.errors import DomainError, IterationBoundError
from flambe_lab.factory import EnvConfig, make_smooth_lowrank_mdp
from flambe_lab.features import CosineFeatures, TableFeatures
from flambe_lab.grid import midpoints
from flambe_lab.mdp import LowRankMDP, sample_rollouts
from flambe_lab.planner import (
    elliptical_objective, elliptical_plan, expected_feature_covariance, iteration_bound,
    optimize_elliptical_objective, random_grid_policies,
)
from flambe_lab.policies import Deterministic, UniformRandom


def rank_one_model(H=2, S=2):
    return LowRankMDP(TableFeatures.constant(np.ones((S, 1)), 1), np.full((S, 1), 1.0 / S), np.full(S, 1.0 / S), H)


def test_iteration_bound_example():
    assert iteration_bound(2, 0.5) == 91


def test_identity_objective_is_at_most_one(env7):
    res = optimize_elliptical_objective(env7, 1, np.eye(2), 32)
    assert 0 < res.objective <= 1


def test_rank_one_objective_is_one_for_every_policy():
    model = rank_one_model()
    for pi in random_grid_policies(2, 1, 2, 8, 6, np.random.default_rng(0)) + [UniformRandom(1)]:
        assert elliptical_objective(model, pi, 1, np.eye(1), 8) == pytest.approx(1.0)


def test_single_state_first_step_is_grid_scan():
    rng = np.random.default_rng(0)
    # one state, two features; both psi columns put all mass on that state
    phi = CosineFeatures(rng.normal(size=(1, 2)), rng.normal(size=(1, 2, 1, 2)))
    model = LowRankMDP(phi, np.ones((1, 2)), np.ones(1), 1)
    M = np.array([[2.0, 0.3], [0.3, 0.5]])
    res = optimize_elliptical_objective(model, 0, M, 64)
    pts = midpoints(64, 1)
    F = phi(np.zeros(64, int), pts)
    assert res.objective == pytest.approx(np.max(np.einsum("nd,de,ne->n", F, M, F)), abs=1e-12)


@pytest.mark.parametrize("Sigma_inv", [np.eye(2), np.array([[1.5, -0.4], [-0.4, 0.7]])])
def test_dp_matches_exhaustive_enumeration(env7, Sigma_inv):
    res = optimize_elliptical_objective(env7, 1, Sigma_inv, 64)
    assert res.objective == pytest.approx(enumerate_objective_one_step(env7, Sigma_inv, 64), abs=1e-9)
    # the returned policy attains the reported objective
    assert elliptical_objective(env7, res.policy, 1, Sigma_inv, 64) == pytest.approx(res.objective, abs=1e-12)


def test_dp_matches_loop_enumeration_two_steps():
    rng = np.random.default_rng(4)
    model = random_affine_mdp(rng, n_states=2, d=2, H=3)
    M = np.array([[1.0, 0.2], [0.2, 0.6]])
    res = optimize_elliptical_objective(model, 2, M, 6)
    assert res.objective == pytest.approx(enumerate_objective(model, 2, M, 6), abs=1e-9)


def test_objective_rejects_bad_inputs(env7):
    with pytest.raises(DomainError):
        optimize_elliptical_objective(env7, 1, np.array([[1.0, 2.0], [0.0, 1.0]]), 8)
    with pytest.raises(DomainError):
        optimize_elliptical_objective(env7, 5, np.eye(2), 8)


def test_covariance_examples():
    assert np.allclose(expected_feature_covariance(rank_one_model(), UniformRandom(1), 1, 8), [[1.0]])
    v = np.array([0.2, 0.5, 0.3])
    model = LowRankMDP(TableFeatures.constant(np.tile(v, (3, 1)), 1), np.eye(3), np.full(3, 1 / 3), 2)
    assert np.allclose(expected_feature_covariance(model, UniformRandom(1), 1, 8), np.outer(v, v))


def test_covariance_matches_monte_carlo(env7):
    n = 100_000
    states, actions = sample_rollouts(env7, UniformRandom(1), n, np.random.default_rng(9), steps=2)
    F = env7.phis[1](states[:, 1], actions[:, 1])
    outer = np.einsum("ni,nj->nij", F, F)
    mc, se = outer.mean(axis=0), outer.std(axis=0, ddof=1) / np.sqrt(n)
    exact = expected_feature_covariance(env7, UniformRandom(1), 1, 256)
    assert np.all(np.abs(mc - exact) <= 3 * se + 1e-12)


def test_plan_immediate_halt_is_degenerate():
    res = elliptical_plan(rank_one_model(), 1, 4.0, 8)
    assert res.iterations == 1 and res.degenerate_mixture
    assert res.rho.degenerate
    assert isinstance(res.rho.policies[0], UniformRandom)


def test_plan_rank_one_potential_recursion():
    res = elliptical_plan(rank_one_model(), 1, 0.5, 8)
    assert [round(o, 12) for _, o, _ in res.trace] == [1.0, 0.5, round(1 / 3, 12), 0.25]
    assert res.iterations == 4
    assert len(res.policies) == 3  # the fourth objective triggers the halt


def test_plan_factory_within_bound_and_spot_check(env7, cert7):
    res = elliptical_plan(env7, 1, 0.5, 32, smoothness=(cert7.L_phi, cert7.L_T, cert7.alpha))
    assert res.iterations <= 91
    assert res.spot_check_ok and res.certified
    assert np.all(np.linalg.eigvalsh(res.Sigma - np.eye(2)) >= -1e-12)
    logdets = [row[2] for row in res.trace]
    assert all(b >= a for a, b in zip(logdets, logdets[1:]))


def test_plan_uncertified_grid_warns(env7):
    with pytest.warns(RuntimeWarning):
        res = elliptical_plan(env7, 1, 0.5, 4, smoothness=(2.0, 1.0, 1.0), n_probes=0)
    assert not res.certified


def test_iteration_bound_error(monkeypatch, env7):
    monkeypatch.setattr(planner_mod, "iteration_bound", lambda d, beta: 1)
    with pytest.raises(IterationBoundError):
        elliptical_plan(env7, 1, 0.1, 16, n_probes=0)


def test_concave_optimizer_on_affine_model():
    env = make_smooth_lowrank_mdp(EnvConfig(family="affine", seed=3))
    M = np.array([[1.0, 0.1], [0.1, 2.0]])
    grid = optimize_elliptical_objective(env, 0, M, 32, "grid")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        conc = optimize_elliptical_objective(env, 0, M, 32, "concave")
    assert conc.objective >= grid.objective - 1e-9


def test_concave_optimizer_falls_back_on_cosine(env7):
    with pytest.warns(RuntimeWarning):
        res = optimize_elliptical_objective(env7, 1, np.eye(2), 16, "concave")
    assert res.objective == pytest.approx(optimize_elliptical_objective(env7, 1, np.eye(2), 16).objective)


def test_trace_file(tmp_path, env7):
    res = elliptical_plan(env7, 0, 0.5, 16, n_probes=0)
    path = tmp_path / "trace.csv"
    res.write_trace(path, ["provenance: x"])
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#") and lines[1] == "t,objective,logdet"
    assert len(lines) == 2 + res.iterations


def test_deterministic_policy_objective_bounded(env7):
    pi = Deterministic(np.full((2, 3, 1), 0.3))
    assert 0 <= elliptical_objective(env7, pi, 1, np.eye(2), 16) <= 1
