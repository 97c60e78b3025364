import numpy as np
import pytest

from flambe_lab.errors import ConstructionError, DomainError
from flambe_lab.factory import (
    EnvConfig, feature_holder_constant, make_hypothesis_class, make_smooth_lowrank_mdp, smoothness_certificate,
)
from flambe_lab.grid import nodes
from flambe_lab.mdp import transition_density
from flambe_lab.smoothness import holder_seminorm


def test_same_seed_same_environment():
    a = make_smooth_lowrank_mdp(EnvConfig(seed=3))
    b = make_smooth_lowrank_mdp(EnvConfig(seed=3))
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != make_smooth_lowrank_mdp(EnvConfig(seed=4)).to_dict()


def test_zero_feature_scale_gives_action_independent_features():
    cfg = EnvConfig(feature_scale=0.0, L_target=0.0, d=1)
    env = make_smooth_lowrank_mdp(cfg)
    assert feature_holder_constant(env.phis[0], 1.0) == 0.0
    cfg = EnvConfig(feature_scale=0.0, seed=2)
    assert feature_holder_constant(make_smooth_lowrank_mdp(cfg).phis[0], 1.0) == 0.0


def test_rank_one_transitions_do_not_depend_on_state_or_action():
    env = make_smooth_lowrank_mdp(EnvConfig(d=1, n_states=4, seed=1))
    ref = transition_density(env, 0, 0, np.array([0.0]))
    for s in range(4):
        for a in (0.1, 0.5, 0.9):
            assert np.allclose(transition_density(env, 0, s, np.array([a])), ref)


def test_seed7_holder_constant_meets_target(env7):
    G = 256
    pts = nodes(G, 1)
    est = max(holder_seminorm(env7.phis[0](s, pts), 1.0, 1, window=None) for s in range(3))
    assert est <= 2 * (1 + 1e-3)


@pytest.mark.parametrize("family", ["cosine", "affine"])
@pytest.mark.parametrize("m", [1, 2])
def test_families_validate_and_respect_target(family, m):
    cfg = EnvConfig(family=family, m=m, n_states=4, d=3, L_target=1.5, seed=5, H=2)
    env = make_smooth_lowrank_mdp(cfg)
    env.validate(8)
    assert feature_holder_constant(env.phis[0], 1.0) <= 1.5 * (1 + 1e-9)


def test_per_step_embeddings_differ():
    env = make_smooth_lowrank_mdp(EnvConfig(per_step=True, seed=2))
    assert not env.time_homogeneous
    assert env.phis[0] is not env.phis[1]


def test_invalid_configs():
    with pytest.raises(DomainError):
        EnvConfig(d=5, n_states=3)
    with pytest.raises(DomainError):
        EnvConfig(alpha=1.5)
    with pytest.raises(ConstructionError):
        make_smooth_lowrank_mdp(EnvConfig(L_target=-1.0))
    with pytest.raises(ConstructionError):
        make_smooth_lowrank_mdp(EnvConfig(L_target=0.0))


def test_class_contains_truth_and_is_valid(env7, hc7):
    assert hc7.sizes == (5, 5)
    for h in range(env7.H):
        assert hc7.Phi[hc7.true_phi_idx[h]] is env7.phis[h]
        assert hc7.Psi[hc7.true_psi_idx[h]] is env7.psis[h]


def test_seed7_separation_example(hc7):
    assert hc7.min_separation > 0.01


def test_zero_decoys_gives_singleton_class(env7):
    hc = make_hypothesis_class(env7, EnvConfig(n_phi_decoys=0, n_psi_decoys=0))
    assert hc.sizes == (1, 1)
    assert hc.min_separation == np.inf


def test_zero_perturbation_is_rejected(env7):
    with pytest.raises(ConstructionError):
        make_hypothesis_class(env7, EnvConfig(decoy_scale=0.0))


def test_per_step_class_realizable():
    cfg = EnvConfig(per_step=True, seed=4)
    env = make_smooth_lowrank_mdp(cfg)
    hc = make_hypothesis_class(env, cfg)
    assert len(hc.Phi) == env.H + cfg.n_phi_decoys
    assert len(set(hc.true_phi_idx)) == env.H


def test_certificate_for_truth_only_class(env7):
    hc = make_hypothesis_class(env7, EnvConfig(n_phi_decoys=0, n_psi_decoys=0))
    cert = smoothness_certificate(hc, env7)
    assert cert.L_E == 0.0 and cert.L_hellinger == 0.0
    assert cert.feature_error_holds


def test_certificate_for_constant_features():
    cfg = EnvConfig(feature_scale=0.0, seed=3)
    env = make_smooth_lowrank_mdp(cfg)
    cert = smoothness_certificate(make_hypothesis_class(env, cfg), env)
    assert cert.L_phi == 0 and cert.L_T == 0 and cert.L_E == 0


def test_seed7_certificate(cert7):
    assert cert7.L_E <= 2 * 2 * cert7.L_phi
    assert cert7.feature_error_holds
    assert cert7.L_phi <= 2 * (1 + 1e-9)
