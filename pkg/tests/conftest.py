import numpy as np
import pytest

from flambe_lab.factory import EnvConfig, make_hypothesis_class, make_smooth_lowrank_mdp, smoothness_certificate
from flambe_lab.features import AffineFeatures, TableFeatures
from flambe_lab.mdp import LowRankMDP


@pytest.fixture(scope="session")
def cfg7():
    return EnvConfig(seed=7)


@pytest.fixture(scope="session")
def env7(cfg7):
    return make_smooth_lowrank_mdp(cfg7)


@pytest.fixture(scope="session")
def hc7(env7, cfg7):
    return make_hypothesis_class(env7, cfg7)


@pytest.fixture(scope="session")
def cert7(env7, hc7):
    return smoothness_certificate(hc7, env7)


def single_state_mdp(H=1, m=1):
    """One state, d = 1: every transition returns to the same state."""
    return LowRankMDP(TableFeatures.constant([[1.0]], m), np.array([[1.0]]), np.array([1.0]), H)


def random_affine_mdp(rng, n_states=2, d=2, H=2):
    """Affine embedding in a scalar action with Dirichlet psi columns; validity holds at a = 0 and a = 1."""
    lo = rng.dirichlet(np.ones(d), n_states)
    hi = rng.dirichlet(np.ones(d), n_states)
    phi = AffineFeatures(lo, (hi - lo)[:, :, None])
    psi = rng.dirichlet(np.ones(n_states), d).T
    rho = rng.dirichlet(np.ones(n_states))
    return LowRankMDP(phi, psi, rho, H)
