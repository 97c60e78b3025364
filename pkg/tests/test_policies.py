import numpy as np
import pytest

from flambe_lab.errors import ConfigurationError, DomainError
from flambe_lab.grid import midpoints
from flambe_lab.policies import (
    Deterministic, FiniteMixture, GridMixture, Smoothed, SplicedUniform, UniformRandom, policy_from_dict,
    splice_uniform,
)
from flambe_lab.smoothness import smooth_policy


def test_grid_mixture_rejects_unnormalised_cells():
    with pytest.raises(DomainError):
        GridMixture(np.full((1, 1, 4), 0.3), 4, 1)


def test_grid_mixture_density_is_prob_times_cell_count():
    probs = np.array([[[0.1, 0.2, 0.3, 0.4]]])
    pi = GridMixture(probs, 2, 2)
    assert np.allclose(pi.density(0, 0, midpoints(2, 2)), probs[0, 0] * 4)
    assert np.isclose(pi.max_density(), 1.6)


def test_grid_mixture_sampling_matches_cell_probabilities():
    rng = np.random.default_rng(3)
    p = rng.dirichlet(np.ones(8))
    pi = GridMixture(p[None, None], 8, 1)
    n = 100_000
    cells = np.minimum((pi.sample(0, np.zeros(n, int), np.random.default_rng(0))[:, 0] * 8).astype(int), 7)
    freq = np.bincount(cells, minlength=8) / n
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(freq - p) <= 3 * se)


def test_deterministic_has_unbounded_density():
    assert Deterministic(np.full((1, 1, 1), 0.5)).max_density() == np.inf


def test_smoothed_point_mass_interior():
    pi = Smoothed(Deterministic(np.full((1, 1, 1), 0.5)), 4)
    a = np.array([0.374, 0.376, 0.5, 0.624, 0.626])
    assert np.allclose(pi.density(0, 0, a), [0, 4, 4, 4, 0])
    assert np.isclose(pi.max_density(), 4.0)


def test_smoothed_point_mass_at_boundary_renormalises():
    pi = Smoothed(Deterministic(np.zeros((1, 1, 1))), 4)
    assert np.allclose(pi.density(0, 0, np.array([0.0, 0.1, 0.124, 0.126])), [8, 8, 8, 0])
    assert np.isclose(pi.max_density(), 8.0)


def test_smoothed_density_integrates_to_one():
    rng = np.random.default_rng(0)
    base = GridMixture(rng.dirichlet(np.ones(4), (1, 1)), 4, 1)
    pi = Smoothed(base, 3.0)
    x = (np.arange(20000) + 0.5) / 20000
    assert np.isclose(pi.density(0, 0, x).mean(), 1.0, atol=1e-3)


def test_smoothed_converges_to_base_for_large_K():
    rng = np.random.default_rng(1)
    base = GridMixture(rng.dirichlet(np.ones(8), (1, 1)), 8, 1)
    x = midpoints(64, 1)
    assert np.allclose(Smoothed(base, 1e6).density(0, 0, x), base.density(0, 0, x))


def test_smoothed_atoms_match_density_quadrature():
    rng = np.random.default_rng(2)
    base = GridMixture(rng.dirichlet(np.ones(4), (1, 1)), 4, 1)
    pi = Smoothed(base, 5.0)
    pts, w = pi.atoms(0, 0, 64)
    f = lambda a: np.cos(3 * a[:, 0])  # noqa: E731
    x = (np.arange(200_000) + 0.5) / 200_000
    exact = np.mean(pi.density(0, 0, x) * f(x[:, None]))
    assert abs(w @ f(pts) - exact) < 3 * 2 / 64


def test_smoothed_sampling_stays_in_box():
    pi = Smoothed(Deterministic(np.full((1, 1, 2), 0.9)), 16)
    a = pi.sample(0, np.zeros(1000, int), np.random.default_rng(0))
    assert np.all(a <= 1.0) and np.all(a >= 0.9 - 0.125)


def test_smoothed_rejects_small_K():
    with pytest.raises(DomainError):
        Smoothed(UniformRandom(1), 0.5)


def test_quadrature_grid_must_refine_policy_grid():
    pi = GridMixture(np.full((1, 1, 4), 0.25), 4, 1)
    with pytest.raises(ConfigurationError):
        pi.atoms(0, 0, 6)


def test_splice_uniform_switches():
    base = Deterministic(np.full((3, 1, 1), 0.2))
    sp = splice_uniform(base, 1)
    assert isinstance(sp, SplicedUniform)
    assert np.allclose(sp.sample(0, np.zeros(5, int), np.random.default_rng(0)), 0.2)
    pts, w = sp.atoms(1, 0, 4)
    assert np.allclose(w, 0.25)


def test_finite_mixture_flattens_and_splices_components():
    a, b = Deterministic(np.zeros((2, 1, 1))), UniformRandom(1)
    mix = FiniteMixture([FiniteMixture([a, b]), b], [0.5, 0.5])
    ws = [w for w, _ in mix.components()]
    assert np.allclose(ws, [0.25, 0.25, 0.5])
    spliced = splice_uniform(mix, 1)
    assert isinstance(spliced, FiniteMixture)
    assert len(spliced.components()) == 3


def test_smooth_policy_distributes_over_mixtures():
    mix = FiniteMixture([Deterministic(np.zeros((1, 1, 1))), Deterministic(np.ones((1, 1, 1)))])
    sm = smooth_policy(mix, 4, 1)
    assert all(isinstance(c, Smoothed) for _, c in sm.components())


def test_policy_dict_roundtrip():
    rng = np.random.default_rng(0)
    pol = FiniteMixture([
        Smoothed(GridMixture(rng.dirichlet(np.ones(4), (2, 3)), 4, 1), 8.0),
        SplicedUniform(Deterministic(rng.random((2, 3, 1))), 1),
        UniformRandom(1),
    ], [0.2, 0.3, 0.5])
    back = policy_from_dict(pol.to_dict())
    assert back.to_dict() == pol.to_dict()
