import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from conftest import fd_hessian, random_problem
from slabcausal.posterior import (
    ConfounderPosterior,
    PriorConfig,
    b_coordinates,
    diagnostics,
    hessian,
    log_hessian_term,
    log_likelihood_per_datapoint,
    log_posterior_confounders,
    log_prior_confounders,
    log_prior_theta,
    spike_slab_log_density,
)
from slabcausal.recovery import RecoveredTheta, recover_theta
from slabcausal.scenarios import SCENARIOS
from slabcausal.sem_model import ScaledParameters, SemParameters, from_scaled, n_pairs



def _pair_c(c2, c3):
    C = np.zeros((3, 3))
    C[1, 2], C[2, 2] = c2, c3
    return C


# -- prior configuration -------------------------------------------------------

def test_prior_defaults():
    cfg = PriorConfig()
    assert (cfg.w_spike, cfg.w_slab, cfg.v_spike, cfg.v_slab) == (0.5, 0.5, 1e-4, 1.0)
    assert (cfg.v_min, cfg.v_max, cfg.confounder_sd) == (1e-6, 1e6, 1.0)
    assert cfg.replace(v_spike=1e-3).v_spike == 1e-3


@pytest.mark.parametrize("bad", [
    dict(w_spike=0.6), dict(v_spike=2.0), dict(v_spike=0.0), dict(v_min=1.0, v_max=1.0),
    dict(confounder_sd=0.0), dict(w_spike=-0.1, w_slab=1.1),
])
def test_prior_validation(bad):
    with pytest.raises(ValueError):
        PriorConfig(**bad)


# -- likelihood ---------------------------------------------------------------

def test_likelihood_identity():
    p = SemParameters(np.zeros((3, 3)), np.zeros((3, 3)), np.ones(3))
    assert log_likelihood_per_datapoint(p, np.eye(3)) == pytest.approx(-1.5, abs=1e-14)


def test_likelihood_at_exact_fit(rng):
    S, Ct = random_problem(rng, 4)
    p = recover_theta(S, Ct).with_confounders(Ct)
    expected = -0.5 * (4 + np.linalg.slogdet(S)[1])
    assert log_likelihood_per_datapoint(p, S) == pytest.approx(expected, abs=1e-10)


def test_likelihood_is_maximal_at_the_fit():
    S = SCENARIOS["a"].covariance
    top = -0.5 * (3 + np.linalg.slogdet(S)[1])
    p = SemParameters.from_entries(3, b={(1, 0): 1.0, (2, 1): 1.1})
    assert log_likelihood_per_datapoint(p, S) < top - 1e-4


# -- priors -------------------------------------------------------------------

def test_spike_slab_at_zero():
    expected = math.log(0.5 * (2 * math.pi * 1e-4) ** -0.5 + 0.5 * (2 * math.pi) ** -0.5)
    assert spike_slab_log_density(0.0, PriorConfig()) == pytest.approx(expected, abs=1e-13)
    assert spike_slab_log_density(0.0, PriorConfig()) == pytest.approx(3.0031, abs=1e-4)


def test_spike_slab_degenerates_to_normal():
    x = np.linspace(-10, 10, 2001)
    got = spike_slab_log_density(x, PriorConfig(v_spike=1.0))
    assert np.abs(got - norm.logpdf(x)).max() < 1e-12


def test_spike_slab_is_normalised():
    cfg = PriorConfig()
    f = lambda x: math.exp(spike_slab_log_density(x, cfg))
    total = sum(quad(f, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
                for a, b in [(-50, -0.1), (-0.1, 0.1), (0.1, 50)])
    assert total == pytest.approx(1.0, abs=1e-8)


def test_spike_slab_handles_far_tails():
    # the spike term alone underflows here; the mixture must not
    assert np.isfinite(spike_slab_log_density(30.0, PriorConfig(v_spike=1e-7)))


def test_log_prior_theta_closed_form():
    theta = RecoveredTheta(np.zeros((3, 3)), np.ones(3), np.zeros((3, 3)))
    expected = 3 * spike_slab_log_density(0.0, PriorConfig()) - 3 * math.log(math.log(1e6) - math.log(1e-6))
    assert log_prior_theta(theta, PriorConfig()) == pytest.approx(expected, abs=1e-12)
    assert log_prior_theta(theta, PriorConfig()) == pytest.approx(-0.94771, abs=1e-5)


def test_log_prior_theta_support():
    theta = RecoveredTheta(np.zeros((3, 3)), np.array([1.0, 1e-7, 1.0]), np.zeros((3, 3)))
    assert log_prior_theta(theta, PriorConfig()) == -math.inf
    theta = RecoveredTheta(np.zeros((3, 3)), np.array([1.0, 2e6, 1.0]), np.zeros((3, 3)))
    assert log_prior_theta(theta, PriorConfig()) == -math.inf


def test_log_prior_theta_with_single_gaussian(rng):
    Bt = np.tril(rng.normal(size=(4, 4)), -1)
    theta = RecoveredTheta(Bt, np.ones(4), Bt)
    p, q = b_coordinates(4)
    got = log_prior_theta(theta, PriorConfig(v_spike=1.0))
    expected = norm.logpdf(Bt[p, q]).sum() - 4 * math.log(math.log(1e12))
    assert got == pytest.approx(expected, abs=1e-12)


def test_log_prior_confounders():
    cfg = PriorConfig()
    assert log_prior_confounders(_pair_c(0, 0), cfg, [(1, 2)]) == pytest.approx(-math.log(2 * math.pi), abs=1e-14)
    assert log_prior_confounders(_pair_c(0, 0), cfg, [(1, 2)]) == pytest.approx(-1.8379, abs=5e-5)
    assert log_prior_confounders(_pair_c(1, 1), cfg, [(1, 2)]) == pytest.approx(-2.8379, abs=5e-5)
    assert log_prior_confounders(_pair_c(1, -1), cfg, [(1, 2)]) == log_prior_confounders(_pair_c(-1, 1), cfg, [(1, 2)])
    # with every pair free, all six structural entries count
    assert log_prior_confounders(np.zeros((3, 3)), cfg) == pytest.approx(-3 * math.log(2 * math.pi))


# -- Hessian ------------------------------------------------------------------

def test_hessian_at_identity():
    theta = recover_theta(np.eye(3), np.zeros((3, 3)))
    H = hessian(theta, np.zeros((3, 3)))
    np.testing.assert_allclose(H[:3, :3], np.eye(3), atol=1e-15)
    np.testing.assert_allclose(H[3:, 3:], 0.5 * np.eye(3), atol=1e-15)
    np.testing.assert_allclose(H[:3, 3:], 0.0, atol=1e-15)


def test_hessian_forms_agree(rng):
    for _ in range(100):
        n = int(rng.integers(2, 6))
        S, Ct = random_problem(rng, n)
        theta = recover_theta(S, Ct)
        raw = hessian(theta, Ct)
        chol = hessian(theta, Ct, S, form="cholesky")
        assert np.abs(raw - raw.T).max() < 1e-12
        np.testing.assert_allclose(chol, raw, rtol=1e-10, atol=1e-10 * np.abs(raw).max())


def test_hessian_matches_finite_differences(rng):
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 5))
        S, Ct = random_problem(rng, n, max_cond=1e3)
        theta = recover_theta(S, Ct)
        worst = max(worst, np.abs(hessian(theta, Ct) - fd_hessian(S, Ct, theta)).max())
    assert worst < 1e-5
    assert time.perf_counter() - t0 < 30


def test_hessian_is_positive_definite_at_the_fit(rng):
    for _ in range(200):
        n = int(rng.integers(2, 6))
        S, Ct = random_problem(rng, n)
        np.linalg.cholesky(hessian(recover_theta(S, Ct), Ct))


def test_hessian_form_errors(rng):
    S, Ct = random_problem(rng, 3)
    theta = recover_theta(S, Ct)
    with pytest.raises(ValueError):
        hessian(theta, Ct, form="cholesky")
    with pytest.raises(ValueError):
        hessian(theta, Ct, S, form="eigen")


# -- log posterior ------------------------------------------------------------

def test_log_posterior_decomposes(rng):
    S = SCENARIOS["d"].covariance
    C = _pair_c(0.4, -1.3)
    cfg = PriorConfig()
    theta = recover_theta(S, C)
    expected = log_hessian_term(theta, C) + log_prior_theta(theta, cfg) + log_prior_confounders(C, cfg, [(1, 2)])
    assert log_posterior_confounders(C, S, cfg, [(1, 2)]) == pytest.approx(expected, abs=1e-12)
    assert log_posterior_confounders(C, S, cfg, [(1, 2)], hessian_only=True) == log_hessian_term(theta, C)


def test_log_posterior_column_sign_flip_is_exact(scenario, rng):
    S = scenario.covariance
    cfg = PriorConfig()
    for _ in range(100):
        C = np.zeros((3, 3))
        C[[0, 0, 1], [0, 1, 2]] = rng.uniform(-3, 3, 3)
        C[[1, 2, 2], [0, 1, 2]] = rng.uniform(-3, 3, 3)
        k = int(rng.integers(3))
        F = C.copy()
        F[:, k] *= -1
        assert log_posterior_confounders(F, S, cfg) == log_posterior_confounders(C, S, cfg)


def test_spike_reward_at_the_origin():
    S = SCENARIOS["a"].covariance
    cfg = PriorConfig()
    at_zero = log_posterior_confounders(_pair_c(0, 0), S, cfg, [(1, 2)])
    assert recover_theta(S, _pair_c(0, 0)).B_tilde[2, 0] == pytest.approx(0.0, abs=1e-14)
    assert at_zero > log_posterior_confounders(_pair_c(2, -2), S, cfg, [(1, 2)])


def test_finite_on_the_prior_support(scenario):
    f = ConfounderPosterior(scenario.covariance, PriorConfig(), [(1, 2)])
    grid = np.linspace(-3, 3, 61)
    vals = np.array([[f(np.array([a, b])) for b in grid] for a in grid])
    assert np.all(np.isfinite(vals))


def test_out_of_support_variance_gives_minus_inf():
    S = np.diag([1.0, 1e-8, 1.0])
    assert log_posterior_confounders(np.zeros((3, 3)), S, PriorConfig()) == -math.inf
    assert ConfounderPosterior(S)(np.zeros(6)) == -math.inf


def test_single_gaussian_prior_has_no_spike_reward():
    S = SCENARIOS["a"].covariance
    wide = PriorConfig(v_spike=1.0)
    theta = recover_theta(S, np.zeros((3, 3)))
    p, q = b_coordinates(3)
    got = log_prior_theta(theta, wide)
    expected = norm.logpdf(theta.B_tilde[p, q]).sum() - 3 * math.log(math.log(1e12)) - np.log(theta.V).sum()
    assert got == pytest.approx(expected, abs=1e-12)


# -- compiled kernel ----------------------------------------------------------

@pytest.mark.parametrize("hessian_only", [False, True])
@pytest.mark.parametrize("confounder_prior", [False, True])
def test_kernel_matches_reference(rng, hessian_only, confounder_prior):
    for _ in range(60):
        n = int(rng.integers(2, 5))
        S, _ = random_problem(rng, n)
        f = ConfounderPosterior(S, PriorConfig(v_spike=10 ** rng.uniform(-7, 0)), None,
                                hessian_only, confounder_prior)
        x = rng.normal(scale=1.5, size=f.dim)
        a, b = f(x), f.reference(x)
        if b == -math.inf:
            assert a == -math.inf
        else:
            assert a == pytest.approx(b, abs=1e-9 * max(1.0, abs(b)))


def test_flat_coordinates_follow_column_order():
    f = ConfounderPosterior(np.eye(3))
    assert f.dim == 6
    C = f.embed(np.arange(1.0, 7.0))
    # pair (1,2): rows 0,1; pair (1,3): rows 0,2; pair (2,3): rows 1,2
    expected = np.array([[1, 3, 0], [2, 0, 5], [0, 4, 6]], dtype=float)
    np.testing.assert_array_equal(C, expected)
    g = ConfounderPosterior(np.eye(3), free_pairs=[(1, 2)])
    assert g.dim == 2 and g.free_pairs == [(1, 2)]


@settings(max_examples=40, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4), st.sampled_from(sorted(SCENARIOS)))
def test_kernel_sign_symmetry(c2, c3, name):
    f = ConfounderPosterior(SCENARIOS[name].covariance, PriorConfig(), [(1, 2)])
    assert f(np.array([c2, c3])) == f(np.array([-c2, -c3]))


def test_diagnostics_counter_is_resettable():
    before = diagnostics.snapshot()
    diagnostics.bump("non_pd_hessian")
    assert diagnostics.snapshot()["non_pd_hessian"] == before["non_pd_hessian"] + 1
