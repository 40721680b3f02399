import time

import numpy as np
import pytest

from conftest import random_problem
from slabcausal.recovery import RecoveredTheta, cholesky_factors, recover_theta
from slabcausal.scenarios import SCENARIOS
from slabcausal.sem_model import (
    DegenerateDataError,
    ScaledParameters,
    SemParameters,
    from_scaled,
    implied_covariance,
    n_pairs,
    to_scaled,
)


def test_round_trip_on_random_instances(rng):
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 6))
        S, Ct = random_problem(rng, n)
        theta = recover_theta(S, Ct)
        S2 = implied_covariance(theta.with_confounders(Ct))
        worst = max(worst, np.abs(S2 - S).max() / np.abs(S).max())
    assert worst < 1e-10
    assert time.perf_counter() - t0 < 5.0


def test_recovers_generating_parameters(rng):
    # the generating (B, V) is the unique fit when the true C_tilde is supplied
    for _ in range(100):
        n = int(rng.integers(2, 6))
        S, Ct = random_problem(rng, n)
        theta = recover_theta(S, Ct)
        p = theta.with_confounders(Ct)
        again = recover_theta(implied_covariance(p), to_scaled(p).C_tilde)
        np.testing.assert_allclose(again.B, theta.B, atol=1e-8)
        np.testing.assert_allclose(again.V, theta.V, rtol=1e-8)


def test_scaled_coefficients_are_consistent(rng):
    S, Ct = random_problem(rng, 4)
    theta = recover_theta(S, Ct)
    sd = np.sqrt(theta.V)
    np.testing.assert_allclose(theta.B_tilde, theta.B * np.outer(1 / sd, sd), atol=1e-12)
    s = to_scaled(theta.with_confounders(Ct))
    np.testing.assert_allclose(s.B_tilde, theta.B_tilde, atol=1e-12)
    np.testing.assert_allclose(s.C_tilde, Ct, atol=1e-12)


def test_identity_without_confounding():
    theta = recover_theta(np.eye(3), np.zeros((3, 3)))
    np.testing.assert_array_equal(theta.B, np.zeros((3, 3)))
    np.testing.assert_array_equal(theta.V, np.ones(3))


def test_structure_of_recovered_theta(rng):
    S, Ct = random_problem(rng, 5)
    theta = recover_theta(S, Ct)
    assert isinstance(theta, RecoveredTheta)
    assert np.all(np.triu(theta.B) == 0)
    assert np.all(theta.V > 0)
    assert theta.n == 5


def test_adversarial_equivalence():
    """A faithfulness-violating confounded model and an unconfounded one share a covariance."""
    left = SCENARIOS["f"].params
    right = SemParameters.from_entries(3, b={(1, 0): 1.0, (2, 1): 2.0}, v=np.array([1.0, 2.0, 3.0]))
    expected = np.array([[1, 1, 2], [1, 3, 6], [2, 6, 15]], dtype=float)
    np.testing.assert_allclose(implied_covariance(left), expected, atol=1e-12)
    np.testing.assert_allclose(implied_covariance(right), expected, atol=1e-12)
    # and without confounders the recovery lands on the right-hand model
    theta = recover_theta(expected, np.zeros((3, 3)))
    np.testing.assert_allclose(theta.B, right.B, atol=1e-12)
    np.testing.assert_allclose(theta.V, [1.0, 2.0, 3.0], atol=1e-12)
    # while the true confounders give back the left-hand model
    theta = recover_theta(expected, to_scaled(left).C_tilde)
    np.testing.assert_allclose(theta.B, left.B, atol=1e-12)
    np.testing.assert_allclose(theta.V, left.V, atol=1e-12)


def test_non_pd_covariance_is_rejected():
    with pytest.raises(DegenerateDataError):
        recover_theta(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros((2, 1)))


def test_cholesky_factors():
    S = SCENARIOS["b"].covariance
    Ct = np.zeros((3, n_pairs(3)))
    Ct[1, 2] = Ct[2, 2] = 1.0
    Q, L = cholesky_factors(S, Ct)
    np.testing.assert_allclose(Q @ Q.T, S, atol=1e-14)
    np.testing.assert_allclose(L @ L.T, np.eye(3) + Ct @ Ct.T, atol=1e-14)


def test_scenario_b_truth_is_recovered():
    sc = SCENARIOS["b"]
    Ct = to_scaled(sc.params).C_tilde
    theta = recover_theta(sc.covariance, Ct)
    np.testing.assert_allclose(theta.B, sc.params.B, atol=1e-13)
    assert np.allclose(from_scaled(ScaledParameters(theta.B_tilde, Ct, theta.V)).C, sc.params.C)
