import numpy as np
import pytest

from slabcausal.posterior import b_coordinates, log_likelihood_per_datapoint
from slabcausal.scenarios import SCENARIOS
from slabcausal.sem_model import (ScaledParameters, SemParameters, confounder_mask, from_scaled,
                                  implied_covariance, n_pairs)


def random_params(rng, n, coef=2.0, v_range=(0.1, 10.0)) -> SemParameters:
    """B, C entries uniform in [-coef, coef]; V log-uniform over ``v_range``."""
    B = np.tril(rng.uniform(-coef, coef, (n, n)), -1)
    C = rng.uniform(-coef, coef, (n, n_pairs(n))) * confounder_mask(n)
    V = np.exp(rng.uniform(np.log(v_range[0]), np.log(v_range[1]), n))
    return SemParameters(B, C, V)


def random_problem(rng, n, max_cond=1e6):
    """A well-conditioned covariance and an independent scaled confounder matrix."""
    while True:
        S = implied_covariance(random_params(rng, n))
        if np.linalg.cond(S) < max_cond:
            break
    Ct = rng.normal(size=(n, n_pairs(n))) * confounder_mask(n)
    return S, Ct


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=sorted(SCENARIOS))
def scenario(request):
    return SCENARIOS[request.param]


@pytest.fixture
def cov():
    return {k: s.covariance for k, s in SCENARIOS.items()}


FD_STEP = 1e-3  # Richardson over (h, h/2, h/4): the h^2 and h^4 error terms cancel


def _central_hessian(S, Ct, theta, h):
    n = theta.n
    p, q = b_coordinates(n)
    x0 = np.concatenate([theta.B_tilde[p, q], theta.V])

    def ll(x):
        Bt = np.zeros((n, n))
        Bt[p, q] = x[: p.size]
        return log_likelihood_per_datapoint(from_scaled(ScaledParameters(Bt, Ct, x[p.size:])), S)

    d = x0.size
    H = np.empty((d, d))
    for a in range(d):
        for b in range(a, d):
            ea, eb = np.eye(d)[a] * h, np.eye(d)[b] * h
            val = (ll(x0 + ea + eb) - ll(x0 + ea - eb) - ll(x0 - ea + eb) + ll(x0 - ea - eb)) / (4 * h * h)
            H[a, b] = H[b, a] = -val
    return H


def fd_hessian(S, Ct, theta, h=FD_STEP):
    """Finite-difference Hessian of the per-datapoint log-likelihood in (B_tilde, V)."""
    D = [_central_hessian(S, Ct, theta, h / 2**k) for k in range(3)]
    R1 = [(4.0 * D[k + 1] - D[k]) / 3.0 for k in range(2)]
    return (16.0 * R1[1] - R1[0]) / 15.0
