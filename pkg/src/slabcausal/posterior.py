"""Large-sample-limit posterior over scaled confounding coefficients.

In the limit ``N -> inf`` the likelihood pins ``Theta = (B, V)`` to the exact
fit ``Theta*(Ct, S)`` and integrating ``Theta`` out with Laplace's method
leaves::

    log p(Ct | S) = -1/2 log det(-H) + log p(Theta*) + log p(Ct) + const

where ``H`` is the Hessian of the per-datapoint log-likelihood with respect to
``Theta`` at the fit. ``Theta`` is parameterised as ``(Bt, V)``, the scaled
coefficients and the variances, so that ``H`` and the prior densities share
coordinates. Coordinates are ordered as all ``b_pq`` (``p > q``,
lexicographic in ``(p, q)``) followed by ``v_1 .. v_n``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .recovery import NumericalDegeneracyError, RecoveredTheta, cholesky_factors, recover_theta
from .sem_model import SemParameters, confounder_mask, implied_covariance, pairs

__all__ = [
    "PriorConfig",
    "ConfounderPosterior",
    "b_coordinates",
    "log_likelihood_per_datapoint",
    "spike_slab_log_density",
    "log_prior_theta",
    "log_prior_confounders",
    "hessian",
    "log_hessian_term",
    "log_posterior_confounders",
    "Diagnostics",
    "diagnostics",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the spike-and-slab, log-uniform and Gaussian priors."""

    w_spike: float = 0.5
    w_slab: float = 0.5
    v_spike: float = 1e-4
    v_slab: float = 1.0
    v_min: float = 1e-6
    v_max: float = 1e6
    confounder_sd: float = 1.0

    def __post_init__(self):
        if self.w_spike < 0 or self.w_slab < 0 or abs(self.w_spike + self.w_slab - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if not (0 < self.v_spike <= self.v_slab):
            raise ValueError("need 0 < v_spike <= v_slab")
        if not (0 < self.v_min < self.v_max):
            raise ValueError("need 0 < v_min < v_max")
        if not self.confounder_sd > 0:
            raise ValueError("confounder_sd must be positive")

    def replace(self, **changes) -> "PriorConfig":
        return PriorConfig(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


class Diagnostics:
    """Thread-safe counters for points the posterior had to reject."""

    def __init__(self):
        self._lock = threading.Lock()
        self.counts = {"non_pd_hessian": 0, "degenerate_recovery": 0}

    def bump(self, key: str) -> None:
        with self._lock:
            self.counts[key] = self.counts.get(key, 0) + 1

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self.counts)

    def reset(self) -> None:
        with self._lock:
            for k in self.counts:
                self.counts[k] = 0


diagnostics = Diagnostics()


def b_coordinates(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices ``(p, q)`` of the free entries of ``B``, in Hessian order."""
    p, q = zip(*[(p, q) for p in range(n) for q in range(p)]) if n > 1 else ((), ())
    return np.array(p, dtype=int), np.array(q, dtype=int)


def log_likelihood_per_datapoint(params: SemParameters, S_hat) -> float:
    """``-1/2 (tr(Sigma^{-1} S) + log det Sigma)``, additive constants dropped."""
    Sigma = implied_covariance(params)
    chol = np.linalg.cholesky(Sigma)
    X = solve_triangular(chol, np.asarray(S_hat, dtype=float), lower=True)
    trace = np.trace(solve_triangular(chol, X.T, lower=True))
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (trace + logdet)


def spike_slab_log_density(x, cfg: PriorConfig):
    """Log density of the two-component zero-mean Gaussian mixture."""
    x = np.asarray(x, dtype=float)
    comps = []
    weights = []
    for w, v in ((cfg.w_spike, cfg.v_spike), (cfg.w_slab, cfg.v_slab)):
        if w > 0:
            comps.append(-0.5 * (_LOG_2PI + math.log(v)) - 0.5 * x**2 / v)
            weights.append(w)
    out = logsumexp(np.stack(comps), b=np.array(weights).reshape(-1, *([1] * x.ndim)), axis=0)
    return float(out) if out.ndim == 0 else out


def _log_prior_variances(V, cfg: PriorConfig) -> float:
    V = np.asarray(V)
    if np.any(V < cfg.v_min) or np.any(V > cfg.v_max):
        return -math.inf
    log_norm = math.log(math.log(cfg.v_max) - math.log(cfg.v_min))
    return float(-np.sum(np.log(V)) - V.size * log_norm)


def log_prior_theta(theta: RecoveredTheta, cfg: PriorConfig) -> float:
    """Spike-and-slab on every scaled ``b_ij`` plus truncated log-uniform on every ``v_i``.

    Returns ``-inf`` when a variance falls outside ``[v_min, v_max]``.
    """
    lv = _log_prior_variances(theta.V, cfg)
    if lv == -math.inf:
        return lv
    p, q = b_coordinates(theta.n)
    return float(np.sum(spike_slab_log_density(theta.B_tilde[p, q], cfg))) + lv


def _free_mask(n: int, free_pairs) -> np.ndarray:
    mask = confounder_mask(n)
    if free_pairs is not None:
        keep = np.zeros(mask.shape[1], dtype=bool)
        index = {pr: k for k, pr in enumerate(pairs(n))}
        for j, i in free_pairs:
            keep[index[(min(j, i), max(j, i))]] = True
        mask &= keep[None, :]
    return mask


def log_prior_confounders(C_tilde, cfg: PriorConfig, free_pairs=None) -> float:
    """Independent ``N(0, sd^2)`` log densities over the free entries of ``C_tilde``.

    ``free_pairs`` restricts the sum to the columns of the listed pairs; by
    default every pair is free (two entries per column).
    """
    C_tilde = np.asarray(C_tilde, dtype=float)
    vals = C_tilde[_free_mask(C_tilde.shape[0], free_pairs)]
    sd = cfg.confounder_sd
    return float(-0.5 * vals.size * (_LOG_2PI + 2.0 * math.log(sd)) - 0.5 * np.sum(vals**2) / sd**2)


def _hessian_raw(theta: RecoveredTheta, C_tilde) -> np.ndarray:
    n = theta.n
    p, q = b_coordinates(n)
    Delta = np.eye(n) - theta.B_tilde
    Omega = np.eye(n) + C_tilde @ C_tilde.T
    Dinv = solve_triangular(Delta, np.eye(n), lower=True, unit_diagonal=True)
    Oinv = np.linalg.inv(Omega)
    St = Dinv @ Omega @ Dinv.T
    Kt = Delta.T @ Oinv @ Delta
    v = theta.V

    bb = St[np.ix_(q, q)] * Oinv[np.ix_(p, p)] + Dinv[np.ix_(q, p)].T * Dinv[np.ix_(q, p)]
    vv = (np.eye(n) + St * Kt) / (4.0 * np.outer(v, v))
    KD = Kt @ Dinv
    # cross[a, r] for a = (p, q)
    r = np.arange(n)
    cross = (St[np.ix_(q, r)] * KD[np.ix_(r, p)].T + (q[:, None] == r[None, :]) * Dinv[np.ix_(r, p)].T)
    cross = cross / (2.0 * v[None, :])
    return _assemble(bb, vv, cross)


def _hessian_cholesky(theta: RecoveredTheta, C_tilde, S_hat) -> np.ndarray:
    n = theta.n
    p, q = b_coordinates(n)
    Q, L = cholesky_factors(S_hat, C_tilde)
    I = np.eye(n)
    Linv = solve_triangular(L, I, lower=True)
    Qinv = solve_triangular(Q, I, lower=True)
    QQt = Q @ Q.T
    LtL = Linv.T @ Linv
    QL = Q @ Linv
    QtQ = Qinv.T @ Qinv
    QtL = Qinv.T @ Linv
    v = theta.V
    sd = np.sqrt(v)

    bb = (QQt[np.ix_(q, q)] * LtL[np.ix_(p, p)] + QL[np.ix_(q, p)].T * QL[np.ix_(q, p)])
    bb = bb / np.outer(sd[q], sd[q])
    vv = (I + QQt * QtQ) / (4.0 * np.outer(v, v))
    r = np.arange(n)
    cross = QQt[np.ix_(q, r)] * QtL[np.ix_(r, p)].T + (q[:, None] == r[None, :]) * QL[np.ix_(r, p)].T
    cross = cross / (2.0 * v[None, :] * sd[q][:, None])
    return _assemble(bb, vv, cross)


def _assemble(bb, vv, cross) -> np.ndarray:
    H = np.block([[bb, cross], [cross.T, vv]])
    return 0.5 * (H + H.T)


def hessian(theta: RecoveredTheta, C_tilde, S_hat=None, form: str = "raw") -> np.ndarray:
    """Negative Hessian of the per-datapoint log-likelihood at the exact fit.

    Parameters
    ----------
    theta : RecoveredTheta
        Must equal ``recover_theta(S_hat, C_tilde)``.
    C_tilde : ndarray
        Scaled confounding coefficients.
    S_hat : ndarray, optional
        Covariance; required for ``form="cholesky"``.
    form : {"raw", "cholesky"}
        ``"raw"`` uses ``Delta = I - Bt`` and ``Omega = I + Ct Ct^T``;
        ``"cholesky"`` the equivalent expressions in ``chol(S_hat)`` and
        ``chol(Omega)``.

    Returns
    -------
    ndarray, shape (d, d), ``d = n(n+1)/2``
        Ordered as ``b_pq`` (lexicographic, ``p > q``) then ``v_1..v_n``.
    """
    C_tilde = np.asarray(C_tilde, dtype=float)
    if form == "raw":
        return _hessian_raw(theta, C_tilde)
    if form == "cholesky":
        if S_hat is None:
            raise ValueError("the Cholesky form needs S_hat")
        return _hessian_cholesky(theta, C_tilde, S_hat)
    raise ValueError(f"unknown Hessian form {form!r}")


def log_hessian_term(theta: RecoveredTheta, C_tilde) -> float:
    """``-1/2 log det(-H)``; ``-inf`` if ``-H`` is numerically not positive definite."""
    try:
        chol = np.linalg.cholesky(_hessian_raw(theta, np.asarray(C_tilde, dtype=float)))
    except np.linalg.LinAlgError:
        diagnostics.bump("non_pd_hessian")
        return -math.inf
    return float(-np.sum(np.log(np.diag(chol))))


def log_posterior_confounders(C_tilde, S_hat, cfg: PriorConfig, free_pairs=None,
                              hessian_only: bool = False) -> float:
    """Unnormalised large-sample log posterior of the scaled confounders.

    With ``hessian_only=True`` only the ``-1/2 log det(-H)`` term is
    returned. Non-PD Hessians and degenerate recoveries give ``-inf``.
    """
    C_tilde = np.asarray(C_tilde, dtype=float)
    try:
        theta = recover_theta(S_hat, C_tilde)
    except NumericalDegeneracyError:
        diagnostics.bump("degenerate_recovery")
        return -math.inf
    term = log_hessian_term(theta, C_tilde)
    if hessian_only or term == -math.inf:
        return term
    prior_theta = log_prior_theta(theta, cfg)
    if prior_theta == -math.inf:
        return prior_theta
    return term + prior_theta + log_prior_confounders(C_tilde, cfg, free_pairs)


class ConfounderPosterior:
    """Log posterior as a function of the free confounder coordinates.

    The flat coordinate vector lists, for each free pair ``(j, i)`` in
    column order, the loadings on row ``j`` then row ``i``. Calls go through a
    compiled kernel; :meth:`reference` evaluates the same point with the
    plain numpy implementation.

    With ``confounder_prior=False`` the Gaussian prior on the coordinates is
    left out, which is what a sampler that draws from that prior needs as its
    likelihood.
    """

    def __init__(self, S_hat, cfg: PriorConfig = PriorConfig(), free_pairs=None,
                 hessian_only: bool = False, confounder_prior: bool = True):
        from .sem_model import validate_covariance

        self.S_hat = validate_covariance(S_hat)
        self.n = self.S_hat.shape[0]
        self.cfg = cfg
        mask = _free_mask(self.n, free_pairs)
        self.free_pairs = [pr for k, pr in enumerate(pairs(self.n)) if mask[:, k].any()]
        # column-major over the mask: per pair, row j then row i
        cols, rows = np.nonzero(mask.T)
        self._rows, self._cols = rows, cols
        self.dim = rows.size
        self.hessian_only = hessian_only
        self.confounder_prior = confounder_prior
        self._no_vals = np.empty(0)
        self._Q = np.linalg.cholesky(self.S_hat)
        self._Qinv = solve_triangular(self._Q, np.eye(self.n), lower=True)
        self._hp = np.array([cfg.w_spike, cfg.v_spike, cfg.w_slab, cfg.v_slab,
                             cfg.v_min, cfg.v_max, cfg.confounder_sd])

    def embed(self, x) -> np.ndarray:
        """Scatter a coordinate vector into a full ``C_tilde`` matrix."""
        C = np.zeros((self.n, self.n * (self.n - 1) // 2))
        C[self._rows, self._cols] = x
        return C

    def __call__(self, x) -> float:
        from ._kernels import log_posterior

        x = np.ascontiguousarray(x, dtype=float)
        val, status = log_posterior(self._Q, self._Qinv, self.embed(x),
                                    x if self.confounder_prior else self._no_vals,
                                    self._hp, self.hessian_only)
        if status == 1:
            diagnostics.bump("non_pd_hessian")
        elif status == 2:
            diagnostics.bump("degenerate_recovery")
        return val

    def reference(self, x) -> float:
        C = self.embed(x)
        val = log_posterior_confounders(C, self.S_hat, self.cfg, self.free_pairs,
                                        self.hessian_only)
        if self.confounder_prior or self.hessian_only or val == -math.inf:
            return val
        return val - log_prior_confounders(C, self.cfg, self.free_pairs)

    def theta(self, x) -> RecoveredTheta:
        return recover_theta(self.S_hat, self.embed(x))
