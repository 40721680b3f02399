"""Classical point estimators and the Fisher-z conditional independence test.

All functions take a covariance matrix and 0-based variable indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

__all__ = [
    "WeakInstrumentError",
    "CITestResult",
    "iv_estimate",
    "lcd_estimate",
    "partial_correlation",
    "fisher_z_test",
    "min_rejecting_sample_size",
]


class WeakInstrumentError(ZeroDivisionError):
    """The instrument is (numerically) uncorrelated with the cause."""


@dataclass(frozen=True)
class CITestResult:
    partial_correlation: float
    z_statistic: float
    alpha: float
    reject: bool
    n_min_reject: int | None  # None: no sample size rejects (rho == 0)

    def to_dict(self) -> dict:
        return {
            "partial_correlation": self.partial_correlation,
            "z_statistic": self.z_statistic,
            "alpha": self.alpha,
            "reject": self.reject,
            "n_min_reject": self.n_min_reject,
        }


def iv_estimate(S, iv: int, cause: int, effect: int, tol: float = 1e-12) -> float:
    """Instrumental-variable ratio ``Cov(iv, effect) / Cov(iv, cause)``."""
    S = np.asarray(S, dtype=float)
    denom = S[iv, cause]
    if abs(denom) <= tol:
        raise WeakInstrumentError(
            f"Cov(X{iv + 1}, X{cause + 1}) = {denom:.3g}: instrument is too weak"
        )
    return float(S[iv, effect] / denom)


def lcd_estimate(S, cause: int, effect: int) -> float:
    """Regression slope ``Cov(cause, effect) / Var(cause)``."""
    S = np.asarray(S, dtype=float)
    if not S[cause, cause] > 0:
        raise ValueError("the cause must have positive variance")
    return float(S[cause, effect] / S[cause, cause])


def partial_correlation(S, i: int, j: int, k: int) -> float:
    """Partial correlation of ``i`` and ``j`` given the single variable ``k``."""
    S = np.asarray(S, dtype=float)
    sd = np.sqrt(np.diag(S))
    R = S / np.outer(sd, sd)
    r_ij, r_ik, r_jk = R[i, j], R[i, k], R[j, k]
    return float((r_ij - r_ik * r_jk) / math.sqrt((1.0 - r_ik**2) * (1.0 - r_jk**2)))


def min_rejecting_sample_size(rho: float, n_conditioning: int, alpha: float,
                              zero_tol: float = 1e-12) -> int | None:
    """Smallest ``N`` with ``sqrt(N - |cond| - 3) |atanh(rho)| > z_{1 - alpha/2}``.

    Returns ``None`` when ``|rho| <= zero_tol``: population covariances built
    in floating point leave exact independences at the 1e-16 level, and no
    finite sample size rejects a true zero.
    """
    if abs(rho) <= zero_tol:
        return None
    z = abs(math.atanh(rho))
    crit = norm.ppf(1.0 - alpha / 2.0)
    offset = n_conditioning + 3
    n = offset + math.ceil((crit / z) ** 2)
    # the closed form is off by at most a step from rounding; nudge to the first strict rejection
    for _ in range(4):
        if math.sqrt(n - offset) * z <= crit:
            n += 1
        elif n - 1 > offset and math.sqrt(n - 1 - offset) * z > crit:
            n -= 1
        else:
            break
    return n


def fisher_z_test(rho: float, N: int, n_conditioning: int = 1, alpha: float = 0.05) -> CITestResult:
    """Two-sided Fisher-z test of ``rho == 0`` at sample size ``N``."""
    if not abs(rho) < 1:
        raise ValueError("|rho| must be below 1")
    if not N > n_conditioning + 3:
        raise ValueError("need N > n_conditioning + 3")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    stat = math.sqrt(N - n_conditioning - 3) * math.atanh(rho)
    crit = norm.ppf(1.0 - alpha / 2.0)
    return CITestResult(
        partial_correlation=float(rho),
        z_statistic=stat,
        alpha=alpha,
        reject=bool(abs(stat) > crit),
        n_min_reject=min_rejecting_sample_size(rho, n_conditioning, alpha),
    )
