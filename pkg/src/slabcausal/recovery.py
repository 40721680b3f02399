"""Recover structural coefficients and noise variances from a covariance.

For any scaled confounding matrix ``Ct`` there is exactly one pair
``(B, V)`` whose implied covariance equals a given SPD matrix ``S``. With
lower Cholesky factors ``Q = chol(S)`` and ``L = chol(I + Ct Ct^T)``::

    V^{1/2} (I - Bt)^{-1} = Q L^{-1}
    V^{1/2}               = diag(Q L^{-1})
    Bt                    = I - L Q^{-1} V^{1/2}
    B                     = I - V^{1/2} L Q^{-1}
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .sem_model import DegenerateDataError, SemParameters

__all__ = ["NumericalDegeneracyError", "RecoveredTheta", "recover_theta", "cholesky_factors"]


class NumericalDegeneracyError(ArithmeticError):
    """Recovered variances are not positive (extreme ill-conditioning)."""


@dataclass(frozen=True, eq=False)
class RecoveredTheta:
    """Maximum-likelihood ``(B, V)`` for a fixed confounding matrix.

    ``B_tilde`` is kept alongside ``B`` because the prior is defined on the
    scaled coefficients.
    """

    B: np.ndarray
    V: np.ndarray
    B_tilde: np.ndarray

    @property
    def n(self) -> int:
        return self.V.size

    def with_confounders(self, C_tilde) -> SemParameters:
        """Raw SEM parameters obtained by attaching scaled confounders."""
        return SemParameters(self.B, np.sqrt(self.V)[:, None] * np.asarray(C_tilde), self.V)


def cholesky_factors(S_hat, C_tilde) -> tuple[np.ndarray, np.ndarray]:
    """Lower Cholesky factors ``Q`` of ``S_hat`` and ``L`` of ``I + Ct Ct^T``."""
    S_hat = np.asarray(S_hat, dtype=float)
    C_tilde = np.asarray(C_tilde, dtype=float)
    try:
        Q = np.linalg.cholesky(S_hat)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError("covariance is not positive definite") from exc
    n = S_hat.shape[0]
    L = np.linalg.cholesky(np.eye(n) + C_tilde @ C_tilde.T)
    return Q, L


def recover_theta(S_hat, C_tilde) -> RecoveredTheta:
    """Unique ``(B, V)`` reproducing ``S_hat`` exactly given ``C_tilde``.

    Parameters
    ----------
    S_hat : ndarray, shape (n, n)
        Symmetric positive definite covariance.
    C_tilde : ndarray, shape (n, n(n-1)/2)
        Scaled confounding coefficients.

    Raises
    ------
    DegenerateDataError
        If ``S_hat`` is not positive definite.
    NumericalDegeneracyError
        If a recovered variance is not strictly positive.
    """
    Q, L = cholesky_factors(S_hat, C_tilde)
    n = Q.shape[0]
    # M = Q L^{-1}, lower triangular with diagonal Q_ii / L_ii
    M = solve_triangular(L, Q.T, lower=True, trans="T").T
    sd = np.diag(M).copy()
    V = sd**2
    if np.any(~(V > 0)) or not np.all(np.isfinite(V)):
        raise NumericalDegeneracyError(f"recovered non-positive variances {V}")
    # L Q^{-1} = (Q^{-T} L^T)^T
    LQinv = solve_triangular(Q, L.T, lower=True, trans="T").T
    B = np.tril(np.eye(n) - sd[:, None] * LQinv, k=-1)
    B_tilde = np.tril(np.eye(n) - LQinv * sd[None, :], k=-1)
    return RecoveredTheta(B, V, B_tilde)
