"""Linear-Gaussian structural equation models with a bow on every pair.

Variables are indexed ``0..n-1`` in causal order. The structural matrix ``B``
is strictly lower triangular (``B[i, j]`` is the effect of ``j`` on ``i``),
and every unordered pair ``(j, i)`` with ``j < i`` owns one latent confounder
of unit variance. The confounder loadings live in an ``n x m`` matrix ``C``
with ``m = n(n-1)/2``; column ``k`` belongs to ``pairs(n)[k]`` and may only be
nonzero at rows ``j`` and ``i``. Columns are ordered lexicographically.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "DegenerateDataError",
    "SemParameters",
    "ScaledParameters",
    "pairs",
    "pair_index",
    "n_pairs",
    "confounder_mask",
    "validate_covariance",
    "implied_covariance",
    "implied_covariance_scaled",
    "to_scaled",
    "from_scaled",
    "simulate_data",
    "sample_covariance",
]


class DegenerateDataError(ValueError):
    """Raised when a covariance estimate is not positive definite."""


@lru_cache(maxsize=None)
def pairs(n: int) -> tuple[tuple[int, int], ...]:
    """Return the variable pairs ``(j, i)``, ``j < i``, in column order of ``C``."""
    return tuple((j, i) for j in range(n) for i in range(j + 1, n))


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def pair_index(n: int, j: int, i: int) -> int:
    """Column of ``C`` holding the confounder shared by ``j`` and ``i``."""
    if j == i:
        raise ValueError("a pair needs two distinct variables")
    j, i = min(j, i), max(j, i)
    return pairs(n).index((j, i))


def confounder_mask(n: int) -> np.ndarray:
    """Boolean ``n x m`` mask of the structurally free entries of ``C``."""
    mask = np.zeros((n, n_pairs(n)), dtype=bool)
    for k, (j, i) in enumerate(pairs(n)):
        mask[j, k] = mask[i, k] = True
    return mask


def _check_structure(B: np.ndarray, C: np.ndarray, n: int) -> None:
    if B.shape != (n, n):
        raise ValueError(f"B must be {n}x{n}, got {B.shape}")
    if np.any(np.triu(B) != 0):
        raise ValueError("B must be strictly lower triangular")
    if C.shape != (n, n_pairs(n)):
        raise ValueError(f"C must be {n}x{n_pairs(n)}, got {C.shape}")
    if np.any(C[~confounder_mask(n)] != 0):
        raise ValueError("C has nonzero entries outside its pair rows")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SemParameters:
    """Raw parameters ``(B, C, V)`` of the model ``x = Bx + C eta + e``."""

    B: np.ndarray
    C: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "B", _frozen(self.B))
        object.__setattr__(self, "V", _frozen(self.V).reshape(-1))
        n = self.V.size
        C = np.asarray(self.C, dtype=float)
        if C.size == 0:
            C = np.zeros((n, n_pairs(n)))
        object.__setattr__(self, "C", _frozen(C))
        _check_structure(self.B, self.C, n)
        if np.any(~(self.V > 0)):
            raise ValueError("noise variances must be strictly positive")

    @property
    def n(self) -> int:
        return self.V.size

    @classmethod
    def from_entries(cls, n, b=None, c=None, v=None) -> "SemParameters":
        """Build parameters from sparse entries.

        ``b`` maps ``(i, j)`` to ``B[i, j]``; ``c`` maps ``(j, i, row)`` to the
        loading of the ``(j, i)`` confounder on ``row``. Missing variances
        default to one.
        """
        B = np.zeros((n, n))
        for (i, j), val in (b or {}).items():
            B[i, j] = val
        C = np.zeros((n, n_pairs(n)))
        for (j, i, row), val in (c or {}).items():
            if row not in (j, i):
                raise ValueError(f"row {row} is not part of pair ({j}, {i})")
            C[row, pair_index(n, j, i)] = val
        V = np.ones(n) if v is None else v
        return cls(B, C, V)


@dataclass(frozen=True, eq=False)
class ScaledParameters:
    """Dimensionless parameters ``(B_tilde, C_tilde, V)``."""

    B_tilde: np.ndarray
    C_tilde: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "B_tilde", _frozen(self.B_tilde))
        object.__setattr__(self, "C_tilde", _frozen(self.C_tilde))
        object.__setattr__(self, "V", _frozen(self.V).reshape(-1))
        _check_structure(self.B_tilde, self.C_tilde, self.V.size)
        if np.any(~(self.V > 0)):
            raise ValueError("noise variances must be strictly positive")

    @property
    def n(self) -> int:
        return self.V.size


def validate_covariance(S, rtol: float = 1e-12) -> np.ndarray:
    """Check symmetry and positive definiteness; return ``S`` as a float array."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DegenerateDataError(f"covariance must be square, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise DegenerateDataError("covariance has non-finite entries")
    scale = max(np.max(np.abs(S)), np.finfo(float).tiny)
    if np.max(np.abs(S - S.T)) > rtol * scale:
        raise DegenerateDataError("covariance is not symmetric")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError("covariance is not positive definite") from exc
    return S


def _sandwich(I_minus_B: np.ndarray, M: np.ndarray) -> np.ndarray:
    # (I - B)^{-1} M (I - B)^{-T} via two unit-lower-triangular solves
    X = solve_triangular(I_minus_B, M, lower=True, unit_diagonal=True)
    S = solve_triangular(I_minus_B, X.T, lower=True, unit_diagonal=True)
    return 0.5 * (S + S.T)


def implied_covariance(params: SemParameters) -> np.ndarray:
    """Covariance ``(I-B)^{-1} (V + C C^T) (I-B)^{-T}`` of the observed variables."""
    n = params.n
    inner = np.diag(params.V) + params.C @ params.C.T
    return _sandwich(np.eye(n) - params.B, inner)


def implied_covariance_scaled(scaled: ScaledParameters) -> np.ndarray:
    """Covariance from scaled parameters.

    ``V^{1/2} (I-Bt)^{-1} (I + Ct Ct^T) (I-Bt)^{-T} V^{1/2}``.
    """
    n = scaled.n
    inner = np.eye(n) + scaled.C_tilde @ scaled.C_tilde.T
    core = _sandwich(np.eye(n) - scaled.B_tilde, inner)
    sd = np.sqrt(scaled.V)
    return core * np.outer(sd, sd)


def to_scaled(params: SemParameters) -> ScaledParameters:
    """Make coefficients dimensionless: ``Bt = V^{-1/2} B V^{1/2}``, ``Ct = V^{-1/2} C``."""
    sd = np.sqrt(params.V)
    return ScaledParameters(
        params.B * np.outer(1.0 / sd, sd), params.C / sd[:, None], params.V
    )


def from_scaled(scaled: ScaledParameters) -> SemParameters:
    """Inverse of :func:`to_scaled`."""
    sd = np.sqrt(scaled.V)
    return SemParameters(
        scaled.B_tilde * np.outer(sd, 1.0 / sd), scaled.C_tilde * sd[:, None], scaled.V
    )


def simulate_data(params: SemParameters, n_samples: int, seed: int) -> np.ndarray:
    """Draw ``n_samples`` i.i.d. rows from ``N(0, implied_covariance(params))``."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(implied_covariance(params))
    z = rng.standard_normal((n_samples, params.n))
    return z @ chol.T


def sample_covariance(data) -> np.ndarray:
    """Maximum-likelihood covariance ``X^T X / N`` of column-centred data."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be a 2-D array (samples x variables)")
    N, n = X.shape
    if N < n + 1:
        raise DegenerateDataError(f"need at least {n + 1} rows for {n} variables, got {N}")
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc / N
    S = 0.5 * (S + S.T)
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError("sample covariance is singular (data are degenerate)") from exc
    # numerically singular but cholesky-able matrices
    if np.linalg.cond(S) > 1e14:
        raise DegenerateDataError("sample covariance is singular (data are degenerate)")
    return S
