"""Nested sampling for low-dimensional, bounded-support posteriors.

Live points are kept in the unit hypercube and pushed through a prior
transform before the log density is evaluated. A dead point is replaced by a
uniform draw from the padded bounding box of the live points when one of a
few attempts lands above the likelihood floor; otherwise a constrained Markov
chain is run from a randomly chosen surviving live point, either slice
sampling along random directions shaped by the live-point covariance
(default) or a Metropolis random walk whose step is tuned during a warm-up
window and then frozen. Evidence is accumulated with the trapezoid rule on
the expected shrinkage ``X_i = exp(-i / n_live)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp, ndtri

from .posterior import ConfounderPosterior, PriorConfig, diagnostics
from .recovery import RecoveredTheta, recover_theta

__all__ = [
    "SamplerConfig",
    "WeightedPosterior",
    "SamplerError",
    "MaxIterationsError",
    "prior_transform",
    "run_nested",
    "sample_causal_posterior",
]

_CLAMP_SD = 8.0
_BOX_PAD = 0.1


class SamplerError(RuntimeError):
    """The sampler could not be configured or run."""


class MaxIterationsError(SamplerError):
    """Iteration budget exhausted; ``partial`` holds the result so far."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class SamplerConfig:
    n_live: int = 400
    termination_fraction: float = 1e-3
    max_iterations: int = 1_000_000
    seed: int = 0
    steps_per_replacement: int | None = None  # None -> 5 * dimension
    method: str = "slice"
    warmup: int = 200  # replacements used to tune the random-walk step
    slice_width: float = 3.0  # initial bracket, in live-point standard deviations
    box_attempts: int = 50  # uniform draws from the live-point bounding box before walking

    def __post_init__(self):
        if self.n_live < 2:
            raise ValueError("n_live must be at least 2")
        if not self.termination_fraction > 0:
            raise ValueError("termination_fraction must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.steps_per_replacement is not None and self.steps_per_replacement < 1:
            raise ValueError("steps_per_replacement must be positive")
        if self.method not in ("slice", "rwalk"):
            raise ValueError(f"unknown method {self.method!r}")

    def steps(self, dimension: int) -> int:
        return self.steps_per_replacement or 5 * dimension

    def replace(self, **changes) -> "SamplerConfig":
        return replace(self, **changes)


@dataclass
class WeightedPosterior:
    """Weighted draws from a nested-sampling run.

    ``log_weights`` are unnormalised: their log-sum-exp is ``log_evidence``.
    ``B`` and ``V`` hold the structural fit for every draw when the run came
    from :func:`sample_causal_posterior`.
    """

    samples: np.ndarray
    log_weights: np.ndarray
    log_likelihood: np.ndarray
    log_evidence: float
    log_evidence_error: float
    information: float
    thresholds: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    B: np.ndarray | None = None
    V: np.ndarray | None = None

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - logsumexp(self.log_weights))
        return w / w.sum()

    @property
    def effective_sample_size(self) -> float:
        w = self.weights
        return float(1.0 / np.sum(w**2))

    def __len__(self) -> int:
        return self.samples.shape[0]

    def theta(self, k: int) -> RecoveredTheta:
        sd = np.sqrt(self.V[k])
        return RecoveredTheta(self.B[k], self.V[k], self.B[k] * np.outer(1.0 / sd, sd))

    def parameter(self, name: str) -> np.ndarray:
        """Values of ``"b32"``, ``"v2"`` or ``"c1"`` (1-based) across draws."""
        kind, idx = name[0].lower(), name[1:]
        if kind == "b" and len(idx) == 2 and self.B is not None:
            return self.B[:, int(idx[0]) - 1, int(idx[1]) - 1]
        if kind == "v" and self.V is not None:
            return self.V[:, int(idx) - 1]
        if kind == "c":
            return self.samples[:, int(idx) - 1]
        raise KeyError(f"unknown parameter {name!r}")

    def to_document(self) -> dict:
        """JSON-serialisable form of the run."""
        draws = []
        for k in range(len(self)):
            d = {"c": self.samples[k].tolist(), "log_weight": float(self.log_weights[k])}
            if self.B is not None:
                d["B"] = self.B[k].tolist()
                d["V"] = self.V[k].tolist()
            draws.append(d)
        return {
            "draws": draws,
            "log_evidence": self.log_evidence,
            "log_evidence_error": self.log_evidence_error,
            "information": self.information,
            "effective_sample_size": self.effective_sample_size,
            "diagnostics": self.diagnostics,
        }


def prior_transform(u, cfg: PriorConfig = PriorConfig(), counts: dict | None = None) -> np.ndarray:
    """Map unit-cube coordinates to independent ``N(0, confounder_sd^2)`` draws.

    Coordinates at exactly 0 or 1 are clamped to -8 or +8 standard deviations
    and tallied under ``counts["clamped"]``.
    """
    u = np.asarray(u, dtype=float)
    z = ndtri(u)
    edge = ~np.isfinite(z)
    if np.any(edge):
        z = np.where(edge, np.sign(u - 0.5) * _CLAMP_SD, z)
        if counts is not None:
            counts["clamped"] = counts.get("clamped", 0) + int(np.sum(edge))
    return z * cfg.confounder_sd


class _Walker:
    """Constrained moves inside the unit cube above a log-likelihood floor."""

    def __init__(self, loglike, transform, dimension, cfg, rng, stats):
        self.loglike = loglike
        self.transform = transform
        self.d = dimension
        self.n_steps = cfg.steps(dimension)
        self.method = cfg.method
        self.warmup = cfg.warmup
        self.rng = rng
        self.stats = stats
        self.scale = cfg.slice_width if cfg.method == "slice" else 1.0
        self.box_attempts = cfg.box_attempts
        self.tuned = 0

    def _eval(self, u):
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            return -math.inf, None
        v = self.transform(u)
        self.stats["ncall"] += 1
        return self.loglike(v), v

    def box_draw(self, live_u, floor):
        """Uniform draws from the padded bounding box of the live points.

        Exact constrained-prior samples whenever the box covers the contour,
        which keeps well-separated modes populated in proportion to volume.
        """
        lo, hi = live_u.min(axis=0), live_u.max(axis=0)
        pad = _BOX_PAD * (hi - lo)
        lo, hi = np.maximum(lo - pad, 0.0), np.minimum(hi + pad, 1.0)
        for _ in range(self.box_attempts):
            cand = lo + (hi - lo) * self.rng.random(self.d)
            cl, cv = self._eval(cand)
            if cl > floor:
                self.stats["box_accepted"] += 1
                return cand, cl, cv
        return None

    def move(self, u, logl, v, floor, axes):
        if self.method == "slice":
            return self._slice(u, logl, v, floor, axes)
        return self._rwalk(u, logl, v, floor, axes)

    def _slice(self, u, logl, v, floor, axes):
        rng = self.rng
        for _ in range(self.n_steps):
            z = rng.standard_normal(self.d)
            direction = axes @ (z / np.linalg.norm(z)) * self.scale
            r = rng.random()
            lo, hi = -r, 1.0 - r
            n_out = 0
            while n_out < 100 and self._eval(u + lo * direction)[0] > floor:
                lo -= 1.0
                n_out += 1
            while n_out < 200 and self._eval(u + hi * direction)[0] > floor:
                hi += 1.0
                n_out += 1
            self.stats["expansions"] += n_out
            while True:
                t = lo + (hi - lo) * rng.random()
                cand = u + t * direction
                cl, cv = self._eval(cand)
                if cl > floor:
                    u, logl, v = cand, cl, cv
                    break
                self.stats["contractions"] += 1
                if t < 0:
                    lo = t
                else:
                    hi = t
                if hi - lo < 1e-12:
                    self.stats["slice_collapse"] += 1
                    break
        return u, logl, v

    def _rwalk(self, u, logl, v, floor, axes):
        rng = self.rng
        accepted = 0
        for _ in range(self.n_steps):
            cand = u + self.scale * (axes @ rng.standard_normal(self.d))
            cl, cv = self._eval(cand)
            if cl > floor:
                u, logl, v = cand, cl, cv
                accepted += 1
        if self.tuned < self.warmup:
            # Robbins-Monro drift of the step toward 50% acceptance, then frozen
            rate = accepted / self.n_steps
            self.scale *= math.exp((rate - 0.5) * 2.0 / math.sqrt(self.tuned + 1))
            self.tuned += 1
        self.stats["accepted"] += accepted
        self.stats["proposed"] += self.n_steps
        return u, logl, v


def _live_axes(live_u):
    cov = np.atleast_2d(np.cov(live_u, rowvar=False))
    cov += 1e-12 * np.eye(cov.shape[0])
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return np.diag(np.sqrt(np.maximum(np.diag(cov), 1e-12)))


def run_nested(log_density, dimension: int, prior_transform, cfg: SamplerConfig = SamplerConfig(),
               debug: bool = False) -> WeightedPosterior:
    """Nested sampling over the unit hypercube.

    Parameters
    ----------
    log_density : callable
        ``log_density(x) -> float`` on the transformed coordinates; ``-inf``
        marks zero likelihood. Must be bounded above.
    dimension : int
        Number of coordinates.
    prior_transform : callable
        Maps a point of ``(0, 1)^dimension`` to the prior.
    cfg : SamplerConfig

    Returns
    -------
    WeightedPosterior
        Dead points followed by the final live points, with trapezoid-rule
        weights. ``thresholds`` is the sequence of likelihood floors.

    Raises
    ------
    SamplerError
        If every initial live point has zero likelihood.
    MaxIterationsError
        If ``cfg.max_iterations`` is reached before termination.
    """
    rng = np.random.default_rng(cfg.seed)
    N, d = cfg.n_live, dimension
    stats = {"ncall": 0, "box_accepted": 0, "expansions": 0, "contractions": 0, "slice_collapse": 0,
             "accepted": 0, "proposed": 0}
    live_u = rng.random((N, d))
    live_v = np.array([prior_transform(u) for u in live_u]).reshape(N, d)
    live_l = np.array([log_density(v) for v in live_v], dtype=float)
    stats["ncall"] += N
    if not np.any(np.isfinite(live_l)):
        raise SamplerError("log density is -inf at every initial live point")
    if np.any(live_l == math.inf) or np.any(np.isnan(live_l)):
        raise SamplerError("log density returned +inf or nan")

    walker = _Walker(log_density, prior_transform, d, cfg, rng, stats)
    dead_u, dead_l, dead_logwt, thresholds = [], [], [], []
    logz = -math.inf
    log_x = 0.0
    prev_l = -math.inf
    log_shrink = math.log1p(-math.exp(-1.0 / N))  # log(1 - e^{-1/N})
    axes = _live_axes(live_u)
    it = 0
    converged = False
    while it < cfg.max_iterations:
        worst = int(np.argmin(live_l))
        floor = live_l[worst]
        lmax = np.max(live_l)
        if floor == lmax:  # plateau: remaining volume has constant likelihood
            converged = True
            break
        if logz > -math.inf and lmax + log_x - logz < math.log(cfg.termination_fraction):
            converged = True
            break
        if debug and thresholds:
            assert floor >= thresholds[-1]
        thresholds.append(floor)
        # trapezoid: 0.5 (L_{i-1} + L_i) (X_{i-1} - X_i), X_i = X_{i-1} e^{-1/N}
        log_dx = log_x + log_shrink
        logwt = np.logaddexp(prev_l, floor) + math.log(0.5) + log_dx
        dead_u.append(live_u[worst].copy())
        dead_l.append(floor)
        dead_logwt.append(logwt)
        logz = np.logaddexp(logz, logwt)
        prev_l = floor
        log_x -= 1.0 / N
        it += 1

        above = np.flatnonzero(live_l > floor)
        start = int(above[rng.integers(above.size)])
        if it % max(1, N // 10) == 0:
            axes = _live_axes(live_u)
        drawn = walker.box_draw(live_u, floor) if cfg.box_attempts else None
        if drawn is None:
            drawn = walker.move(live_u[start], live_l[start], live_v[start], floor, axes)
        u, l, v = drawn
        if not l > floor:
            raise AssertionError("constrained move returned a point below the floor")
        live_u[worst], live_l[worst], live_v[worst] = u, l, v

    # absorb the final live points, each owning X_final / N of prior volume
    order = np.argsort(live_l, kind="stable")
    live_logwt = live_l[order] + log_x - math.log(N)
    all_u = np.vstack([np.array(dead_u).reshape(-1, d), live_u[order]])
    all_l = np.concatenate([np.array(dead_l), live_l[order]])
    all_logwt = np.concatenate([np.array(dead_logwt), live_logwt])
    keep = np.isfinite(all_logwt)
    logz = float(logsumexp(all_logwt[keep]))

    fin = keep & np.isfinite(all_l)
    p = np.exp(all_logwt[fin] - logz)
    information = float(max(np.sum(p * all_l[fin]) - logz, 0.0))
    result = WeightedPosterior(
        samples=np.array([prior_transform(u) for u in all_u[keep]]).reshape(-1, d),
        log_weights=all_logwt[keep],
        log_likelihood=all_l[keep],
        log_evidence=logz,
        log_evidence_error=math.sqrt(information / N) if information > 0 else 0.0,
        information=information,
        thresholds=np.array(thresholds),
        diagnostics={**stats, "iterations": it, "n_live": N, "converged": converged,
                     "dropped_zero_weight": int(np.sum(~keep))},
    )
    if not converged:
        raise MaxIterationsError(f"stopped after {it} iterations without converging", result)
    return result


def sample_causal_posterior(S_hat, prior_cfg: PriorConfig = PriorConfig(),
                            sampler_cfg: SamplerConfig = SamplerConfig(),
                            free_pairs=None) -> WeightedPosterior:
    """Nested-sample the confounder posterior and attach ``(B, V)`` to every draw.

    ``free_pairs`` lists the variable pairs (0-based) whose confounder is
    sampled; all other confounders are fixed at zero. By default every pair
    is free.
    """
    # the prior transform supplies p(C); the sampled likelihood is the rest
    target = ConfounderPosterior(S_hat, prior_cfg, free_pairs, confounder_prior=False)
    before = diagnostics.snapshot()
    counts: dict = {}

    def transform(u):
        return prior_transform(u, prior_cfg, counts)

    result = run_nested(target, target.dim, transform, sampler_cfg)
    after = diagnostics.snapshot()
    result.diagnostics.update({k: after[k] - before.get(k, 0) for k in after})
    result.diagnostics["clamped"] = counts.get("clamped", 0)

    k = len(result)
    B = np.empty((k, target.n, target.n))
    V = np.empty((k, target.n))
    for idx in range(k):
        theta = recover_theta(target.S_hat, target.embed(result.samples[idx]))
        B[idx], V[idx] = theta.B, theta.V
    result.B, result.V = B, V
    result.diagnostics["free_pairs"] = [list(pr) for pr in target.free_pairs]
    return result
