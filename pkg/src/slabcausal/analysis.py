"""Summaries of weighted posteriors, log-posterior grids, ordering comparison
and the spike-variance sweep.

Interval masses are read straight off the weighted draws. Histograms and
kernel density estimates are for display and mode finding only.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .io import fmt, write_csv
from .nested import SamplerConfig, SamplerError, WeightedPosterior, sample_causal_posterior
from .posterior import ConfounderPosterior, PriorConfig
from .sem_model import validate_covariance

__all__ = [
    "InsufficientSampleError",
    "OrderingError",
    "PosteriorSummary",
    "GridResult",
    "OrderingComparison",
    "SweepRow",
    "SweepTable",
    "DEFAULT_INTERVALS",
    "DEFAULT_SPIKES",
    "MAX_ENUMERATED",
    "interval_mass",
    "interval_key",
    "weighted_quantile",
    "weighted_kde",
    "summarize",
    "grid_log_posterior",
    "all_orderings",
    "permute_problem",
    "compare_orderings",
    "spike_sweep",
    "evidence_sweep",
]

DEFAULT_INTERVALS = ((0.9, 1.1), (-0.1, 0.1))
DEFAULT_SPIKES = tuple(10.0**-k for k in range(1, 8))
MAX_ENUMERATED = 5
MIN_ESS = 10.0


class InsufficientSampleError(ValueError):
    """Too few effective draws to summarise."""


class OrderingError(SamplerError):
    """A sampler run failed for one ordering; ``ordering`` names it."""

    def __init__(self, message, ordering):
        super().__init__(message)
        self.ordering = ordering


def interval_key(lo: float, hi: float) -> str:
    """Column name for an interval mass, e.g. ``mass_0.9_1.1``."""
    return f"mass_{float(lo)!r}_{float(hi)!r}"


def _values_and_weights(posterior: WeightedPosterior, target: str):
    return np.asarray(posterior.parameter(target), dtype=float), posterior.weights


def interval_mass(posterior: WeightedPosterior, target: str, lo: float, hi: float) -> float:
    """Posterior probability that ``target`` lies in the closed interval ``[lo, hi]``."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    x, w = _values_and_weights(posterior, target)
    return float(np.sum(w[(x >= lo) & (x <= hi)]))


def weighted_quantile(x, w, q):
    """Inverse of the weighted empirical CDF (midpoint convention)."""
    order = np.argsort(x, kind="stable")
    xs, ws = np.asarray(x, float)[order], np.asarray(w, float)[order]
    cdf = (np.cumsum(ws) - 0.5 * ws) / ws.sum()
    return np.interp(q, cdf, xs)


def _silverman(x, w, ess) -> float:
    mean = np.sum(w * x)
    sd = math.sqrt(max(np.sum(w * (x - mean) ** 2), 0.0))
    q25, q75 = weighted_quantile(x, w, [0.25, 0.75])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    h = 0.9 * spread * ess ** -0.2
    scale = max(1.0, abs(mean))
    if not h > 1e-9 * scale:
        h = 1e-3 * scale  # all draws (numerically) identical
    return h


def weighted_kde(x, w, bandwidth: float, max_points: int = 1 << 16):
    """Gaussian KDE of weighted draws on a regular grid.

    Weights are linearly binned onto a grid with spacing at most
    ``bandwidth / 8`` and convolved with the sampled kernel, so the curve
    integrates to one up to discretisation of the tails.
    """
    x = np.asarray(x, float)
    w = np.asarray(w, float) / np.sum(w)
    lo, hi = x.min() - 5 * bandwidth, x.max() + 5 * bandwidth
    step = bandwidth / 8.0
    n = int(math.ceil((hi - lo) / step)) + 1
    if n > max_points:
        n = max_points
        step = (hi - lo) / (n - 1)
    grid = lo + step * np.arange(n)
    pos = (x - lo) / step
    left = np.clip(np.floor(pos).astype(int), 0, n - 2)
    frac = pos - left
    binned = np.zeros(n)
    np.add.at(binned, left, w * (1.0 - frac))
    np.add.at(binned, left + 1, w * frac)
    half = int(math.ceil(5 * bandwidth / step))
    offsets = step * np.arange(-half, half + 1)
    kernel = np.exp(-0.5 * (offsets / bandwidth) ** 2) / (bandwidth * math.sqrt(2 * math.pi))
    density = np.convolve(binned, kernel, mode="same") if n >= kernel.size else \
        np.convolve(binned, kernel, mode="full")[half:half + n]
    return grid, density


def _local_maxima(grid, density):
    d = density
    idx = [k for k in range(1, d.size - 1) if d[k] > d[k - 1] and d[k] >= d[k + 1] and d[k] > 0]
    if d.size and d[0] > d[1 if d.size > 1 else 0]:
        idx.insert(0, 0)
    idx.sort(key=lambda k: -d[k])
    return [(float(grid[k]), float(d[k])) for k in idx]


@dataclass
class PosteriorSummary:
    target: str
    interval_masses: list  # [((lo, hi), mass), ...]
    bin_edges: np.ndarray
    bin_masses: np.ndarray
    kde_x: np.ndarray
    kde_density: np.ndarray
    modes: list  # [(x, density), ...], highest first
    bandwidth: float
    effective_sample_size: float

    @property
    def kde_integral(self) -> float:
        return float(np.trapezoid(self.kde_density, self.kde_x))

    def highest_modes(self, k: int = 1) -> list:
        return [m[0] for m in self.modes[:k]]

    def has_mode_in(self, lo: float, hi: float) -> bool:
        return any(lo <= m[0] <= hi for m in self.modes)

    def histogram_rows(self):
        return [(a, b, m) for a, b, m in zip(self.bin_edges[:-1], self.bin_edges[1:], self.bin_masses)]

    def kde_rows(self):
        return list(zip(self.kde_x, self.kde_density))

    def write_histogram(self, path):
        return write_csv(path, self.histogram_rows(), header=["bin_lo", "bin_hi", "mass"])

    def write_kde(self, path):
        return write_csv(path, self.kde_rows(), header=["x", "density"])

    def to_dict(self, n_modes: int = 5) -> dict:
        masses = {interval_key(lo, hi): m for (lo, hi), m in self.interval_masses}
        return {
            "target": self.target,
            **masses,
            "interval_masses": [{"lo": lo, "hi": hi, "mass": m} for (lo, hi), m in self.interval_masses],
            "modes": [{"x": x, "density": d} for x, d in self.modes[:n_modes]],
            "bandwidth": self.bandwidth,
            "effective_sample_size": self.effective_sample_size,
        }


def summarize(posterior: WeightedPosterior, target: str = "b32", bins: int = 100,
              kde_bandwidth: float | None = None, intervals=DEFAULT_INTERVALS) -> PosteriorSummary:
    """Interval masses, weighted histogram, weighted KDE and its modes.

    The histogram spans ``[min, max]`` of the draws with ``bins`` equal bins
    (a single bin when every draw is the same). The KDE bandwidth defaults to
    Silverman's rule with the effective sample size in place of the count.

    Raises
    ------
    InsufficientSampleError
        If the effective sample size is below 10.
    """
    x, w = _values_and_weights(posterior, target)
    ess = float(1.0 / np.sum(w**2))
    if ess < MIN_ESS:
        raise InsufficientSampleError(f"effective sample size {ess:.1f} is below {MIN_ESS:g}")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        edges, masses = np.array([lo, hi]), np.array([1.0])
    else:
        masses, edges = np.histogram(x, bins=bins, range=(lo, hi), weights=w)
        masses = masses / masses.sum()
    h = float(kde_bandwidth) if kde_bandwidth else _silverman(x, w, ess)
    gx, gd = weighted_kde(x, w, h)
    return PosteriorSummary(
        target=target,
        interval_masses=[((float(a), float(b)), interval_mass(posterior, target, a, b)) for a, b in intervals],
        bin_edges=edges,
        bin_masses=masses,
        kde_x=gx,
        kde_density=gd,
        modes=_local_maxima(gx, gd),
        bandwidth=h,
        effective_sample_size=ess,
    )


@dataclass
class GridResult:
    axis: np.ndarray
    values: np.ndarray  # values[r, c] at (c_j, c_i) = (axis[r], axis[c])
    pair: tuple
    hessian_only: bool

    def argmax(self, atol: float = 1e-12):
        """Grid maximiser; among (numerically) tied cells, the one nearest the origin."""
        v = self.values
        tied = np.argwhere(v >= np.max(v) - atol)
        dist = self.axis[tied[:, 0]] ** 2 + self.axis[tied[:, 1]] ** 2
        r, c = tied[int(np.argmin(dist))]
        return float(self.axis[r]), float(self.axis[c])

    def rows(self):
        j, i = self.pair
        head = [f"c{j + 1}\\c{i + 1}", *(fmt(a) for a in self.axis)]
        return head, [[a, *row] for a, row in zip(self.axis, self.values)]

    def write_csv(self, path):
        head, rows = self.rows()
        return write_csv(path, rows, header=head)


def _axis(lo: float, hi: float, resolution: int) -> np.ndarray:
    a = np.linspace(lo, hi, resolution)
    if lo == -hi:
        a = 0.5 * (a - a[::-1])  # exact antisymmetry, so the grid reflects onto itself
    return a


def grid_log_posterior(S_hat, prior_cfg: PriorConfig = PriorConfig(), pair=(1, 2),
                       c_range=(-3.0, 3.0), resolution: int = 101,
                       hessian_only: bool = False) -> GridResult:
    """Log posterior (or just the Hessian term) over the two loadings of one confounder.

    Only ``pair`` (0-based ``(j, i)``, ``j < i``) carries a confounder; the
    grid runs over its loading on ``X_j`` (rows) and on ``X_i`` (columns).
    Cells where the density is zero hold ``-inf``.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    lo, hi = c_range
    if not lo < hi:
        raise ValueError("c_range must be increasing")
    target = ConfounderPosterior(S_hat, prior_cfg, [tuple(pair)], hessian_only=hessian_only)
    axis = _axis(float(lo), float(hi), int(resolution))
    values = np.empty((axis.size, axis.size))
    pt = np.empty(2)
    for r, cj in enumerate(axis):
        pt[0] = cj
        for c, ci in enumerate(axis):
            pt[1] = ci
            values[r, c] = target(pt)
    return GridResult(axis, values, tuple(pair), hessian_only)


def all_orderings(n: int) -> list:
    if n > MAX_ENUMERATED:
        raise ValueError(f"enumerating orderings is capped at n <= {MAX_ENUMERATED}; list them explicitly")
    return [tuple(p) for p in itertools.permutations(range(n))]


def _check_ordering(order, n):
    order = tuple(int(k) for k in order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"ordering {[k + 1 for k in order]} is not a permutation of 1..{n}")
    return order


def permute_problem(S_hat, ordering, free_pairs=None):
    """Covariance and free pairs re-expressed with variables in ``ordering``.

    ``ordering[k]`` is the original (0-based) index of the variable placed at
    position ``k``. Free pairs are given in original labels.
    """
    S = np.asarray(S_hat, float)
    order = np.asarray(ordering)
    S_perm = S[np.ix_(order, order)]
    if free_pairs is None:
        return S_perm, None
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    mapped = sorted(tuple(sorted((int(pos[a]), int(pos[b])))) for a, b in free_pairs)
    return S_perm, mapped


@dataclass
class OrderingComparison:
    orderings: list
    log_evidences: np.ndarray
    log_evidence_errors: np.ndarray
    posteriors: list = field(default_factory=list, repr=False)

    def ratio(self, a: int, b: int) -> float:
        """Evidence of ordering ``a`` over ordering ``b``."""
        return math.exp(self.log_evidences[a] - self.log_evidences[b])

    def log_ratio_error(self, a: int, b: int) -> float:
        return math.hypot(self.log_evidence_errors[a], self.log_evidence_errors[b])

    @property
    def evidence_ratios(self) -> np.ndarray:
        """``Z_first / Z_k`` for every ordering ``k``."""
        return np.exp(self.log_evidences[0] - self.log_evidences)

    def to_dict(self) -> dict:
        return {
            "orderings": [[k + 1 for k in o] for o in self.orderings],
            "log_evidence": self.log_evidences.tolist(),
            "log_evidence_error": self.log_evidence_errors.tolist(),
            "evidence_ratio_first_over": self.evidence_ratios.tolist(),
            "log_ratio_error": [self.log_ratio_error(0, k) for k in range(len(self.orderings))],
        }


def _map(fn, jobs, workers: int):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _ordering_job(job):
    S, pairs_, prior_cfg, sampler_cfg, ordering = job
    try:
        return sample_causal_posterior(S, prior_cfg, sampler_cfg, pairs_)
    except SamplerError as exc:
        return OrderingError(f"ordering {[k + 1 for k in ordering]}: {exc}", ordering)


def compare_orderings(S_hat, orderings=None, prior_cfg: PriorConfig = PriorConfig(),
                      sampler_cfg: SamplerConfig = SamplerConfig(), free_pairs=None,
                      workers: int = 1, keep_posteriors: bool = False) -> OrderingComparison:
    """Log-evidence of the confounder model under each variable ordering.

    Parameters
    ----------
    orderings : list of sequences, optional
        0-based permutations; ``ordering[k]`` is the variable at position
        ``k``. Defaults to every permutation (``n <= 5`` only).
    free_pairs : list of pairs, optional
        Confounded pairs in the original labelling; mapped through each
        permutation. ``None`` frees every pair.

    Raises
    ------
    OrderingError
        When a run fails; the failing ordering is attached.
    """
    S = validate_covariance(S_hat)
    n = S.shape[0]
    orderings = all_orderings(n) if orderings is None else [_check_ordering(o, n) for o in orderings]
    if not orderings:
        raise ValueError("need at least one ordering")
    jobs = []
    for o in orderings:
        S_perm, mapped = permute_problem(S, o, free_pairs)
        jobs.append((S_perm, mapped, prior_cfg, sampler_cfg, o))
    results = _map(_ordering_job, jobs, workers)
    for r in results:
        if isinstance(r, OrderingError):
            raise r
    return OrderingComparison(
        orderings=orderings,
        log_evidences=np.array([r.log_evidence for r in results]),
        log_evidence_errors=np.array([r.log_evidence_error for r in results]),
        posteriors=results if keep_posteriors else [],
    )


@dataclass
class SweepRow:
    v_spike: float
    masses: list = field(default_factory=list)
    modes: list = field(default_factory=list)  # highest first
    log_evidence: float = math.nan
    log_evidence_error: float = math.nan
    effective_sample_size: float = math.nan
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SweepTable:
    target: str
    intervals: list
    rows: list

    N_MODES = 3

    def header(self):
        return (["v_spike"]
                + [interval_key(lo, hi) for lo, hi in self.intervals]
                + [f"mode_{k + 1}" for k in range(self.N_MODES)]
                + ["log_evidence", "log_evidence_error", "effective_sample_size", "error"])

    def table(self):
        out = []
        for r in self.rows:
            modes = [fmt(m) for m in r.modes[:self.N_MODES]]
            modes += [""] * (self.N_MODES - len(modes))
            masses = r.masses if r.ok else [math.nan] * len(self.intervals)
            out.append([r.v_spike, *masses, *modes, r.log_evidence, r.log_evidence_error,
                        r.effective_sample_size, r.error or ""])
        return out

    def write_csv(self, path):
        return write_csv(path, self.table(), header=self.header())

    def to_dict(self) -> dict:
        return {"target": self.target, "intervals": [list(iv) for iv in self.intervals],
                "rows": [dict(zip(self.header(), row)) for row in self.table()]}


def _check_spikes(values, prior_cfg):
    values = [float(v) for v in values]
    for v in values:
        if not 0 < v <= prior_cfg.v_slab:
            raise ValueError(f"v_spike {v:g} must lie in (0, v_slab = {prior_cfg.v_slab:g}]")
    return values


def _sweep_job(job):
    S, v, prior_cfg, sampler_cfg, free_pairs, target, intervals = job
    row = SweepRow(v)
    try:
        post = sample_causal_posterior(S, prior_cfg.replace(v_spike=v), sampler_cfg, free_pairs)
        row.log_evidence, row.log_evidence_error = post.log_evidence, post.log_evidence_error
        summary = summarize(post, target, intervals=intervals)
        row.masses = [m for _, m in summary.interval_masses]
        row.modes = summary.highest_modes(SweepTable.N_MODES)
        row.effective_sample_size = summary.effective_sample_size
    except (SamplerError, ArithmeticError, ValueError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def spike_sweep(S_hat, v_spike_values=DEFAULT_SPIKES, prior_cfg: PriorConfig = PriorConfig(),
                sampler_cfg: SamplerConfig = SamplerConfig(), target: str = "b32",
                intervals=DEFAULT_INTERVALS, free_pairs=None, workers: int = 1) -> SweepTable:
    """One posterior run per spike variance, every run with the same seed.

    A failing row records its error and the sweep carries on.
    """
    S = validate_covariance(S_hat)
    values = _check_spikes(v_spike_values, prior_cfg)
    intervals = [tuple(map(float, iv)) for iv in intervals]
    jobs = [(S, v, prior_cfg, sampler_cfg, free_pairs, target, intervals) for v in values]
    return SweepTable(target, intervals, _map(_sweep_job, jobs, workers))


def _evidence_job(job):
    S, v, orderings, prior_cfg, sampler_cfg, free_pairs = job
    try:
        return compare_orderings(S, orderings, prior_cfg.replace(v_spike=v), sampler_cfg, free_pairs)
    except SamplerError as exc:
        return f"{type(exc).__name__}: {exc}"


def evidence_sweep(S_hat, v_spike_values=DEFAULT_SPIKES, orderings=None,
                   prior_cfg: PriorConfig = PriorConfig(), sampler_cfg: SamplerConfig = SamplerConfig(),
                   free_pairs=None, workers: int = 1) -> list:
    """``[(v_spike, OrderingComparison or error message), ...]``."""
    S = validate_covariance(S_hat)
    values = _check_spikes(v_spike_values, prior_cfg)
    jobs = [(S, v, orderings, prior_cfg, sampler_cfg, free_pairs) for v in values]
    return list(zip(values, _map(_evidence_job, jobs, workers)))
