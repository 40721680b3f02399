"""Command-line entry point.

Subcommands: scenario, posterior, baseline, evidence, grid, sweep. Values can
come from a JSON/TOML config file (``--config``); flags given on the command
line win. Exit status is 0 on success, 1 on a computational failure and 2 on
a configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (DEFAULT_INTERVALS, DEFAULT_SPIKES, InsufficientSampleError, all_orderings,
                       compare_orderings, evidence_sweep, grid_log_posterior, spike_sweep, summarize)
from .estimators import (WeakInstrumentError, fisher_z_test, iv_estimate, lcd_estimate,
                         min_rejecting_sample_size, partial_correlation)
from .io import ConfigError, fmt, read_covariance, read_data, read_document, write_covariance, write_csv, write_json
from .nested import SamplerConfig, SamplerError, sample_causal_posterior
from .posterior import PriorConfig
from .recovery import NumericalDegeneracyError
from .scenarios import load_scenario
from .sem_model import DegenerateDataError, implied_covariance, pairs, sample_covariance

log = logging.getLogger("slabcausal")

EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG = 0, 1, 2

# built-in defaults for every setting a config file or flag may provide
DEFAULTS = {
    "scenario": None,
    "cov": None,
    "data": None,
    "out": "out",
    "seed": 0,
    "n_live": 400,
    "v_spike": PriorConfig.v_spike,
    "target": "b32",
    "interval": [list(iv) for iv in DEFAULT_INTERVALS],
    "orderings": None,
    "v_spikes": None,
    "confounded": None,
    "hessian_only": False,
    "pair": None,
    "range": [-3.0, 3.0],
    "resolution": 101,
    "triple": [1, 2, 3],
    "n_samples": None,
    "alpha": 0.05,
    "workers": None,
    "manifest": False,
    "prior": {},
    "sampler": {},
}


# -- argument parsing helpers -------------------------------------------------

def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _interval(text: str) -> list:
    vals = _floats(text)
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise argparse.ArgumentTypeError(f"interval must be LO,HI with LO < HI, got {text!r}")
    return vals


def _int_lists(text: str) -> list:
    """``"1,2,3;1,3,2"`` -> ``[[1, 2, 3], [1, 3, 2]]``."""
    try:
        return [[int(t) for t in part.split(",")] for part in text.split(";") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lists like 1,2,3;1,3,2, got {text!r}") from None


def _int_pair(text: str) -> list:
    vals = _int_lists(text)
    if len(vals) != 1 or len(vals[0]) != 2:
        raise argparse.ArgumentTypeError(f"expected J,I, got {text!r}")
    return vals[0]


def _common(parser: argparse.ArgumentParser, covariance=True, sampler=True) -> None:
    S = argparse.SUPPRESS  # unset flags stay absent so config values can fill them
    parser.add_argument("--config", default=S, help="JSON or TOML config file")
    parser.add_argument("--out", default=S, metavar="DIR", help="output directory (default: out)")
    parser.add_argument("--manifest", action="store_true", default=S,
                        help="write the fully resolved configuration to DIR/manifest.json")
    if covariance:
        parser.add_argument("--scenario", default=S, metavar="NAME|PATH",
                            help="built-in scenario a-f or a parameter file")
        parser.add_argument("--cov", default=S, metavar="PATH", help="covariance CSV")
        parser.add_argument("--data", default=S, metavar="PATH", help="raw data CSV, one row per sample")
        parser.add_argument("--confounded", type=_int_lists, default=S, metavar="J,I;...",
                            help="confounded pairs (1-based); default from scenario, else all")
    if sampler:
        parser.add_argument("--v-spike", type=float, default=S, dest="v_spike")
        parser.add_argument("--n-live", type=int, default=S, dest="n_live")
        parser.add_argument("--seed", type=int, default=S)
        parser.add_argument("--workers", type=int, default=S,
                            help="parallel runs for sweeps and orderings (default: CPU count)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slabcausal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("scenario", help="write the population covariance of a scenario")
    sp.add_argument("name", nargs="?", default=argparse.SUPPRESS, help="a-f or a parameter file")
    _common(sp, sampler=False)

    sp = sub.add_parser("posterior", help="sample the posterior and summarise one parameter")
    _common(sp)
    sp.add_argument("--target", default=argparse.SUPPRESS, help="parameter such as b32, v2 or c1")
    sp.add_argument("--interval", type=_interval, action="append", default=argparse.SUPPRESS,
                    metavar="LO,HI", help="repeatable; default 0.9,1.1 and -0.1,0.1")

    sp = sub.add_parser("baseline", help="IV, LCD and partial-correlation baselines")
    _common(sp, sampler=False)
    sp.add_argument("--triple", type=lambda t: _int_lists(t)[0], default=argparse.SUPPRESS,
                    metavar="IV,CAUSE,EFFECT", help="1-based indices (default 1,2,3)")
    sp.add_argument("--n-samples", type=int, default=argparse.SUPPRESS, dest="n_samples",
                    help="sample size for the Fisher-z statistic")
    sp.add_argument("--alpha", type=float, default=argparse.SUPPRESS)

    sp = sub.add_parser("evidence", help="compare variable orderings by evidence")
    _common(sp)
    sp.add_argument("--orderings", type=_int_lists, default=argparse.SUPPRESS, metavar="1,2,3;1,3,2")
    sp.add_argument("--v-spikes", type=_floats, default=argparse.SUPPRESS, dest="v_spikes",
                    help="repeat the comparison for each spike variance")

    sp = sub.add_parser("grid", help="log posterior on a 2D grid of one pair's loadings")
    _common(sp)
    sp.add_argument("--pair", type=_int_pair, default=argparse.SUPPRESS, metavar="J,I")
    sp.add_argument("--range", type=_interval, default=argparse.SUPPRESS, metavar="LO,HI")
    sp.add_argument("--resolution", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--hessian-only", action="store_true", default=argparse.SUPPRESS, dest="hessian_only")

    sp = sub.add_parser("sweep", help="posterior summaries across spike variances")
    _common(sp)
    sp.add_argument("--target", default=argparse.SUPPRESS)
    sp.add_argument("--interval", type=_interval, action="append", default=argparse.SUPPRESS, metavar="LO,HI")
    sp.add_argument("--v-spikes", type=_floats, default=argparse.SUPPRESS, dest="v_spikes")
    return p


# -- configuration ------------------------------------------------------------

def resolve(ns: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and command-line flags."""
    cfg = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULTS.items()}
    flags = vars(ns)
    if "config" in flags:
        doc = read_document(flags["config"])
        for key, val in doc.items():
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise ConfigError(f"{flags['config']}: unknown setting {key!r}")
            cfg[key] = val
        cfg["config"] = str(flags["config"])
    for key, val in flags.items():
        if key not in ("config", "verbose", "command", "name"):
            cfg[key] = val
    if flags.get("name") is not None:
        cfg["scenario"] = flags["name"]
    cfg["command"] = ns.command
    if cfg["workers"] is None:
        cfg["workers"] = os.cpu_count() or 1
    return cfg


def prior_config(cfg: dict) -> PriorConfig:
    extra = dict(cfg.get("prior") or {})
    extra["v_spike"] = float(cfg["v_spike"])
    try:
        return PriorConfig().replace(**extra)
    except TypeError as exc:
        raise ConfigError(f"prior: {exc}") from exc


def sampler_config(cfg: dict) -> SamplerConfig:
    extra = dict(cfg.get("sampler") or {})
    extra.update(n_live=int(cfg["n_live"]), seed=int(cfg["seed"]))
    try:
        return SamplerConfig().replace(**extra)
    except TypeError as exc:
        raise ConfigError(f"sampler: {exc}") from exc


def _to_pairs(raw, n) -> list:
    out = []
    for pr in raw:
        if len(pr) != 2 or not (1 <= pr[0] < pr[1] <= n):
            raise ConfigError(f"confounded pair {pr} must be J,I with 1 <= J < I <= {n}")
        out.append((pr[0] - 1, pr[1] - 1))
    return sorted(set(out))


def covariance_source(cfg: dict):
    """``(S_hat, free_pairs, label)`` from exactly one of scenario, cov, data."""
    given = [k for k in ("scenario", "cov", "data") if cfg.get(k)]
    if len(given) != 1:
        raise ConfigError("give exactly one of --scenario, --cov, --data"
                          + (f" (got {', '.join(given)})" if given else ""))
    kind = given[0]
    free = None
    if kind == "scenario":
        sc = load_scenario(str(cfg["scenario"]))
        S, free = sc.covariance, list(sc.free_pairs)
    elif kind == "cov":
        S = read_covariance(cfg["cov"])
    else:
        try:
            S = sample_covariance(read_data(cfg["data"]))
        except DegenerateDataError as exc:
            raise ConfigError(f"{cfg['data']}: {exc}") from exc
    n = S.shape[0]
    if cfg.get("confounded"):
        free = _to_pairs(cfg["confounded"], n)
    if free is None:
        free = list(pairs(n))
    return S, free, f"{kind}:{cfg[kind]}"


def _out(cfg: dict) -> Path:
    return Path(cfg["out"])


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def _manifest(cfg: dict, extra: dict | None = None) -> None:
    if not cfg.get("manifest"):
        return
    doc = {k: v for k, v in cfg.items() if k not in ("prior", "sampler")}
    if cfg["command"] != "scenario" and cfg["command"] != "baseline":
        doc["prior"] = prior_config(cfg).to_dict()
        sc = sampler_config(cfg)
        doc["sampler"] = {f.name: getattr(sc, f.name) for f in fields(sc)}
    doc["version"] = __version__
    doc.update(extra or {})
    write_json(_out(cfg) / "manifest.json", doc)


# -- commands -----------------------------------------------------------------

def cmd_scenario(cfg: dict) -> int:
    if not cfg.get("scenario"):
        raise ConfigError("scenario: give a name (a-f) or a parameter file")
    sc = load_scenario(str(cfg["scenario"]))
    S = implied_covariance(sc.params)
    out = _out(cfg)
    write_covariance(out / "covariance.csv", S)
    doc = {**sc.to_document(), "covariance": S.tolist()}
    write_json(out / "parameters.json", doc)
    _manifest(cfg)
    _emit(doc)
    return EXIT_OK


def cmd_posterior(cfg: dict) -> int:
    S, free, label = covariance_source(cfg)
    post = sample_causal_posterior(S, prior_config(cfg), sampler_config(cfg), free)
    intervals = [tuple(iv) for iv in cfg["interval"]]
    summary = summarize(post, cfg["target"], intervals=intervals)
    out = _out(cfg)
    write_json(out / "posterior.json", post.to_document())
    summary.write_histogram(out / "histogram.csv")
    summary.write_kde(out / "kde.csv")
    doc = {"source": label, **summary.to_dict(), "log_evidence": post.log_evidence,
           "log_evidence_error": post.log_evidence_error, "n_draws": len(post)}
    write_json(out / "summary.json", doc)
    _manifest(cfg)
    _emit(doc)
    return EXIT_OK


def cmd_baseline(cfg: dict) -> int:
    S, _, label = covariance_source(cfg)
    n = S.shape[0]
    triple = [int(k) for k in cfg["triple"]]
    if len(triple) != 3 or len(set(triple)) != 3 or not all(1 <= k <= n for k in triple):
        raise ConfigError(f"triple must be three distinct indices in 1..{n}")
    a, c, e = (k - 1 for k in triple)
    record = {"source": label, "triple": triple, "warnings": []}
    try:
        record["iv"] = iv_estimate(S, a, c, e)
    except WeakInstrumentError as exc:
        record["iv"] = None
        record["warnings"].append({"kind": "weak_instrument", "message": str(exc)})
    record["lcd"] = lcd_estimate(S, c, e)
    rho = partial_correlation(S, a, e, c)
    record["pcor"] = rho
    N = cfg.get("n_samples")
    if N is None and cfg.get("data"):
        N = read_data(cfg["data"]).shape[0]
    alpha = float(cfg["alpha"])
    record["fisher_n_min"] = min_rejecting_sample_size(rho, 1, alpha)
    record["alpha"] = alpha
    if N:
        test = fisher_z_test(rho, int(N), 1, alpha)
        record["n_samples"] = int(N)
        record["fisher_z"] = test.z_statistic
        record["fisher_reject"] = test.reject
    for w in record["warnings"]:
        log.warning("%s", w["message"])
    write_json(_out(cfg) / "baseline.json", record)
    _manifest(cfg)
    _emit(record)
    return EXIT_OK


def _orderings(cfg: dict, n: int) -> list:
    raw = cfg.get("orderings")
    if raw is None:
        if n == 3:
            return [(0, 1, 2), (0, 2, 1)]
        return all_orderings(n)
    return [tuple(k - 1 for k in o) for o in raw]


def cmd_evidence(cfg: dict) -> int:
    S, free, label = covariance_source(cfg)
    orderings = _orderings(cfg, S.shape[0])
    prior, sampler = prior_config(cfg), sampler_config(cfg)
    out = _out(cfg)
    if cfg.get("v_spikes"):
        rows, docs = [], []
        for v, res in evidence_sweep(S, cfg["v_spikes"], orderings, prior, sampler, free, cfg["workers"]):
            if isinstance(res, str):
                rows.append([v, *([math.nan] * (2 * len(orderings))), math.nan, res])
                docs.append({"v_spike": v, "error": res})
                continue
            rows.append([v, *res.log_evidences, *res.log_evidence_errors,
                         res.ratio(0, len(orderings) - 1), ""])
            docs.append({"v_spike": v, **res.to_dict()})
        tags = ["".join(str(k + 1) for k in o) for o in orderings]
        head = (["v_spike"] + [f"log_evidence_{t}" for t in tags] + [f"log_evidence_error_{t}" for t in tags]
                + [f"ratio_{tags[0]}_over_{tags[-1]}", "error"])
        write_csv(out / "evidence_sweep.csv", rows, header=head)
        doc = {"source": label, "sweep": docs}
    else:
        comp = compare_orderings(S, orderings, prior, sampler, free, cfg["workers"])
        doc = {"source": label, "v_spike": prior.v_spike, **comp.to_dict()}
    write_json(out / "evidence.json", doc)
    _manifest(cfg)
    _emit(doc)
    return EXIT_OK


def cmd_grid(cfg: dict) -> int:
    S, free, label = covariance_source(cfg)
    n = S.shape[0]
    if cfg.get("pair"):
        pair = _to_pairs([cfg["pair"]], n)[0]
    elif len(free) == 1:
        pair = free[0]
    else:
        pair = (n - 2, n - 1)
    lo, hi = cfg["range"]
    grid = grid_log_posterior(S, prior_config(cfg), pair, (lo, hi), int(cfg["resolution"]),
                              bool(cfg["hessian_only"]))
    out = _out(cfg)
    name = "grid_hessian.csv" if grid.hessian_only else "grid.csv"
    grid.write_csv(out / name)
    _manifest(cfg)
    finite = np.isfinite(grid.values)
    _emit({"source": label, "file": str(out / name), "pair": [pair[0] + 1, pair[1] + 1],
           "hessian_only": grid.hessian_only, "argmax": list(grid.argmax()),
           "max": float(grid.values[finite].max()) if finite.any() else None,
           "n_neg_inf": int((~finite).sum())})
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    S, free, label = covariance_source(cfg)
    spikes = cfg.get("v_spikes") or list(DEFAULT_SPIKES)
    table = spike_sweep(S, spikes, prior_config(cfg), sampler_config(cfg), cfg["target"],
                        [tuple(iv) for iv in cfg["interval"]], free, cfg["workers"])
    out = _out(cfg)
    table.write_csv(out / "sweep.csv")
    doc = {"source": label, **table.to_dict()}
    write_json(out / "sweep.json", doc)
    _manifest(cfg)
    _emit(doc)
    failed = [r for r in table.rows if not r.ok]
    for r in failed:
        log.warning("v_spike=%s failed: %s", fmt(r.v_spike), r.error)
    return EXIT_COMPUTE if len(failed) == len(table.rows) else EXIT_OK


COMMANDS = {
    "scenario": cmd_scenario,
    "posterior": cmd_posterior,
    "baseline": cmd_baseline,
    "evidence": cmd_evidence,
    "grid": cmd_grid,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(ns)
        return COMMANDS[ns.command](cfg)
    except (InsufficientSampleError, SamplerError, NumericalDegeneracyError, ArithmeticError) as exc:
        log.error("computation failed: %s", exc)
        return EXIT_COMPUTE
    except (ConfigError, DegenerateDataError, ValueError, KeyError, TypeError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
