"""Named three-variable scenarios and custom parameter files.

All six built-in scenarios share ``b21 = b32 = 1`` and unit noise variances;
they differ in the direct effect ``b31`` and in the hidden confounder between
``X2`` and ``X3``. File indices are 1-based, as in the scenario labels; the
in-memory objects are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .io import ConfigError, read_document
from .sem_model import SemParameters, implied_covariance, pair_index, pairs

__all__ = ["Scenario", "SCENARIOS", "get_scenario", "scenario_from_document", "load_scenario"]


@dataclass(frozen=True)
class Scenario:
    name: str
    params: SemParameters
    ordering: tuple = ()  # variable names in causal order
    free_pairs: tuple = ()  # 0-based pairs whose confounder is sampled
    description: str = ""

    def __post_init__(self):
        if not self.ordering:
            object.__setattr__(self, "ordering", tuple(f"X{k + 1}" for k in range(self.params.n)))
        if not self.free_pairs:
            object.__setattr__(self, "free_pairs", pairs(self.params.n))

    @property
    def covariance(self) -> np.ndarray:
        return implied_covariance(self.params)

    def to_document(self) -> dict:
        """Inverse of :func:`scenario_from_document` (1-based indices)."""
        p = self.params
        n = p.n
        B = [[i + 1, j + 1, float(p.B[i, j])] for i in range(n) for j in range(i) if p.B[i, j] != 0]
        C = []
        for k, (j, i) in enumerate(pairs(n)):
            for row in (j, i):
                if p.C[row, k] != 0:
                    C.append([j + 1, i + 1, row + 1, float(p.C[row, k])])
        return {
            "name": self.name,
            "n": n,
            "ordering": list(self.ordering),
            "B": B,
            "C": C,
            "V": p.V.tolist(),
            "confounded_pairs": [[j + 1, i + 1] for j, i in self.free_pairs],
        }


def _triple(name, b31, c2, c3, description):
    params = SemParameters.from_entries(
        3,
        b={(1, 0): 1.0, (2, 1): 1.0, (2, 0): b31},
        c={(1, 2, 1): c2, (1, 2, 2): c3},
    )
    return Scenario(name, params, free_pairs=((1, 2),), description=description)


SCENARIOS = {
    s.name: s
    for s in (
        _triple("a", 0.0, 0.0, 0.0, "instrumental variable setting without confounding"),
        _triple("b", 0.0, 1.0, 1.0, "instrumental variable setting with confounding"),
        _triple("c", 0.05, 0.0, 0.0, "weak direct effect, no confounding"),
        _triple("d", 0.05, 1.0, 1.0, "weak direct effect with confounding"),
        _triple("e", 1.0, 1.0, 1.0, "direct effect and confounding"),
        _triple("f", 1.0, 1.0, 2.0, "faithfulness violation: X1 independent of X3 given X2"),
    )
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None


def _index(value, n, what) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 1 <= value <= n:
        raise ConfigError(f"{what}: index {value!r} is not in 1..{n}")
    return value - 1


def scenario_from_document(doc: dict, name: str = "custom") -> Scenario:
    """Build a :class:`Scenario` from a parsed parameter document.

    Fields: ``n``; ``ordering`` (names, optional); ``B`` as ``[i, j, value]``;
    ``C`` as ``[pair_j, pair_i, row, value]``; ``V`` (optional, default ones);
    ``confounded_pairs`` as ``[j, i]`` (optional, default: every pair).
    """
    try:
        n = doc["n"]
    except KeyError:
        raise ConfigError("parameter document needs a field 'n'") from None
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ConfigError(f"n must be a positive integer, got {n!r}")
    ordering = tuple(doc.get("ordering") or (f"X{k + 1}" for k in range(n)))
    if len(ordering) != n or len(set(ordering)) != n:
        raise ConfigError("ordering must list n distinct variable names")

    b = {}
    for entry in doc.get("B", []):
        if len(entry) != 3:
            raise ConfigError(f"B entry {entry!r} must be [i, j, value]")
        i, j = _index(entry[0], n, "B"), _index(entry[1], n, "B")
        if j >= i:
            raise ConfigError(f"B entry {entry!r}: need j < i (lower-triangular)")
        b[(i, j)] = float(entry[2])
    c = {}
    for entry in doc.get("C", []):
        if len(entry) != 4:
            raise ConfigError(f"C entry {entry!r} must be [pair_j, pair_i, row, value]")
        j, i, row = (_index(v, n, "C") for v in entry[:3])
        if j >= i or row not in (j, i):
            raise ConfigError(f"C entry {entry!r}: need pair_j < pair_i and row in the pair")
        c[(j, i, row)] = float(entry[3])
    V = doc.get("V")
    if V is not None:
        V = np.asarray(V, dtype=float)
        if V.shape != (n,) or np.any(~(V > 0)):
            raise ConfigError("V must list n strictly positive variances")
    free = doc.get("confounded_pairs")
    if free is None:
        free_pairs = pairs(n)
    else:
        free_pairs = []
        for pr in free:
            j, i = _index(pr[0], n, "confounded_pairs"), _index(pr[1], n, "confounded_pairs")
            if j >= i:
                raise ConfigError(f"confounded pair {pr!r}: need j < i")
            pair_index(n, j, i)
            free_pairs.append((j, i))
        free_pairs = tuple(sorted(set(free_pairs)))
    try:
        params = SemParameters.from_entries(n, b=b, c=c, v=V)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Scenario(doc.get("name", name), params, ordering, free_pairs, doc.get("description", ""))


def load_scenario(spec: str) -> Scenario:
    """A built-in name (``a`` .. ``f``) or a path to a JSON/TOML parameter file."""
    if spec.lower() in SCENARIOS:
        return SCENARIOS[spec.lower()]
    if not (spec.endswith(".json") or spec.endswith(".toml")):
        raise ConfigError(f"unknown scenario {spec!r}; choose from {', '.join(SCENARIOS)} or give a .json/.toml file")
    return scenario_from_document(read_document(spec), name=spec)
