"""Experiment configuration: parsing, validation, hashing.

Configs are flat TOML or JSON documents.  Every run must carry an explicit
seed (there is no wall-clock default), and unknown keys are hard errors with
a nearest-match suggestion, so a config that parses is a config that ran.
"""

from __future__ import annotations

import difflib
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .covariance import CovarianceSpec, spec_from_profile

KINDS = ("thermo", "sample", "kl", "kl-sweep", "hardness", "steep-rate", "brw")

_DEFAULTS = {
    "realizations": 200,
    "trials": 2000,
    "workers": 0,       # 0 = auto
    "format": "csv",
    "epsilon": 1.0,
    "max_queries": 50,
}

_KNOWN_KEYS = {
    "kind", "spec", "beta", "N", "M", "epsilon", "K", "z", "trials",
    "realizations", "seed", "out", "workers", "format", "max_queries",
    "breakpoints", "slopes",
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    spec_name: str
    seed: int
    beta: tuple[float, ...] = ()
    N: tuple[int, ...] = ()
    M: tuple[int, ...] = ()
    epsilon: float = 1.0
    K: int | None = None
    z: float | None = None
    trials: int = 2000
    realizations: int = 200
    workers: int = 0
    format: str = "csv"
    out: str | None = None
    max_queries: int = 50
    breakpoints: tuple[float, ...] = ()
    slopes: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; "
                             f"expected one of {', '.join(KINDS)}")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if self.workers < 0:
            raise ValueError("workers must be >= 0")

    def covariance_spec(self) -> CovarianceSpec:
        if self.breakpoints:
            return CovarianceSpec(self.breakpoints, self.slopes)
        return spec_from_profile(self.spec_name)

    def as_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of the scientific content; execution details (worker count,
        output file name) do not change what is computed."""
        payload = {k: v for k, v in self.as_dict().items()
                   if k not in ("workers", "out")}
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _as_tuple(value, cast):
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(cast(x) for x in value)
    return (cast(value),)


def config_from_mapping(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        key = sorted(unknown)[0]
        hint = difflib.get_close_matches(key, _KNOWN_KEYS, n=1)
        suffix = f"; did you mean {hint[0]!r}?" if hint else ""
        raise ValueError(f"unknown config key {key!r}{suffix}")
    if "kind" not in raw:
        raise ValueError("config is missing required field 'kind'")
    if "seed" not in raw:
        raise ValueError("config is missing required field 'seed' "
                         "(runs are never seeded from the clock)")
    merged = dict(_DEFAULTS)
    merged.update(raw)
    return ExperimentConfig(
        kind=str(merged["kind"]),
        spec_name=str(merged.get("spec", "identity")),
        seed=int(merged["seed"]),
        beta=_as_tuple(merged.get("beta"), float),
        N=_as_tuple(merged.get("N"), int),
        M=_as_tuple(merged.get("M"), int),
        epsilon=float(merged["epsilon"]),
        K=int(merged["K"]) if merged.get("K") is not None else None,
        z=float(merged["z"]) if merged.get("z") is not None else None,
        trials=int(merged["trials"]),
        realizations=int(merged["realizations"]),
        workers=int(merged["workers"]),
        format=str(merged["format"]),
        out=str(merged["out"]) if merged.get("out") is not None else None,
        max_queries=int(merged["max_queries"]),
        breakpoints=_as_tuple(merged.get("breakpoints"), float),
        slopes=_as_tuple(merged.get("slopes"), float),
    )


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_bytes()
    if path.suffix == ".json":
        raw = json.loads(text)
    else:
        raw = tomllib.loads(text.decode())
    if not isinstance(raw, dict):
        raise ValueError("config document must be a table of key/value pairs")
    return config_from_mapping(raw)
