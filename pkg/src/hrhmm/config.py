"""Run configuration: a TOML file with flat sections, overridable from the command line.

Precedence, lowest to highest: built-in defaults, the config file, CLI flags.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .data import IngestConfig
from .model import VARIANTS, Hyperparams
from .sampler.gibbs import SamplerConfig


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


DEFAULTS: dict[str, dict] = {
    "data": {
        "train": None, "holdout": None, "year_min": None, "year_max": None, "min_ab": 1,
        "age_min": 20, "age_max": 49, "delimiter": ",", "elite_filter": False,
        "external": [], "external_kind": "total",
    },
    "model": {
        "variant": "full", "tau2": 10000.0, "omega": 1.0, "interior_knots": [],
        "age_lo": None, "age_hi": None, "ref_age": None,
    },
    "sampler": {
        "n_chains": 3, "n_iter": 9000, "burn_in": 1000, "thin": 8, "seed": 20080101,
        "adapt_window": 50, "target_accept": [0.2, 0.5], "adapt_factor": 1.25,
        "init_scale": 1.0, "jitter": 0.1, "threads": 1,
    },
    "predict": {"seed": 1, "mass": 0.8, "strawman": True, "age_cutoff": 26},
    "report": {
        "n_curves": 100, "intercept_age": 23.0, "park": None, "positions": [],
        "onset_threshold": 0.5,
    },
    "output": {"dir": "hrhmm-out"},
}

# keys that never change any output, so they stay out of the fingerprint
UNFINGERPRINTED = {("sampler", "threads"), ("output", "dir")}


def load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None


def merge(base: dict, override: dict) -> dict:
    """Overlay ``override`` onto ``base``; unknown sections or keys are errors."""
    out = copy.deepcopy(base)
    for section, values in override.items():
        if section not in out:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in values.items():
            if key not in out[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            if value is not None:
                out[section][key] = value
    return out


class RunConfig:
    """Resolved settings with typed accessors for each stage."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.validate()

    @classmethod
    def from_sources(cls, path: str | Path | None = None, overrides: dict | None = None) -> "RunConfig":
        raw = copy.deepcopy(DEFAULTS)
        if path is not None:
            raw = merge(raw, load_toml(path))
        if overrides:
            raw = merge(raw, overrides)
        return cls(raw)

    def __getitem__(self, section: str) -> dict:
        return self.raw[section]

    def validate(self) -> None:
        if self.raw["model"]["variant"] not in VARIANTS:
            raise ConfigError(f"unknown variant {self.raw['model']['variant']!r}; expected one of {VARIANTS}")
        if self.raw["data"]["external_kind"] not in ("rate", "total"):
            raise ConfigError("data.external_kind must be 'rate' or 'total'")
        try:
            self.sampler()
            self.hyper()
            self.ingest()
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from None
        if self.raw["sampler"]["threads"] < 1:
            raise ConfigError("sampler.threads must be at least 1")
        if not 0 < self.raw["predict"]["mass"] < 1:
            raise ConfigError("predict.mass must lie in (0, 1)")

    def sampler(self) -> SamplerConfig:
        s = self.raw["sampler"]
        return SamplerConfig(
            n_chains=int(s["n_chains"]), n_iter=int(s["n_iter"]), burn_in=int(s["burn_in"]),
            thin=int(s["thin"]), seed=int(s["seed"]), adapt_window=int(s["adapt_window"]),
            target_accept=tuple(s["target_accept"]), adapt_factor=float(s["adapt_factor"]),
            init_scale=float(s["init_scale"]), jitter=float(s["jitter"]), n_jobs=int(s["threads"]),
        )

    def hyper(self) -> Hyperparams:
        m = self.raw["model"]
        return Hyperparams(
            tau2=float(m["tau2"]), omega=float(m["omega"]), age_lo=m["age_lo"], age_hi=m["age_hi"],
            interior_knots=tuple(m["interior_knots"]), ref_age=m["ref_age"], variant=m["variant"],
        )

    def ingest(self) -> IngestConfig:
        d = self.raw["data"]
        return IngestConfig(
            year_min=d["year_min"], year_max=d["year_max"], min_ab=int(d["min_ab"]),
            age_min=int(d["age_min"]), age_max=int(d["age_max"]), delimiter=d["delimiter"],
        )

    def fingerprinted(self) -> dict:
        return {s: {k: v for k, v in vals.items() if (s, k) not in UNFINGERPRINTED}
                for s, vals in self.raw.items()}

    def fingerprint(self) -> str:
        blob = json.dumps(self.fingerprinted(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def dumps(self) -> str:
        """TOML rendering of the resolved settings (unset values omitted)."""
        lines = []
        for section, values in self.raw.items():
            lines.append(f"[{section}]")
            for key, value in values.items():
                if value is not None:
                    lines.append(f"{key} = {_toml_value(value)}")
            lines.append("")
        return "\n".join(lines)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot render {v!r} as TOML")
