"""Flat key = value experiment configuration.

Dotted keys form sections (``space.m = 32``); values are parsed as int,
float, bool, or comma-separated lists thereof, falling back to bare
strings.  Unknown keys are rejected so typos fail fast, with exit code
2 at the CLI boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

EXPERIMENT_KINDS = (
    "harmonic", "evi-suite", "ipp", "perturbation", "maximum-principles")

# subcommand spelling differs from the config kind for this one
KIND_BY_COMMAND = {
    "harmonic": "harmonic",
    "evi-suite": "evi-suite",
    "ipp": "ipp",
    "perturbation": "perturbation",
    "max-principles": "maximum-principles",
}


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text, 0)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_scalar(p.strip()) for p in text.split(",") if p.strip()]
    return _parse_scalar(text)


def parse_config_text(text: str) -> dict:
    """Flat dict of dotted keys to parsed values."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, "
                              f"got {raw.strip()!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_value(val)
    return out


_COMMON_KEYS = {"experiment", "seed", "out", "domain.dim", "domain.n",
                "space.id"}
_SPACE_PARAM_KEYS = {
    "space.dim", "space.m", "space.tau", "space.gamma_min", "space.offset",
    "space.center", "space.coeffs", "space.z0",
}
_KIND_KEYS = {
    "harmonic": {"boundary.recipe", "test_function.id", "lp.q",
                 "solver.max_sweeps", "solver.fixed_point_tol",
                 "tolerances.subharmonic", "tolerances.max_principle"},
    "evi-suite": {"evi.samples", "evi.t_max"},
    "ipp": {"ipp.pair", "ipp.eps"},
    "perturbation": {"boundary.recipe", "test_function.id",
                     "perturbation.delta", "perturbation.lambda",
                     "perturbation.eps",
                     "solver.max_sweeps", "solver.fixed_point_tol"},
    "maximum-principles": {"boundary.recipe", "lp.q",
                           "solver.max_sweeps", "solver.fixed_point_tol",
                           "tolerances.max_principle"},
}

_DEFAULTS = {
    "harmonic": {
        "domain.dim": 2, "domain.n": 17, "space.id": "euclid-quadratic",
        "boundary.recipe": "smooth", "test_function.id": "poly-bump",
        "lp.q": [1.5, 2.0, 3.0], "seed": 0, "out": "runs/harmonic",
    },
    "evi-suite": {
        "domain.dim": 2, "domain.n": 0, "space.id": "euclid-quadratic",
        "evi.samples": 1000, "evi.t_max": 2.0, "seed": 0,
        "out": "runs/evi-suite",
    },
    "ipp": {
        "domain.dim": 2, "domain.n": 161, "space.id": "euclid-quadratic",
        "ipp.pair": "linear-x1", "ipp.eps": [0.2, 0.1, 0.05],
        "seed": 0, "out": "runs/ipp",
    },
    "perturbation": {
        "domain.dim": 2, "domain.n": 17, "space.id": "quantile-entropy",
        "boundary.recipe": "quantile-plates", "test_function.id":
        "poly-bump", "perturbation.delta": [0.01, 0.1],
        "perturbation.lambda": 1.0, "seed": 0, "out": "runs/perturbation",
    },
    "maximum-principles": {
        "domain.dim": 2, "domain.n": 33, "space.id": "quantile-entropy",
        "boundary.recipe": "quantile-plates", "lp.q": [1.5, 2.0, 3.0],
        "seed": 0, "out": "runs/max-principles",
    },
}


@dataclass
class ExperimentConfig:
    kind: str
    dim: int
    n: int
    space_id: str
    space_params: dict = dc_field(default_factory=dict)
    seed: int = 0
    out: str = "runs/out"
    options: dict = dc_field(default_factory=dict)

    def option(self, key: str, default=None):
        return self.options.get(key, default)


def _as_list(v) -> list:
    return list(v) if isinstance(v, list) else [v]


def build_config(kind: str, flat: dict) -> ExperimentConfig:
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; "
                          f"expected one of {EXPERIMENT_KINDS}")
    allowed = _COMMON_KEYS | _SPACE_PARAM_KEYS | _KIND_KEYS[kind]
    for key in flat:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} for {kind}")
    if "experiment" in flat and flat["experiment"] != kind:
        raise ConfigError(
            f"config is for experiment {flat['experiment']!r}, "
            f"but {kind!r} was requested")
    merged = dict(_DEFAULTS[kind])
    merged.update({k: v for k, v in flat.items() if k != "experiment"})

    dim = merged["domain.dim"]
    n = merged["domain.n"]
    if dim not in (1, 2):
        raise ConfigError(f"domain.dim must be 1 or 2, got {dim!r}")
    if not isinstance(n, int) or (n < 3 and not (kind == "evi-suite")):
        raise ConfigError(f"domain.n must be an integer >= 3, got {n!r}")
    seed = merged["seed"]
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")

    space_params = {k.split(".", 1)[1]: v for k, v in merged.items()
                    if k in _SPACE_PARAM_KEYS}
    options = {k: v for k, v in merged.items()
               if k in _KIND_KEYS[kind]}
    for lk in ("lp.q", "ipp.eps", "perturbation.delta"):
        if lk in options:
            options[lk] = [float(v) for v in _as_list(options[lk])]
    return ExperimentConfig(
        kind=kind, dim=dim, n=n, space_id=merged["space.id"],
        space_params=space_params, seed=seed, out=merged["out"],
        options=options)


def load_config(path: str | None, kind: str,
                overrides: dict | None = None) -> ExperimentConfig:
    flat: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                flat = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for key, val in (overrides or {}).items():
        if val is not None:
            flat[key] = val
    return build_config(kind, flat)
