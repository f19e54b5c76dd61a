"""Flat ``key = value`` configuration files and problem construction from them.

Blank lines and ``#`` comments are ignored; ``key: value`` is accepted too.
Lists are comma separated. Unknown keys, or keys that do not apply to the
selected problem, are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .problems import InverseSetup, conductivity_setup, potential_setup, scalar_setup

PROBLEMS = ("scalar", "potential", "conductivity")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _floats(text: str):
    try:
        return [float(s) for s in text.replace(";", ",").split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


@dataclass
class ProblemConfig:
    problem: str = "scalar"
    # scalar
    eps_scale: float = 0.1
    g_exact: float = 0.016
    # PDE
    n: int = 99
    f: str = "2"
    profile: str = ""
    profile_value: float = 1.0
    nodes: str = ""
    c0: float = 0.1
    c1: float = 10.0
    # box for the scalar problem
    lower: float = -np.inf
    upper: float = np.inf
    # diagnostics
    eta: float = 1e-3
    c_r: float = 0.0
    eps_coercive: float = 1.0
    c_s: float = 0.5
    eps_prime: float = 0.5
    samples: int = 200
    radius: float = 1.0
    ridge: float = 0.0
    exclude_width: float = 1.0
    exclude_boundary: bool = True

    _SCALAR_ONLY = ("eps_scale", "g_exact", "lower", "upper")
    _PDE_ONLY = ("n", "f", "profile", "profile_value", "nodes")
    _CONDUCTIVITY_ONLY = ("c0", "c1")

    def check_keys(self, given):
        bad = []
        if self.problem != "scalar":
            bad += [k for k in given if k in self._SCALAR_ONLY]
        else:
            bad += [k for k in given if k in self._PDE_ONLY + self._CONDUCTIVITY_ONLY]
        if self.problem == "potential":
            bad += [k for k in given if k in self._CONDUCTIVITY_ONLY]
        if bad:
            raise ConfigError(f"keys {sorted(bad)} do not apply to problem {self.problem!r}")

    def source(self):
        vals = _floats(self.f)
        if len(vals) == 1:
            return vals[0]
        if len(vals) != self.n:
            raise ConfigError(f"f needs 1 or {self.n} values, got {len(vals)}")
        return np.array(vals)

    def build(self) -> InverseSetup:
        """Forward problem, constraint set and exact solution described by the config."""
        try:
            if self.problem == "scalar":
                return scalar_setup(self.eps_scale, self.g_exact, self.lower, self.upper)
            nodes = np.array(_floats(self.nodes)) if self.nodes else None
            if self.problem == "potential":
                return potential_setup(self.n, self.profile or "sine-squared", self.profile_value, nodes, self.source())
            if self.problem == "conductivity":
                return conductivity_setup(self.n, self.profile or "one-plus-half-sine", self.profile_value, nodes,
                                          self.source(), self.c0, self.c1)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"unknown problem {self.problem!r}; choose from {PROBLEMS}")


_FIELDS = {f.name: f for f in dataclasses.fields(ProblemConfig)}


def _convert(key: str, text: str):
    kind = _FIELDS[key].type
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return text


def parse_config(text: str) -> dict:
    """Parse flat key/value text into a dict of typed values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split(sep, 1))
        key = key.replace("-", "_")
        if key not in _FIELDS or key.startswith("_"):
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _convert(key, value)
    return out


def load_config(path=None, problem: str | None = None) -> ProblemConfig:
    """Read a config file (optional) and apply the problem name override."""
    given = {}
    if path is not None:
        try:
            with open(path) as fh:
                given = parse_config(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if problem is not None:
        if "problem" in given and given["problem"] != problem:
            raise ConfigError(f"config names problem {given['problem']!r} but {problem!r} was requested")
        given["problem"] = problem
    cfg = ProblemConfig(**given)
    if cfg.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {cfg.problem!r}; choose from {PROBLEMS}")
    cfg.check_keys(set(given) - {"problem"})
    return cfg
