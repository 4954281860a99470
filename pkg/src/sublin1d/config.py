"""Problem files (JSON) and a small catalogue of named problems."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Coefficient, Problem, ProblemError, coefficient_from_pieces


class ConfigError(ValueError):
    """Malformed problem file; the message names the line or field."""


DEFAULT_TOLERANCES = {"eigen": 1e-8, "solver": 1e-12, "p_bracket": 0.02}


@dataclass
class ProblemConfig:
    problem: Problem
    raw: dict
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    grid: int = 2000
    name: str = "problem"


def _manufactured_weight(alpha=0.0, beta=1.0):
    # L u* / sqrt(u*) for u* = sin(pi x)(1 + cos(pi x)/2), simplified to stay finite at the ends
    pi = math.pi

    def m(x):
        x = np.asarray(x, dtype=float)
        s = np.sqrt(np.abs(np.sin(pi * x)))
        return pi**2 * (1 + 2 * np.cos(pi * x)) * s / np.sqrt(1 + 0.5 * np.cos(pi * x))

    return Coefficient.from_callable(m, alpha, beta, label="manufactured")


def manufactured_solution(x):
    x = np.asarray(x, dtype=float)
    return np.sin(np.pi * x) * (1 + 0.5 * np.cos(np.pi * x))


NAMED_WEIGHTS = {"manufactured": _manufactured_weight}


def step_config(eta, p=0.5, c=0.0, b=0.0, inner=(0.4, 0.6)):
    lo, hi = inner
    return {
        "interval": [0.0, 1.0],
        "p": p,
        "b": {"pieces": [{"range": [0, 1], "poly": [b]}]},
        "c": {"pieces": [{"range": [0, 1], "poly": [c]}]},
        "m": {"pieces": [
            {"range": [0, lo], "poly": [-eta]},
            {"range": [lo, hi], "poly": [1.0]},
            {"range": [hi, 1], "poly": [-eta]},
        ]},
    }


CATALOGUE = {
    "step_seno": step_config(0.1, c=1.0),
    "step_lap": step_config(0.03),
    "step_drift": step_config(0.02, b=1.0),
    "step_kappa100": step_config(100.0, p=0.3),
    "manufactured": {"interval": [0.0, 1.0], "p": 0.5, "m": {"named": "manufactured"}},
    "cosine_weight": {
        "interval": [0.0, 1.0],
        "p": 0.5,
        "c": {"pieces": [{"range": [0, 1], "poly": [0.5]}]},
        "m": {"pieces": [{"range": [0, 1], "poly": [-0.05],
                          "trig": {"kind": "cos", "amplitude": -1.0,
                                   "frequency": 2 * math.pi}}]},
    },
    "negative": {"interval": [0.0, 1.0], "p": 0.5,
                 "m": {"pieces": [{"range": [0, 1], "poly": [-1.0]}]}},
}


def _coefficient(raw, name, alpha, beta):
    where = f"field '{name}'"
    if raw is None:
        return Coefficient.constant(1.0 if name == "a" else 0.0, alpha, beta)
    if isinstance(raw, (int, float)):
        return Coefficient.constant(float(raw), alpha, beta)
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object with 'pieces'")
    if "named" in raw:
        try:
            return NAMED_WEIGHTS[raw["named"]](alpha, beta)
        except KeyError:
            raise ConfigError(f"{where}: unknown named coefficient {raw['named']!r}") from None
    pieces = raw.get("pieces")
    if not isinstance(pieces, list) or not pieces:
        raise ConfigError(f"{where}: 'pieces' must be a non-empty list")
    for i, pc in enumerate(pieces):
        if not isinstance(pc, dict) or "range" not in pc:
            raise ConfigError(f"{where}.pieces[{i}]: each piece needs a 'range'")
        rng = pc["range"]
        if not (isinstance(rng, list) and len(rng) == 2 and rng[0] < rng[1]):
            raise ConfigError(f"{where}.pieces[{i}].range: expected [lo, hi] with lo < hi")
    try:
        return coefficient_from_pieces(alpha, beta, pieces)
    except (ProblemError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def problem_from_dict(raw: dict) -> Problem:
    if "interval" not in raw:
        raise ConfigError("field 'interval': missing")
    try:
        alpha, beta = (float(v) for v in raw["interval"])
    except (TypeError, ValueError):
        raise ConfigError("field 'interval': expected [alpha, beta]") from None
    if "p" not in raw:
        raise ConfigError("field 'p': missing")
    coeffs = {k: _coefficient(raw.get(k), k, alpha, beta) for k in ("a", "b", "c", "m")}
    try:
        return Problem(alpha, beta, coeffs["a"], coeffs["b"], coeffs["c"], coeffs["m"],
                       float(raw["p"]))
    except ProblemError as exc:
        raise ConfigError(f"model invariant: {exc}") from None


def config_from_dict(raw: dict, name="problem") -> ProblemConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    if "catalogue" in raw:
        base = raw["catalogue"]
        if base not in CATALOGUE:
            raise ConfigError(f"field 'catalogue': unknown problem {base!r}")
        merged = copy.deepcopy(CATALOGUE[base])
        merged.update({k: v for k, v in raw.items() if k != "catalogue"})
        raw, name = merged, base
    tol = dict(DEFAULT_TOLERANCES)
    extra = raw.get("tolerances", {})
    if not isinstance(extra, dict):
        raise ConfigError("field 'tolerances': expected an object")
    for k, v in extra.items():
        if k not in DEFAULT_TOLERANCES:
            raise ConfigError(f"field 'tolerances.{k}': unknown tolerance")
        if not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError(f"field 'tolerances.{k}': must be positive")
        tol[k] = float(v)
    grid = raw.get("grid", 2000)
    if not isinstance(grid, int) or grid < 10:
        raise ConfigError("field 'grid': expected an integer >= 10")
    return ProblemConfig(problem_from_dict(raw), raw, tol, grid, raw.get("name", name))


def load_config(path) -> ProblemConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(raw, Path(path).stem)


def catalogue_problem(name: str) -> Problem:
    return config_from_dict(copy.deepcopy(CATALOGUE[name]), name).problem


def set_field(raw: dict, path: str, value):
    """Set a dotted path such as ``m.pieces.0.poly.0`` in a config dict."""
    node = raw
    parts = path.split(".")
    try:
        for part in parts[:-1]:
            node = node[int(part)] if isinstance(node, list) else node[part]
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        elif last in node:
            node[last] = value
        else:
            raise KeyError(last)
    except (KeyError, IndexError, ValueError, TypeError):
        raise ConfigError(f"sweep field {path!r} does not exist in the config") from None
