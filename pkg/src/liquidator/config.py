"""Scenario files: one JSON document per experiment, keyed by ``setting``.

Every section has a fixed set of keys; anything else is rejected. Errors
carry the dotted field path and, when it can be found, the line in the file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ValidationError

SETTINGS = ("constant_vol", "stoch_vol", "lob")
PRESETS = ("table1", "table2", "lob52")


class ConfigError(ValidationError):
    def __init__(self, path: str, message: str, line: int | None = None, source: str = "config"):
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: field '{path}': {message}")
        self.field = path
        self.line = line


# (type, constraint, default); default ``...`` marks a required key
_POS = ">0"
_NONNEG = ">=0"

_MODEL = {
    "Q": ("number", _POS, ...),
    "T": ("number", _POS, ...),
    "lam": ("number", _NONNEG, ...),
    "K": ("number", _POS, ...),
}
_SIMULATION = {
    "dt": ("number", _POS, None),
    "n_paths": ("int", ">=1", 1000),
    "seed": ("int", ">=0", 0),
    "S0": ("number", None, 15.0),
    "shocks": ("str", ("binomial", "gaussian"), "binomial"),
}
_FRONTIER = {
    "lambdas": ("list[number]", _NONNEG, [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0]),
    "venues": ("int", ">=1", 1),
}

SCHEMA: dict[str, dict[str, dict]] = {
    "constant_vol": {
        "model": {**_MODEL, "sigma": ("number", _POS, ...)},
        "market": {
            "eta_per": ("number", _NONNEG, ...),
            "eta_tem": ("number", _POS, None),
            "venue_counts": ("list[int]", ">=1", None),
            "venues": ("venues", None, None),
        },
        "simulation": _SIMULATION,
        "frontier": _FRONTIER,
        "output": {"trajectory_points": ("int", ">=2", 200)},
    },
    "stoch_vol": {
        "model": _MODEL,
        "factor": {
            "nu0": ("number", None, ...),
            "m": ("number", None, ...),
            "epsilon": ("number", _NONNEG, ...),
            "xi": ("number", _NONNEG, ...),
            "rho": ("number", "(-1,1)", ...),
        },
        "market": {"eta_per": ("number", _NONNEG, ...), "eta_tem": ("number", _POS, ...)},
        "strategies": ("list[str]", ("constant_vol", "moving_constant_vol", "vol_adjusted"),
                       ["constant_vol", "moving_constant_vol", "vol_adjusted"]),
        "simulation": _SIMULATION,
        "residual": {
            "epsilons": ("list[number]", _POS, [0.04, 0.02, 0.01]),
            "t": ("number", _NONNEG, 0.0),
            "nu": ("number", None, 0.5),
            "q": ("number", _POS, 100.0),
            "dnu": ("number", _POS, 0.01),
            "t_steps": ("int", ">=2", 400),
        },
        "output": {"trajectory_points": ("int", ">=2", 200)},
    },
    "lob": {
        "model": {
            "Q": ("int", ">=1", ...),
            "T": ("number", _POS, ...),
            "K": ("number", _POS, ...),
            "sigma": ("number", _NONNEG, ...),
            "lam": ("number", _NONNEG, 0.0),
        },
        "market": {"eta_per": ("number", _NONNEG, ...), "eta_tem": ("number", _POS, ...)},
        "book": {
            "lambda_M": ("number", _NONNEG, None),
            "A": ("number", _NONNEG, None),
            "kappa": ("number", _NONNEG, None),
            "Delta": ("number", _NONNEG, ...),
            "eta_u": ("number", _POS, ...),
            "eta_d": ("number", _POS, ...),
            "eta_I": ("number", _NONNEG, ...),
        },
        "strategies": ("list[str]", ("mo_only", "market_and_limit"), ["mo_only", "market_and_limit"]),
        "simulation": _SIMULATION,
        "output": {"trajectory_points": ("int", ">=2", 200)},
    },
}


@dataclass
class ScenarioConfig:
    setting: str
    sections: dict[str, Any]
    source: str = "config"
    raw: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.sections[key]

    def to_json(self) -> dict:
        """Fully resolved config (defaults filled in), suitable for rerunning."""
        return {"setting": self.setting, **self.sections}


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def _check_value(path: str, value, kind: str, constraint, fail):
    def number(v, where):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            fail(where, "expected a finite number")
        return float(v)

    def integer(v, where):
        if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
            fail(where, "expected an integer")
        return int(v)

    def bound(v, where):
        if constraint == _POS and not v > 0:
            fail(where, f"must be > 0, got {v}")
        if constraint == _NONNEG and not v >= 0:
            fail(where, f"must be >= 0, got {v}")
        if constraint == ">=1" and not v >= 1:
            fail(where, f"must be >= 1, got {v}")
        if constraint == ">=2" and not v >= 2:
            fail(where, f"must be >= 2, got {v}")
        if constraint == "(-1,1)" and not -1 < v < 1:
            fail(where, f"must lie strictly between -1 and 1, got {v}")
        return v

    if kind == "number":
        return bound(number(value, path), path)
    if kind == "int":
        return bound(integer(value, path), path)
    if kind == "str":
        if not isinstance(value, str) or (constraint and value not in constraint):
            fail(path, f"expected one of {list(constraint)}")
        return value
    if kind.startswith("list["):
        if not isinstance(value, list) or not value:
            fail(path, "expected a non-empty list")
        inner = kind[5:-1]
        out = []
        for i, v in enumerate(value):
            where = f"{path}[{i}]"
            if inner == "str":
                if not isinstance(v, str) or v not in constraint:
                    fail(where, f"expected one of {list(constraint)}")
                out.append(v)
            else:
                out.append(bound(number(v, where) if inner == "number" else integer(v, where), where))
        return out
    if kind == "venues":
        if not isinstance(value, list) or not value:
            fail(path, "expected a non-empty list of {beta, eta_tem} objects")
        out = []
        for i, v in enumerate(value):
            where = f"{path}[{i}]"
            if not isinstance(v, dict) or set(v) != {"beta", "eta_tem"}:
                fail(where, "expected exactly the keys 'beta' and 'eta_tem'")
            out.append({"beta": number(v["beta"], where + ".beta"), "eta_tem": number(v["eta_tem"], where + ".eta_tem")})
        return out
    raise AssertionError(kind)


def parse_config(data: dict, text: str | None = None, source: str = "config") -> ScenarioConfig:
    def fail(path, message):
        raise ConfigError(path, message, _line_of(text, path.split(".")[-1].split("[")[0]), source)

    if not isinstance(data, dict):
        fail("<root>", "expected a JSON object")
    setting = data.get("setting")
    if setting not in SETTINGS:
        fail("setting", f"expected one of {list(SETTINGS)}, got {setting!r}")
    schema = SCHEMA[setting]
    for key in data:
        if key != "setting" and key not in schema:
            fail(key, "unknown key")
    sections: dict[str, Any] = {}
    for name, spec in schema.items():
        if isinstance(spec, tuple):  # top-level scalar or list
            kind, constraint, default = spec
            if name in data:
                sections[name] = _check_value(name, data[name], kind, constraint, fail)
            elif default is ...:
                fail(name, "required key missing")
            else:
                sections[name] = default
            continue
        given = data.get(name, {})
        if not isinstance(given, dict):
            fail(name, "expected an object")
        for key in given:
            if key not in spec:
                fail(f"{name}.{key}", "unknown key")
        resolved = {}
        for key, (kind, constraint, default) in spec.items():
            path = f"{name}.{key}"
            if key in given and given[key] is not None:
                resolved[key] = _check_value(path, given[key], kind, constraint, fail)
            elif default is ...:
                fail(path, "required key missing")
            else:
                resolved[key] = list(default) if isinstance(default, list) else default
        sections[name] = resolved
    _cross_checks(setting, sections, fail)
    return ScenarioConfig(setting, sections, source, data)


def _cross_checks(setting, s, fail):
    if setting == "constant_vol":
        m = s["market"]
        if (m["venues"] is None) == (m["venue_counts"] is None):
            fail("market.venues", "give exactly one of 'venues' or 'venue_counts'")
        if m["venue_counts"] is not None and m["eta_tem"] is None:
            fail("market.eta_tem", "required with 'venue_counts'")
    if setting == "lob":
        b = s["book"]
        direct = b["lambda_M"] is not None
        derived = b["A"] is not None or b["kappa"] is not None
        if direct == derived:
            fail("book.lambda_M", "give either 'lambda_M' or both 'A' and 'kappa'")
        if derived and (b["A"] is None or b["kappa"] is None):
            fail("book.A", "'A' and 'kappa' must be given together")
    lams = s.get("frontier", {}).get("lambdas")
    if lams is not None and (lams != sorted(lams) or lams[0] != 0.0):
        fail("frontier.lambdas", "must be sorted ascending and start at 0")


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}", source=str(path)) from None
    return loads(text, source=str(path))


def loads(text: str, source: str = "config") -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", exc.msg, exc.lineno, source) from None
    return parse_config(data, text, source)


def load_preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError("<preset>", f"unknown preset {name!r}; choose from {list(PRESETS)}")
    text = resources.files("liquidator").joinpath("presets", f"{name}.json").read_text(encoding="utf-8")
    return loads(text, source=f"preset:{name}")
