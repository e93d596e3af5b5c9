"""Run configuration: JSON schema, loading and diagnostics."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .model import ModelConfig, ModelError, ValidatedModel, validate

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_COEFF = {
    "oneOf": [
        _obj({"family": {"const": "constant"}, "value": _NUM}, ["family", "value"]),
        _obj({"family": {"const": "affine"}, "intercept": _NUM, "slope": _NUM}, ["family", "intercept", "slope"]),
    ]
}

_MODEL = _obj(
    {
        "velocity": {
            "oneOf": [
                _obj({"family": {"const": "linear"}, "rate": _POS}, ["family", "rate"]),
                _obj(
                    {"family": {"const": "power"}, "coefficient": _POS, "exponent": _POS},
                    ["family", "coefficient", "exponent"],
                ),
            ]
        },
        "division": _obj({"family": {"const": "linear"}, "ratio": _NUM}, ["ratio"]),
        "rates": _obj({"delta": _COEFF, "gamma": _COEFF}, ["delta", "gamma"]),
        "kernel": _obj({"tau_min": _NUM, "tau_max": _NUM, "shape": _POS}, ["tau_min", "tau_max", "shape"]),
        "beta": _obj({"a": _COEFF, "b": _COEFF, "n": _POS}, ["a", "b", "n"]),
    },
    ["velocity", "division", "rates", "kernel", "beta"],
)

_MODIFIERS = {"zero_below": _NUM, "truncate_b": _NUM}

INITIAL = {
    "oneOf": [
        _obj({"family": {"const": "constant"}, "value": _NUM, **_MODIFIERS}, ["family", "value"]),
        _obj(
            {"family": {"const": "product"}, "amplitude": _NUM, "t_amp": _NUM, "t_freq": _NUM, "m_slope": _NUM,
             **_MODIFIERS},
            ["family"],
        ),
        _obj(
            {"family": {"const": "bump"}, "base": _NUM, "amplitude": _NUM, "center": _NUM, "width": _POS,
             **_MODIFIERS},
            ["family"],
        ),
        _obj({"family": {"const": "csv"}, "path": {"type": "string"}, **_MODIFIERS}, ["family", "path"]),
    ]
}

_GRID = _obj(
    {
        "y_min": {"type": "number", "exclusiveMaximum": 0},
        "dt": _POS,
        "quad_order": {"type": "integer", "minimum": 2},
        "picard_tol": _POS,
        "picard_max": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
    }
)

SCHEMA = _obj(
    {
        "model": _MODEL,
        "grid": _GRID,
        "dde": _obj({"T": _POS, "dt": _POS, "history": INITIAL}, ["T"]),
        "field": _obj({"T": _POS, "initial": INITIAL, "P0": _NUM}, ["T", "initial"]),
        "experiments": _obj(
            {
                "decay": _obj({"T": _POS, "initial": INITIAL}, ["initial"]),
                "extinction": _obj({"b": _POS, "margin": _POS, "initial": INITIAL}, ["b", "initial"]),
                "agreement": _obj(
                    {"b": _POS, "T": _POS, "initial_1": INITIAL, "initial_2": INITIAL},
                    ["b", "initial_1", "initial_2"],
                ),
                "equilibrium": _obj({"T": _POS, "dt": _POS}),
            }
        ),
    },
    ["model"],
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    model: ValidatedModel
    base_dir: Path

    @property
    def grid(self) -> dict:
        return dict(self.raw.get("grid", {}))

    def section(self, name: str) -> dict:
        if name not in self.raw:
            raise ConfigError(f"config has no '{name}' section")
        return self.raw[name]

    def experiment(self, name: str) -> dict:
        exps = self.raw.get("experiments", {})
        if name not in exps:
            raise ConfigError(f"config has no 'experiments.{name}' block")
        return exps[name]


def _where(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def parse(text: str, base_dir: Path = Path(".")) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ConfigError(
            f"malformed JSON at byte offset {offset} (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc
    validator = jsonschema.Draft202012Validator(SCHEMA)
    best = jsonschema.exceptions.best_match(validator.iter_errors(raw))
    if best is not None:
        raise ConfigError(f"config field {_where(best)}: {best.message}")
    try:
        model = validate(ModelConfig.from_dict(raw["model"]))
    except ModelError as exc:
        raise ConfigError(f"config field model: {exc}") from exc
    return RunConfig(raw, model, base_dir)


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse(text, path.parent)
