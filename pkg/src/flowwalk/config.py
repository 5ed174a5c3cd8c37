"""JSON study configuration: schema (version 1), loading and translation into run objects."""
from __future__ import annotations

import json
import math
from pathlib import Path

import jsonschema

from .fields import scalar_from_config, vector_from_config
from .geometry import Manifold
from .reference import ReferenceSolution, ref_circle, ref_feynman_kac_mc, ref_line_gaussian, ref_line_ou
from .semigroup import RunConfig


class ConfigError(ValueError):
    """Invalid or unreadable configuration (CLI exit code 1)."""


_field = {"type": "object", "required": ["form"], "properties": {"form": {"type": "string"}}}
_window = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema", "manifold", "f", "t", "rho"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": 1},
        "name": {"type": "string"},
        "manifold": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["euclidean", "circle", "model2d"]},
                "n": {"type": "integer", "minimum": 1},
                "box": _window,
                "psi": _field,
                "r0": {"type": ["number", "string"]},
                "weight": _field,
                "check_pole": {"type": "boolean"},
            },
        },
        "partition": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a": {"type": "number", "minimum": 0},
                "window": _window,
                "r_max": {"type": "number", "exclusiveMinimum": 0},
                "k": {"type": "integer", "minimum": 1},
                "K": {"type": "integer", "minimum": 3},
                "l": {"type": "integer", "minimum": 1},
            },
        },
        "study": {"enum": ["rate", "convergence"]},
        "b": _field,
        "V": _field,
        "v0": {"type": "number", "minimum": 0},
        "f": _field,
        "support": {
            "type": "object",
            "required": ["center", "radius"],
            "properties": {"center": {"type": "array", "items": {"type": "number"}},
                           "radius": {"type": "number", "exclusiveMinimum": 0}},
        },
        "t": {"type": "number", "minimum": 0},
        "rho": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "track": {"enum": ["pointwise", "mean"]},
        "p": {"type": "number", "minimum": 1},
        "error_region": _window,
        "eval_points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "residual": {"type": "boolean"},
        "reference": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["fourier_circle", "gaussian_line", "ou_line", "feynman_kac_mc", "none"]},
                "terms": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                                      "minItems": 3, "maxItems": 3}},
                "c": {"type": "number"},
                "v": {"type": "number"},
                "theta": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "mc": {
            "type": "object",
            "properties": {"paths": {"type": "integer", "minimum": 1000}, "seed": {"type": "integer", "minimum": 0},
                           "steps": {"type": "integer", "minimum": 1}, "window": _window},
        },
        "audit": {
            "type": "object",
            "properties": {"p": {"type": "number", "exclusiveMinimum": 0},
                           "kappa": {"enum": ["1", "1/r", "1/(r log r)"]},
                           "samples": {"type": "integer", "minimum": 1}, "window": _window},
        },
        "check": {
            "type": "object",
            "properties": {"min_slope": {"type": "number"}, "max_final_sup_error": {"type": "number"},
                           "max_point_error": {"type": "number"},
                           "monotone": {"type": "boolean"}, "mc_sigmas": {"type": "number"},
                           "allowance": {"type": "number"}},
        },
        "threads": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
}


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        loc = "/".join(map(str, e.absolute_path)) or "<root>"
        raise ConfigError(f"config invalid at {loc}: {e.message}") from None
    if cfg.get("study", "rate") == "rate" and cfg.get("partition", {}).get("a", 1.0) == 0:
        raise ConfigError("rate studies need a mesh law rho^(2+a) with a > 0; use study='convergence' for a = 0")
    return cfg


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: not valid JSON ({e})") from None
    return validate(cfg)


def manifold_of(cfg: dict) -> Manifold:
    try:
        return Manifold.from_config(cfg["manifold"])
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"manifold: {e}") from None


def run_config(cfg: dict, threads: int = 1) -> RunConfig:
    M = manifold_of(cfg)
    d = M.dim
    part = cfg.get("partition", {})
    window = part.get("window")
    if M.kind == "model2d":
        window = part.get("r_max")
    override = {k: part[k] for k in ("k", "K", "l") if k in part}
    sup = cfg.get("support")
    try:
        return RunConfig(
            manifold=M,
            f=scalar_from_config(cfg["f"], d),
            t=float(cfg["t"]),
            b=vector_from_config(cfg.get("b"), d),
            V=scalar_from_config(cfg.get("V"), d),
            v0=float(cfg.get("v0", 0.0)),
            mesh_exponent=float(part.get("a", 1.0)),
            window=window,
            track=cfg.get("track", "pointwise"),
            p=float(cfg.get("p", 2.0)),
            support=(sup["center"], float(sup["radius"])) if sup else None,
            partition_override=override or None,
            threads=int(cfg.get("threads", threads)),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"run configuration: {e}") from None


def reference_of(cfg: dict, rc: RunConfig, seed: int = 0, threads: int = 1):
    ref = cfg.get("reference", {"kind": "none"})
    kind = ref["kind"]
    if kind == "none":
        return None
    if kind == "fourier_circle":
        if rc.manifold.kind != "circle":
            raise ConfigError("fourier_circle reference needs the circle")
        return ref_circle(ref.get("terms", [[1, 1, 0]]), float(ref.get("c", 0.0)), float(ref.get("v", 0.0)), rc.t)
    if kind == "gaussian_line":
        return ref_line_gaussian(rc.f, float(ref.get("c", 0.0)), float(ref.get("v", 0.0)), rc.t)
    if kind == "ou_line":
        return ref_line_ou(rc.f, float(ref.get("theta", 1.0)), rc.t)
    mc = cfg.get("mc", {})
    win = mc.get("window", cfg.get("partition", {}).get("window"))
    return ref_feynman_kac_mc(rc.manifold, rc.b, rc.V, rc.f, rc.t, paths=int(mc.get("paths", 100_000)),
                              seed=int(mc.get("seed", seed)), window=win, steps=int(mc.get("steps", 512)),
                              threads=threads)


def is_mc(ref) -> bool:
    return isinstance(ref, ReferenceSolution) and ref.kind == "feynman_kac_mc"


def eval_points(cfg: dict, rc: RunConfig):
    pts = cfg.get("eval_points")
    if pts is None:
        return None
    return [list(map(float, p)) for p in pts]


def finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)
