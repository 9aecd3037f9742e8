"""Experiment configuration: JSON file, embedded defaults, flag overrides.

A configuration is one JSON object with a section per module plus experiment
parameters. File values override the embedded defaults, command-line flags
override the file, and ``--override key=value`` (dotted paths, JSON-parsed
values) wins over everything.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .backbone import BackboneModel, GaussianMixtureCondition
from .chord import ChordParams
from .errors import DomainError
from .preset_lib import load_preset
from .schedules import (
    LINEAR_INTERP,
    VP_CONST_BETA,
    VP_GENERIC,
    Schedule,
    load_beta_table,
)

EXPERIMENTS = (
    "coeffs",
    "toy",
    "step_sweep",
    "noise_ablation",
    "risk",
    "error_order",
    "diagnostics",
)


class UsageError(Exception):
    """Bad configuration or flags; maps to exit code 2."""


# the ramped noise-rate table used by the step-sweep and error-order studies
_RAMP = {"base": 0.05, "scale": 4.0, "power": 4, "points": 101}

DEFAULTS: dict[str, dict] = {
    "coeffs": {
        "schedule": {"kind": VP_CONST_BETA, "beta0": 2.0},
        "backbone": {"preset": "two_blob_2d", "output_kind": "velocity"},
        "chord": {},
        "params": {"t_start": 0.05, "t_stop": 0.95, "t_count": 19},
    },
    "toy": {
        "schedule": {"kind": VP_CONST_BETA, "beta0": 0.5},
        "backbone": {"preset": "two_blob_2d", "output_kind": "velocity"},
        "chord": {"use_prox": True},
        "params": {"particles": 500, "steps": 1},
    },
    "step_sweep": {
        "schedule": {"kind": VP_GENERIC, "beta_ramp": dict(_RAMP)},
        "backbone": {"preset": "two_blob_2d", "output_kind": "velocity"},
        "chord": {"t": 0.7, "delta": 0.25, "use_prox": False},
        "params": {"s_values": [1, 2, 4, 8, 16], "particles": 80},
    },
    "noise_ablation": {
        "schedule": {"kind": LINEAR_INTERP},
        "backbone": {"preset": "stiff_2d", "output_kind": "velocity"},
        "chord": {"use_prox": True},
        "params": {"n_values": [1, 2, 4], "seeds": 20},
    },
    "risk": {
        "schedule": {"kind": VP_CONST_BETA, "beta0": 1.0},
        "backbone": {"preset": "two_blob_2d", "output_kind": "velocity"},
        "chord": {},
        "params": {
            "noise_sigma": 0.2,
            "trials": 400,
            "series_length": 64,
            "series_value": 1.7,
            "grid_step": 0.05,
            "taps": 4,
        },
    },
    "error_order": {
        "schedule": {"kind": VP_GENERIC, "beta_ramp": dict(_RAMP)},
        "backbone": {"preset": "two_blob_2d", "output_kind": "velocity"},
        "chord": {"t": 0.7, "delta": 0.25, "use_prox": False},
        "params": {
            "h_values": [0.125, 0.0625, 0.03125, 0.015625],
            "horizon": 1.0,
        },
    },
    "diagnostics": {
        "schedule": {"kind": VP_GENERIC, "beta_ramp": dict(_RAMP)},
        "backbone": {"preset": "two_blob_2d", "output_kind": "velocity"},
        "chord": {"t": 0.7, "delta": 0.25, "use_prox": False},
        "params": {"grid": 12, "lte_slack": 1.05, "lte_states": 8},
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    schedule: dict = field(default_factory=dict)
    backbone: dict = field(default_factory=dict)
    chord: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "out"


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise UsageError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise UsageError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def load_config(
    experiment: str,
    config_path: str | None = None,
    seed: int | None = None,
    output_dir: str | None = None,
    overrides: list[str] | None = None,
) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise UsageError(
            f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}"
        )
    merged = copy.deepcopy(DEFAULTS[experiment])
    merged.setdefault("seed", 0)
    merged.setdefault("output_dir", "out")
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError as err:
            raise UsageError(f"config file not found: {config_path}") from err
        except json.JSONDecodeError as err:
            raise UsageError(f"config file is not valid JSON: {err}") from err
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        if not file_cfg:
            raise UsageError("config file is empty")
        merged = _deep_merge(merged, file_cfg)
    if seed is not None:
        merged["seed"] = seed
    if output_dir is not None:
        merged["output_dir"] = output_dir
    for text in overrides or []:
        path, value = _parse_override(text)
        node = merged
        for part in path[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[path[-1]] = value
    return ExperimentConfig(
        experiment=experiment,
        schedule=merged.get("schedule", {}),
        backbone=merged.get("backbone", {}),
        chord=merged.get("chord", {}),
        params=merged.get("params", {}),
        seed=int(merged.get("seed", 0)),
        output_dir=str(merged.get("output_dir", "out")),
    )


def build_schedule(section: dict) -> Schedule:
    kind = section.get("kind")
    if kind not in (VP_CONST_BETA, VP_GENERIC, LINEAR_INTERP):
        raise UsageError(f"schedule.kind must be set to a known kind, got {kind!r}")
    kwargs = {
        "kind": kind,
        "alpha_floor": float(section.get("alpha_floor", 1e-3)),
        "fd_step": float(section.get("fd_step", 1e-3)),
    }
    if kind == VP_CONST_BETA:
        if "beta0" not in section:
            raise UsageError("vp_const_beta needs schedule.beta0")
        kwargs["beta0"] = float(section["beta0"])
    if kind == VP_GENERIC:
        if "beta_csv" in section and section["beta_csv"]:
            times, values = load_beta_table(section["beta_csv"])
        elif "beta_table" in section:
            table = section["beta_table"]
            times = np.asarray(table["times"], dtype=float)
            values = np.asarray(table["values"], dtype=float)
        elif "beta_ramp" in section:
            ramp = section["beta_ramp"]
            times = np.linspace(0.0, 1.0, int(ramp.get("points", 101)))
            values = float(ramp.get("base", 0.05)) + float(
                ramp.get("scale", 4.0)
            ) * times ** float(ramp.get("power", 4))
        else:
            raise UsageError(
                "vp_generic needs schedule.beta_csv, beta_table or beta_ramp"
            )
        kwargs["beta_times"] = times
        kwargs["beta_values"] = values
    try:
        return Schedule(**kwargs)
    except DomainError as err:
        raise UsageError(f"invalid schedule section: {err}") from err


def _condition(section: dict) -> GaussianMixtureCondition:
    try:
        return GaussianMixtureCondition(
            weights=section["weights"],
            means=section["means"],
            scales=section["scales"],
        )
    except (KeyError, DomainError) as err:
        raise UsageError(f"invalid mixture section: {err}") from err


def build_backbone(section: dict, schedule: Schedule) -> BackboneModel:
    output_kind = section.get("output_kind", "velocity")
    # explicit inline mixtures win over a (possibly default-merged) preset name
    if "source" in section and "target" in section:
        source = _condition(section["source"])
        target = _condition(section["target"])
    elif "preset" in section and section["preset"]:
        try:
            source, target = load_preset(section["preset"])
        except DomainError as err:
            raise UsageError(str(err)) from err
    else:
        raise UsageError("backbone needs either a preset name or inline mixtures")
    try:
        return BackboneModel(
            schedule=schedule, source=source, target=target, output_kind=output_kind
        )
    except DomainError as err:
        raise UsageError(f"invalid backbone section: {err}") from err


def build_chord_params(section: dict) -> ChordParams:
    kwargs = dict(section)
    if "lambda" in kwargs:  # accepted alias for the step scale
        kwargs["step_scale"] = kwargs.pop("lambda")
    try:
        return ChordParams(**kwargs)
    except (TypeError, DomainError) as err:
        raise UsageError(f"invalid chord section: {err}") from err
