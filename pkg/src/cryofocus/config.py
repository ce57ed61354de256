"""JSON system configuration: schema validation and conversion to model objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .environment import (
    CLOSING,
    OPENING,
    ContractionStack,
    EnvironmentState,
    LensSpec,
    MaterialSpec,
    Segment,
    get_material,
    material_table,
)
from .errors import ConfigError, CryofocusError, UnknownMaterialError
from .paraxial import OpticalSystem, gap, thin_lens

PRESETS = ("paper-reference",)
_ORIENTATION = {"opening": OPENING, "closing": CLOSING}


def _data_text(name: str) -> str:
    return resources.files("cryofocus").joinpath("data", name).read_text(encoding="utf-8")


def config_schema() -> dict:
    return json.loads(_data_text("config.schema.json"))


@dataclass(frozen=True)
class SystemConfig:
    relay: OpticalSystem
    objective: LensSpec
    objective_variants: tuple[LensSpec, ...]
    tube_focal_length: float
    principal_plane_offset: float
    stacks: tuple[ContractionStack, ...]
    environment: EnvironmentState
    sensor_diagonal: float  # mm
    pixel_pitch: float  # µm
    measured_magnification: Optional[float] = None
    compensation_fixed: ContractionStack = ContractionStack()
    materials: dict[str, MaterialSpec] = field(default_factory=material_table)

    @property
    def nominal_magnification(self) -> float:
        return self.tube_focal_length / self.objective.focal_length


def _lens(d: dict) -> LensSpec:
    return LensSpec(
        d["focal_length"],
        d["refractive_index"],
        d.get("cumulative_contraction", 0.0),
        d.get("thermo_optic_shift", 0.0),
    )


def _segments(items: list, table: dict) -> list[Segment]:
    return [Segment(get_material(s["material"], table), s["length"], _ORIENTATION[s["orientation"]]) for s in items]


def parse_config(raw: Any) -> SystemConfig:
    """Validate a decoded JSON document and build a :class:`SystemConfig`."""
    validator = jsonschema.Draft202012Validator(config_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"  at /{'/'.join(str(p) for p in e.absolute_path)}: {e.message}" for e in errors]
        raise ConfigError("configuration does not match the schema:\n" + "\n".join(lines))
    try:
        table = material_table(raw.get("materials"))
        relay = OpticalSystem(
            thin_lens(e["lens"], e.get("label", "")) if "lens" in e else gap(e["gap"], e.get("label", ""))
            for e in raw["relay"]
        )
        objective = _lens(raw["objective"])
        variants = tuple(_lens(v) for v in raw.get("objective_variants", [raw["objective"]]))
        stacks = tuple(
            ContractionStack(_segments(s["segments"], table), s.get("name", f"stack {i + 1}"))
            for i, s in enumerate(raw["stacks"])
        )
        env = raw["environment"]
        return SystemConfig(
            relay=relay,
            objective=objective,
            objective_variants=variants,
            tube_focal_length=raw["tube_lens"]["focal_length"],
            principal_plane_offset=raw["tube_lens"].get("principal_plane_offset", 0.0),
            stacks=stacks,
            environment=EnvironmentState(env.get("delta_pressure", 0.0), env.get("temperature", 293.0)),
            sensor_diagonal=raw["sensor"]["diagonal"],
            pixel_pitch=raw["sensor"]["pixel_pitch"],
            measured_magnification=raw.get("measured_magnification"),
            compensation_fixed=ContractionStack(_segments(raw.get("compensation", {}).get("fixed", []), table), "fixed"),
            materials=table,
        )
    except UnknownMaterialError:
        raise
    except CryofocusError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_raw(path=None, preset: str = "paper-reference") -> dict:
    """Decoded JSON from ``path`` or, when ``path`` is None, a built-in preset."""
    if path is None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(PRESETS)}")
        return json.loads(_data_text(f"{preset}.json"))
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def load_config(path=None, preset: str = "paper-reference") -> SystemConfig:
    return parse_config(load_raw(path, preset))
