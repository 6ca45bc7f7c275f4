"""Flat key = value pipeline configuration.

One key per line, '#' starts a comment, unknown keys are rejected with the
offending name.  Keys under the reserved "result." prefix are ignored so a
run log (resolved config + derived values) can be replayed as a config.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ValidationError
from .mcpm import MCPMParams


@dataclass
class PipelineConfig:
    input_path: str = ""
    input_kind: str = "mesh"            # mesh | points
    thicken_offset: float = 0.0         # mm; 0 disables thickening
    dedup_epsilon: float = 1e-6         # mm; vertex merge tolerance
    resolution: int = 128               # max grid dimension
    margin: float = 0.05                # bbox expansion fraction

    num_agents: int = 100_000
    num_steps: int = 500
    sense_distance: float = 4.0
    sense_spread: float = 30.0
    move_distance: float = 1.0
    num_samples: int = 4
    sharpness: float = 2.0
    agent_deposit: float = 1.0
    food_deposit: float = 10.0
    deposit_decay: float = 0.9
    trace_decay: float = 0.995
    boundary_policy: str = "respawn"
    seed: int = 0

    iso_mode: str = "percentile"        # percentile (of nonzero) | absolute
    iso_value: float = 50.0
    snapshot_interval: int = 0          # steps; 0 = no snapshots
    out_dir: str = "out"

    def validate(self) -> None:
        if not self.input_path:
            raise ValidationError("config field 'input_path' is required")
        if self.input_kind not in ("mesh", "points"):
            raise ValidationError(
                f"config field 'input_kind' must be 'mesh' or 'points', got {self.input_kind!r}")
        if self.thicken_offset < 0:
            raise ValidationError("config field 'thicken_offset' must be >= 0")
        if self.dedup_epsilon < 0:
            raise ValidationError("config field 'dedup_epsilon' must be >= 0")
        if self.resolution < 8:
            raise ValidationError(
                f"config field 'resolution' must be >= 8, got {self.resolution}")
        if not (0.0 <= self.margin < 0.5):
            raise ValidationError("config field 'margin' must be in [0, 0.5)")
        if self.iso_mode not in ("percentile", "absolute"):
            raise ValidationError(
                f"config field 'iso_mode' must be 'percentile' or 'absolute', got {self.iso_mode!r}")
        if self.iso_mode == "percentile" and not (0.0 < self.iso_value <= 100.0):
            raise ValidationError("config field 'iso_value' (percentile) must be in (0, 100]")
        if self.snapshot_interval < 0:
            raise ValidationError("config field 'snapshot_interval' must be >= 0")
        try:
            self.mcpm_params()
        except ValidationError as exc:
            raise ValidationError(f"config simulation parameters: {exc}") from exc

    def mcpm_params(self) -> MCPMParams:
        names = {f.name for f in fields(MCPMParams)}
        return MCPMParams(**{f.name: getattr(self, f.name)
                             for f in fields(self) if f.name in names})

    def to_lines(self) -> list[str]:
        return [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    ftype = _FIELD_TYPES[name]
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ValidationError(f"config field {name!r}: cannot parse {raw!r} as {ftype}") from exc


def parse_config_text(text: str, source: str = "<config>") -> PipelineConfig:
    cfg = PipelineConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key.startswith("result."):
            continue  # derived values from a replayed run log
        if key not in _FIELD_TYPES:
            raise ValidationError(f"{source}:{lineno}: unknown config field {key!r}")
        setattr(cfg, key, _coerce(key, value))
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    cfg = parse_config_text(path.read_text(), source=str(path))
    cfg.validate()
    return cfg
