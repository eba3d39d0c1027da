"""Run configuration: a flat ``key = value`` text file whose values command-line flags override."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .formats import format_kv, parse_kv
from .geometry import CameraIntrinsics


@dataclass(frozen=True)
class RunConfig:
    # camera intrinsics (defaults suit a 320x240 time-of-flight sensor)
    fx: float = 241.42
    fy: float = 241.42
    cx: float = 160.0
    cy: float = 120.0
    image_width: int = 320
    image_height: int = 240
    projection_resolution: int = 96
    heatmap_size: int = 18
    heatmap_sigma: float = 1.0
    grid_n: int = 32
    components: int = 35
    prior_path: str = ""
    prior_frame: str = "camera"
    noise_sigma: float = 0.0
    spurious_probability: float = 0.0
    spurious_amplitude: float = 1.0
    cloud_density: float = 6.0
    capsule_radius: float = 8.0
    seed: int = 0
    input: str = ""
    output: str = ""
    adapter: str = "canonical"

    def __post_init__(self):
        if self.projection_resolution < 8 or self.heatmap_size < 1 or self.grid_n < 2:
            raise ConfigError("resolution, heat-map size and grid size must be positive")
        if self.components < 1:
            raise ConfigError("components must be >= 1")
        if self.prior_frame not in ("camera", "obb"):
            raise ConfigError(f"prior_frame must be 'camera' or 'obb', got {self.prior_frame!r}")
        if self.adapter not in ("canonical", "msra_like"):
            raise ConfigError(f"unknown adapter {self.adapter!r}")
        try:
            self.intrinsics
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def intrinsics(self):
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, self.image_width, self.image_height)

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_text(self):
        return format_kv(self.to_dict())

    def provenance(self):
        """Copy without the output location, which does not affect results."""
        return dataclasses.replace(self, output="")

    def config_hash(self):
        return hashlib.sha256(self.provenance().to_text().encode()).hexdigest()[:16]

    def updated(self, **overrides):
        """Copy with the given non-None overrides applied."""
        values = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(values) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **values)

    @classmethod
    def from_text(cls, text):
        raw = parse_kv(text)
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for key, value in raw.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            conv = {"float": float, "int": int, "str": str}[types[key]]
            try:
                values[key] = conv(value)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {value!r}") from None
        return cls(**values)

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)
