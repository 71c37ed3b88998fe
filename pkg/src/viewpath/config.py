"""Planner configuration with file, environment and command-line layering.

Precedence, highest first: command-line flag, ``VIEWPATH_*`` environment
variable, config file, built-in default.
"""

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

ENV_PREFIX = "VIEWPATH_"


@dataclass
class PlannerConfig:
    v_base: float = 0.35          # m/s
    v_eef: float = 0.65           # m/s
    T_step: float = 1.0           # s
    M: int = 980                  # candidates per base pose
    N: int = 25                   # base samples
    voxel_size: float = 0.05      # 10 m / 200 cells
    registration_distance: float = 0.05
    seed: int = 0
    arm_file: str | None = None
    h_fov: float = 70.0
    v_fov: float = 55.0
    sensor_width: int = 640
    sensor_height: int = 480
    ray_downsample: int = 10
    min_range: float = 0.1
    max_range: float = 5.0
    look_at_fraction: float = 0.7
    clearance: float = 0.12
    surface_only: bool = False
    sample_frame: str = "base"    # "base" or "world", see planner.sampling_center
    joint_filter: bool = True
    baseline: bool = False
    with_stops: bool = False
    dwell: float = 1.0
    all_images: bool = False
    frame_interval: float = 0.2
    gt_density: float = 1600.0
    jobs: int = 1
    initial_q: list | None = field(default=None)

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("v_base", "v_eef", "T_step", "voxel_size", "registration_distance", "dwell",
                     "frame_interval", "gt_density", "max_range"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("M", "N", "jobs", "ray_downsample"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if int(self.N) < 2:
            raise ValueError("N must be >= 2")
        if self.sample_frame not in ("base", "world"):
            raise ValueError("sample_frame must be 'base' or 'world'")
        if not 0.0 <= self.look_at_fraction <= 1.0:
            raise ValueError("look_at_fraction must be in [0, 1]")
        return self

    @classmethod
    def simulation(cls, **overrides):
        """Settings used for the simulated layout studies (0.5 m/s base, 2 s steps, 0.4 m/s arm)."""
        base = dict(v_base=0.5, T_step=2.0, v_eef=0.4)
        base.update(overrides)
        return cls(**base)

    @property
    def spacing(self):
        return self.v_base * self.T_step

    def camera(self):
        from .visibility import CameraModel

        return CameraModel.from_sensor(self.sensor_width, self.sensor_height, self.ray_downsample,
                                       h_fov=self.h_fov, v_fov=self.v_fov,
                                       min_range=self.min_range, max_range=self.max_range)

    def arm(self):
        from .kinematics import load_arm

        return load_arm(self.arm_file)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


def _coerce(f, raw):
    typ = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if isinstance(raw, str):
        if "bool" in typ:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if typ.startswith("int"):
            return int(raw)
        if typ.startswith("float"):
            return float(raw)
        if typ.startswith("list"):
            return [float(x) for x in raw.replace(",", " ").split()]
        if raw.lower() in ("none", "null", ""):
            return None
    return raw


def load_config(path=None, env=None, overrides=None, preset=None):
    """Build a :class:`PlannerConfig` from defaults, a YAML file, env vars and overrides.

    ``preset`` ("default" or "simulation") replaces the built-in defaults and
    takes precedence over a ``preset`` key in the file.
    """
    fields = {f.name: f for f in dataclasses.fields(PlannerConfig)}
    values = {}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text()) or {}
        file_preset = data.pop("preset", None)
        preset = preset or file_preset
        for k, v in data.items():
            if k not in fields:
                raise ValueError(f"unknown config key {k!r} in {path}")
            values[k] = v
    env = os.environ if env is None else env
    for name, f in fields.items():
        key = ENV_PREFIX + name.upper()
        if key in env:
            values[name] = _coerce(f, env[key])
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in fields:
            raise ValueError(f"unknown config key {k!r}")
        values[k] = _coerce(fields[k], v)
    if preset not in (None, "default", "simulation"):
        raise ValueError(f"unknown preset {preset!r}")
    if preset == "simulation":
        return PlannerConfig.simulation(**values)
    return PlannerConfig(**values)
