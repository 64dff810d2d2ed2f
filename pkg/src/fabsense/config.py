"""Run configuration: one YAML block per component, flat keys in each.

Unknown blocks and keys are rejected. Every validation error names the
offending ``block.key``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .crossbar import AdcConfig, DriveConfig, ResistanceLaw
from .pipeline import HampelConfig
from .scan import BusConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ArrayConfig:
    rows: int = 16
    cols: int = 64

    def __post_init__(self):
        if not 1 <= self.rows <= 16:
            raise ValueError("rows must be in 1..16")
        if not 1 <= self.cols <= 64:
            raise ValueError("cols must be in 1..64")


@dataclass(frozen=True)
class ScanRunConfig:
    frames: int = 20
    # stimulus: none | crosstalk | cylinder
    pattern: str = "cylinder"
    # probability per taxel sample of an injected EMI spike
    spike_rate: float = 0.0
    spike_amplitude: int = 2000

    def __post_init__(self):
        if self.frames < 0:
            raise ValueError("frames must be >= 0")
        if self.pattern not in ("none", "crosstalk", "cylinder"):
            raise ValueError("pattern must be one of none, crosstalk, cylinder")
        if not 0 <= self.spike_rate <= 1:
            raise ValueError("spike_rate must be in [0, 1]")
        if self.spike_amplitude < 0:
            raise ValueError("spike_amplitude must be >= 0")


@dataclass(frozen=True)
class FramerateConfig:
    clocks: Tuple[float, ...] = (7e6, 14e6, 21e6, 28e6, 35e6, 42e6)
    n: Tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)

    def __post_init__(self):
        object.__setattr__(self, "clocks", tuple(float(c) for c in self.clocks))
        object.__setattr__(self, "n", tuple(int(x) for x in self.n))
        if not self.clocks or any(c <= 0 for c in self.clocks):
            raise ValueError("clocks must be a non-empty list of positive rates")
        if not self.n or any(not 1 <= x <= 8 for x in self.n):
            raise ValueError("n must be a non-empty list within 1..8")


@dataclass(frozen=True)
class CrosstalkConfig:
    pressed: Tuple[Tuple[int, int], ...] = ((4, 4), (4, 8), (9, 4))
    ghost: Tuple[int, int] = (9, 8)
    pressure: float = 100.0

    def __post_init__(self):
        try:
            pressed = tuple((int(r), int(c)) for r, c in self.pressed)
            ghost = tuple(int(x) for x in self.ghost)
        except (TypeError, ValueError):
            raise ValueError("pressed and ghost must be [row, col] pairs") from None
        if len(ghost) != 2:
            raise ValueError("ghost must be a [row, col] pair")
        if ghost in pressed:
            raise ValueError("ghost must not be one of the pressed taxels")
        if not self.pressure > 0:
            raise ValueError("pressure must be > 0")
        object.__setattr__(self, "pressed", pressed)
        object.__setattr__(self, "ghost", ghost)


@dataclass(frozen=True)
class GainConfig:
    rf_values: Tuple[float, ...] = (1e3, 2e3, 5e3, 1e4, 2e4, 5e4, 1e5)
    mass_kg: float = 0.5
    diameter_m: float = 0.05
    taxel_pitch_m: float = 0.01

    def __post_init__(self):
        rf = tuple(float(x) for x in self.rf_values)
        if not rf or any(x <= 0 for x in rf) or list(rf) != sorted(rf):
            raise ValueError("rf_values must be positive and ascending")
        if not (self.mass_kg > 0 and self.diameter_m > 0 and self.taxel_pitch_m > 0):
            raise ValueError("mass_kg, diameter_m and taxel_pitch_m must be > 0")
        object.__setattr__(self, "rf_values", rf)


@dataclass(frozen=True)
class LatencyConfig:
    ft_rate: float = 300.0
    tactile_rate: float = 120.0
    true_latency: float = 27.3e-3
    trials: int = 100
    true_jitter: float = 0.0
    rise: float = 0.025
    fall: float = 0.025
    amplitude: float = 1.0
    ft_gain: float = 1.0
    shared_clock: bool = False
    record_length: float = 0.6

    def __post_init__(self):
        if not (self.ft_rate > 0 and self.tactile_rate > 0):
            raise ValueError("ft_rate and tactile_rate must be > 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.true_latency < 0 or self.true_jitter < 0:
            raise ValueError("true_latency and true_jitter must be >= 0")
        if not (self.rise > 0 and self.fall > 0 and self.amplitude > 0 and self.ft_gain > 0):
            raise ValueError("rise, fall, amplitude and ft_gain must be > 0")


@dataclass(frozen=True)
class GraspConfig:
    k_p: float = 2e-3
    feedback: str = "both"  # on | off | both
    duration: float = 4.0
    ramp_time: float = 2.0
    p_peak: float = 200.0
    p_antagonist: float = 20.0
    box_stiffness: float = 1500.0
    crush_threshold: float = 0.03

    def __post_init__(self):
        if self.k_p < 0:
            raise ValueError("k_p must be >= 0")
        if self.feedback not in ("on", "off", "both"):
            raise ValueError("feedback must be one of on, off, both")
        if not (self.duration > 0 and self.ramp_time > 0):
            raise ValueError("duration and ramp_time must be > 0")
        if self.p_peak < 0 or self.p_antagonist < 0:
            raise ValueError("p_peak and p_antagonist must be >= 0")
        if not (self.box_stiffness > 0 and self.crush_threshold > 0):
            raise ValueError("box_stiffness and crush_threshold must be > 0")


_BLOCKS = {
    "array": ArrayConfig,
    "law": ResistanceLaw,
    "drive": DriveConfig,
    "adc": AdcConfig,
    "bus": BusConfig,
    "hampel": HampelConfig,
    "scan": ScanRunConfig,
    "framerate": FramerateConfig,
    "crosstalk": CrosstalkConfig,
    "gain": GainConfig,
    "latency": LatencyConfig,
    "grasp": GraspConfig,
}


@dataclass(frozen=True)
class RunConfig:
    array: ArrayConfig = ArrayConfig()
    law: ResistanceLaw = ResistanceLaw()
    drive: DriveConfig = DriveConfig()
    adc: AdcConfig = AdcConfig()
    bus: BusConfig = BusConfig()
    hampel: HampelConfig = HampelConfig()
    scan: ScanRunConfig = ScanRunConfig()
    framerate: FramerateConfig = FramerateConfig()
    crosstalk: CrosstalkConfig = CrosstalkConfig()
    gain: GainConfig = GainConfig()
    latency: LatencyConfig = LatencyConfig()
    grasp: GraspConfig = GraspConfig()
    seed: int = 0
    output_dir: str = "results"

    def to_dict(self) -> Dict[str, Any]:
        return _plain(dataclasses.asdict(self))


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if hasattr(x, "value") and isinstance(x.value, str):  # enums
        return x.value
    return x


def _coerce(block: str, key: str, value, default):
    where = f"{block}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, str):
            # YAML 1.1 reads "14e6" as a string
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple) and not isinstance(value, (list, tuple)):
        raise ConfigError(f"{where}: expected a list, got {value!r}")
    return value


def _build_block(block: str, cls, values: Dict[str, Any]):
    if not isinstance(values, dict):
        raise ConfigError(f"{block}: expected a mapping of keys")
    defaults = {f.name: getattr(cls(), f.name) for f in fields(cls)}
    unknown = sorted(set(values) - set(defaults))
    if unknown:
        raise ConfigError(f"{block}.{unknown[0]}: unknown key (allowed: {', '.join(sorted(defaults))})")
    kwargs = {k: _coerce(block, k, v, defaults[k]) for k, v in values.items()}
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        named = [k for k in defaults if k in msg]
        key = max(named, key=len) if named else next(iter(kwargs), "?")
        raise ConfigError(f"{block}.{key}: {msg}") from None


def config_from_dict(data: Optional[Dict[str, Any]]) -> RunConfig:
    data = dict(data or {})
    unknown = sorted(set(data) - set(_BLOCKS) - {"seed", "output_dir"})
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown top-level key")
    kwargs: Dict[str, Any] = {}
    for block, cls in _BLOCKS.items():
        if block in data and data[block] is not None:
            kwargs[block] = _build_block(block, cls, data[block])
    if "seed" in data:
        seed = data["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")
        kwargs["seed"] = seed
    if "output_dir" in data:
        if not isinstance(data["output_dir"], str):
            raise ConfigError("output_dir: expected a string path")
        kwargs["output_dir"] = data["output_dir"]
    cfg = RunConfig(**kwargs)
    _cross_check(cfg)
    return cfg


def _cross_check(cfg: RunConfig):
    ct = cfg.crosstalk
    for r, c in ct.pressed + (ct.ghost,):
        if not (0 <= r < cfg.array.rows and 0 <= c < cfg.array.cols):
            raise ConfigError(f"crosstalk.pressed: taxel ({r}, {c}) outside the {cfg.array.rows} x {cfg.array.cols} array")
    if cfg.drive.mux_offsets is not None and len(cfg.drive.mux_offsets) != cfg.array.cols:
        raise ConfigError(f"drive.mux_offsets: needs {cfg.array.cols} entries")
    if (cfg.bus.n_in, cfg.bus.n_out) != (cfg.array.rows, cfg.array.cols):
        raise ConfigError("bus.n_in: bus n_in/n_out must match array rows/cols")


def load_config(path: Optional[Path], overrides: Optional[List[str]] = None) -> RunConfig:
    """Read a YAML config, then apply ``block.key=value`` overrides."""
    data: Dict[str, Any] = {}
    if path is not None:
        with open(path) as fh:
            try:
                loaded = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: not valid YAML ({exc})") from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        data = loaded or {}
    for item in overrides or []:
        apply_override(data, item)
    return config_from_dict(data)


def apply_override(data: Dict[str, Any], item: str):
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {item!r}: expected block.key=value")
    value = yaml.safe_load(raw) if raw else None
    parts = key.split(".")
    if len(parts) == 1:
        data[parts[0]] = value
    elif len(parts) == 2:
        block = data.setdefault(parts[0], {})
        if not isinstance(block, dict):
            raise ConfigError(f"{parts[0]}: expected a mapping of keys")
        block[parts[1]] = value
    else:
        raise ConfigError(f"override {item!r}: keys are at most two levels deep")
