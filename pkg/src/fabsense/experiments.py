"""Characterisation harnesses: frame rate, crosstalk, gain and latency.

Every harness is a deterministic function of its arguments, including the
seed, and has a matching ``write_*`` helper for its CSV report.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .crossbar import (
    AdcConfig,
    DriveConfig,
    PressureField,
    ResistanceGrid,
    ResistanceLaw,
    quantize,
    scan_frame,
    solve_readout,
)
from .pipeline import normalized_total_activation
from .scan import BusConfig, total_scan_time

Taxel = Tuple[int, int]

CROSSTALK_PRESSED: Tuple[Taxel, ...] = ((4, 4), (4, 8), (9, 4))
CROSSTALK_GHOST: Taxel = (9, 8)


class TrialError(RuntimeError):
    """A latency trial whose sampled pulse has no unique peak."""


# --- frame rate ---------------------------------------------------------


def framerate_sweep(
    clocks: Iterable[float], n_range: Iterable[int], base: BusConfig = BusConfig()
) -> List[Tuple[float, int, float]]:
    """Model frame rate for every (clock, peripheral count) cell."""
    n_range = list(n_range)
    rows = []
    for clock in clocks:
        for n in n_range:
            bus = replace(base, spi_clock_hz=float(clock), n_peripherals=int(n))
            rows.append((float(clock), int(n), 1.0 / total_scan_time(bus)))
    return rows


def write_framerate(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("clock_hz", "n", "fps"))
    for clock, n, fps in rows:
        w.writerow((repr(clock), n, repr(fps)))


# --- crosstalk ----------------------------------------------------------


@dataclass(frozen=True)
class CrosstalkReport:
    mode: str
    pressed_mean_code: float
    ghost_mean_code: float
    crosstalk_pct: float


def crosstalk_experiment(
    law: ResistanceLaw = ResistanceLaw(),
    drive: DriveConfig = DriveConfig(),
    adc: AdcConfig = AdcConfig(),
    pressed: Sequence[Taxel] = CROSSTALK_PRESSED,
    ghost: Taxel = CROSSTALK_GHOST,
    pressure: float = 100.0,
    shape: Tuple[int, int] = (16, 64),
) -> CrosstalkReport:
    """Press ``pressed`` at ``pressure`` kPa and read the untouched ``ghost``.

    Crosstalk is the ghost code as a percentage of the mean pressed code.
    """
    rows, cols = shape
    pressed = [tuple(map(int, t)) for t in pressed]
    ghost = tuple(map(int, ghost))
    for r, c in pressed + [ghost]:
        if not (0 <= r < rows and 0 <= c < cols):
            raise ValueError(f"taxel ({r}, {c}) outside {rows} x {cols} array")
    if not pressed:
        raise ValueError("at least one pressed taxel is required")
    if ghost in pressed:
        raise ValueError("ghost taxel must not be pressed")
    p = np.zeros(shape)
    for t in pressed:
        p[t] = pressure
    grid = ResistanceGrid.from_pressure(PressureField(p), law)
    pressed_codes = [quantize(solve_readout(grid, drive, r, c), adc) for r, c in pressed]
    ghost_code = quantize(solve_readout(grid, drive, *ghost), adc)
    pressed_mean = float(np.mean(pressed_codes))
    pct = 100.0 * ghost_code / pressed_mean if pressed_mean > 0 else 0.0
    return CrosstalkReport(drive.mode.value, pressed_mean, float(ghost_code), pct)


def write_crosstalk(fh, reports: Sequence[CrosstalkReport]):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("mode", "pressed_mean", "ghost_mean", "crosstalk_pct"))
    for r in reports:
        w.writerow((r.mode, repr(r.pressed_mean_code), repr(r.ghost_mean_code), repr(r.crosstalk_pct)))


# --- adjustable gain ----------------------------------------------------


def cylinder_load(
    mass_kg: float = 0.5,
    diameter_m: float = 0.05,
    taxel_pitch_m: float = 0.01,
    center: Tuple[float, float] = (7.5, 31.5),
    shape: Tuple[int, int] = (16, 64),
    g: float = 9.81,
) -> PressureField:
    """Uniform contact pressure of a flat cylinder resting on the array."""
    area = math.pi * diameter_m**2 / 4
    pressure_kpa = mass_kg * g / area / 1e3
    rr, cc = np.mgrid[: shape[0], : shape[1]]
    radius = diameter_m / 2 / taxel_pitch_m
    inside = (rr - center[0]) ** 2 + (cc - center[1]) ** 2 <= radius**2
    return PressureField(np.where(inside, pressure_kpa, 0.0))


def gain_sweep(
    law: ResistanceLaw,
    adc: AdcConfig,
    load: PressureField,
    rf_values: Sequence[float],
    drive: DriveConfig = DriveConfig(),
) -> List[Tuple[float, float]]:
    """Normalised total activation of the loaded sensor at each feedback resistance."""
    rf_values = [float(x) for x in rf_values]
    if any(x <= 0 for x in rf_values):
        raise ValueError("rf_values must be positive")
    if rf_values != sorted(rf_values):
        raise ValueError("rf_values must be sorted ascending")
    grid = ResistanceGrid.from_pressure(load, law)
    out = []
    for rf in rf_values:
        frame = scan_frame(grid, replace(drive, r_f=rf), adc)
        out.append((rf, normalized_total_activation(frame)))
    return out


def write_gain(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("r_f", "activation"))
    for rf, act in rows:
        w.writerow((repr(rf), repr(act)))


# --- latency and jitter -------------------------------------------------


@dataclass(frozen=True)
class ImpactProfile:
    """Raised-cosine impact pulse with separate rise and fall halves (s)."""

    rise: float = 0.025
    fall: float = 0.025
    amplitude: float = 1.0

    def __post_init__(self):
        if not (self.rise > 0 and self.fall > 0 and self.amplitude > 0):
            raise ValueError("rise, fall and amplitude must be > 0")

    def __call__(self, t, center: float):
        dt = np.asarray(t, dtype=float) - center
        up = 0.5 * (1 + np.cos(np.pi * dt / self.rise))
        down = 0.5 * (1 + np.cos(np.pi * dt / self.fall))
        y = np.where(dt < 0, np.where(dt > -self.rise, up, 0.0), np.where(dt < self.fall, down, 0.0))
        return self.amplitude * y


@dataclass(frozen=True)
class LatencyTrialConfig:
    ft_rate: float = 300.0
    tactile_rate: float = 120.0
    true_latency: float = 27.3e-3
    trials: int = 100
    rng_seed: int = 0
    impact_profile: ImpactProfile = ImpactProfile()
    # amplitude of the force-torque reference relative to the tactile channel
    ft_gain: float = 1.0
    # standard deviation of extra per-trial delay on the tactile channel (s)
    true_jitter: float = 0.0
    # sample both channels on one clock with zero phase
    shared_clock: bool = False
    record_length: float = 0.6

    def __post_init__(self):
        if not (self.ft_rate > 0 and self.tactile_rate > 0):
            raise ValueError("sample rates must be > 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.true_latency < 0 or self.true_jitter < 0:
            raise ValueError("true_latency and true_jitter must be >= 0")
        if not self.ft_gain > 0:
            raise ValueError("ft_gain must be > 0")
        span = self.impact_profile.rise + self.impact_profile.fall
        if self.record_length < 2 * span + self.true_latency + 8 * self.true_jitter:
            raise ValueError("record_length too short for the pulse and latency")


@dataclass(frozen=True)
class LatencyResult:
    samples: np.ndarray
    mean: float
    sigma_measured: float


def _peak_time(t: np.ndarray, y: np.ndarray) -> float:
    i = int(np.argmax(y))
    if y[i] <= 0:
        raise TrialError("pulse not observed by the channel")
    top = np.partition(y, -2)[-2:] if y.size > 1 else y
    if y.size > 1 and top[0] == top[1]:
        raise TrialError("no unique peak sample")
    return float(t[i])


def _sample_times(rate: float, phase: float, length: float) -> np.ndarray:
    n = int(math.floor((length - phase) * rate)) + 1
    return phase + np.arange(n) / rate


def run_latency_trials(cfg: LatencyTrialConfig = LatencyTrialConfig()) -> LatencyResult:
    """Recover end-to-end latency by matching sampled peaks of one impact.

    The force-torque reference sees the pulse undelayed. The tactile
    channel sees it ``true_latency`` later, plus optional jitter. Each
    channel reports the timestamp of its largest sample.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    prof = cfg.impact_profile
    span = prof.rise + prof.fall
    out = np.empty(cfg.trials)
    for n in range(cfg.trials):
        if cfg.shared_clock:
            ft_phase = tac_phase = 0.0
        else:
            ft_phase = rng.uniform(0.0, 1.0 / cfg.ft_rate)
            tac_phase = rng.uniform(0.0, 1.0 / cfg.tactile_rate)
        center = rng.uniform(span, span + 1.0 / min(cfg.ft_rate, cfg.tactile_rate))
        extra = rng.normal(0.0, cfg.true_jitter) if cfg.true_jitter > 0 else 0.0
        t_ft = _sample_times(cfg.ft_rate, ft_phase, cfg.record_length)
        t_tac = _sample_times(cfg.tactile_rate, tac_phase, cfg.record_length)
        y_ft = cfg.ft_gain * prof(t_ft, center)
        y_tac = prof(t_tac, center + cfg.true_latency + extra)
        out[n] = _peak_time(t_tac, y_tac) - _peak_time(t_ft, y_ft)
    sigma = float(np.std(out, ddof=1)) if out.size > 1 else 0.0
    return LatencyResult(out, float(np.mean(out)), sigma)


def quantization_uncertainty(rates: Sequence[float]) -> float:
    """Root-sum-square of the half sample period of every channel."""
    rates = list(rates)
    if any(r <= 0 for r in rates):
        raise ValueError("rates must be positive")
    return math.sqrt(sum((0.5 / r) ** 2 for r in rates))


def jitter_decompose(sigma_measured: float, sigma_quant: float) -> float:
    """Jitter left after removing the quantisation share in quadrature."""
    if sigma_measured < 0:
        raise ValueError("sigma_measured must be >= 0")
    # factored difference of squares loses less precision
    return math.sqrt(max((sigma_measured - sigma_quant) * (sigma_measured + sigma_quant), 0.0))


def write_latency(fh, result: LatencyResult):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("trial", "latency_s"))
    for i, x in enumerate(result.samples.tolist()):
        w.writerow((i, repr(x)))


def write_latency_summary(fh, result: LatencyResult, cfg: LatencyTrialConfig):
    sq = quantization_uncertainty([cfg.ft_rate, cfg.tactile_rate])
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("mean", "sigma_measured", "sigma_quant", "sigma_true", "seed"))
    w.writerow(
        (
            repr(result.mean),
            repr(result.sigma_measured),
            repr(sq),
            repr(jitter_decompose(result.sigma_measured, sq)),
            cfg.rng_seed,
        )
    )
