"""Daisy-chained scan bus: event schedule and closed-form timing model.

One controller walks every taxel coordinate. At each coordinate it reads
each peripheral in turn under its chip select. It then pulses CNT, which
advances every peripheral's counters together, and waits for the analog
filter to settle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple, Union

from .crossbar import AdcConfig, DriveConfig, ResistanceGrid, scan_frame
from .frame import Frame


class SignalIntegrityWarning(UserWarning):
    """SPI clock above the configured integrity limit."""


@dataclass(frozen=True)
class BusConfig:
    n_peripherals: int = 1
    spi_clock_hz: float = 14e6
    bits_per_transfer: int = 16
    t_proc: float = 1.08e-6
    t_delay: float = 1e-6
    n_in: int = 16
    n_out: int = 64
    # host-side cost per frame (formatting, USB); not part of the scan itself
    frame_overhead: float = 0.0
    integrity_limit_hz: float = 14e6

    def __post_init__(self):
        if not 1 <= self.n_peripherals <= 8:
            raise ValueError("n_peripherals must be in 1..8")
        if not (math.isfinite(self.spi_clock_hz) and self.spi_clock_hz > 0):
            raise ValueError("spi_clock_hz must be > 0")
        if self.bits_per_transfer < 1:
            raise ValueError("bits_per_transfer must be >= 1")
        for name in ("t_proc", "t_delay", "frame_overhead"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if not (1 <= self.n_in <= 16 and 1 <= self.n_out <= 64):
            raise ValueError("n_in must be in 1..16 and n_out in 1..64")
        if not self.integrity_limit_hz > 0:
            raise ValueError("integrity_limit_hz must be > 0")

    @property
    def t_spi(self) -> float:
        return self.bits_per_transfer / self.spi_clock_hz

    @property
    def taxels(self) -> int:
        return self.n_in * self.n_out

    def check_integrity(self):
        if self.spi_clock_hz > self.integrity_limit_hz:
            warnings.warn(
                f"SPI clock {self.spi_clock_hz / 1e6:g} MHz exceeds the "
                f"{self.integrity_limit_hz / 1e6:g} MHz integrity limit; "
                "data degradation is not modelled",
                SignalIntegrityWarning,
                stacklevel=3,
            )


def _slot(bus: BusConfig) -> float:
    return bus.t_spi + bus.t_proc


def _taxel_period(bus: BusConfig) -> float:
    return bus.n_peripherals * _slot(bus) + bus.t_delay


def total_scan_time(bus: BusConfig) -> float:
    """Seconds for one full scan of every peripheral."""
    return bus.n_out * bus.n_in * _taxel_period(bus)


def frame_period(bus: BusConfig) -> float:
    """Scan time plus the per-frame host overhead."""
    return total_scan_time(bus) + bus.frame_overhead


def frame_rate(bus: BusConfig, include_overhead: bool = False) -> float:
    return 1.0 / (frame_period(bus) if include_overhead else total_scan_time(bus))


class EventKind(str, Enum):
    CLR_PULSE = "ClrPulse"
    CS_LOW = "CsLow"
    SPI_TRANSFER = "SpiTransfer"
    CS_HIGH = "CsHigh"
    CNT_PULSE = "CntPulse"
    SETTLE_WAIT = "SettleWait"


@dataclass(frozen=True)
class ScanEvent:
    time: float
    kind: EventKind
    peripheral: Optional[int] = None
    taxel: Optional[int] = None
    end: Optional[float] = None

    def __post_init__(self):
        if self.end is None:
            object.__setattr__(self, "end", self.time)

    @property
    def duration(self) -> float:
        return self.end - self.time


@dataclass(frozen=True)
class ScanTrace:
    bus: BusConfig
    events: Tuple[ScanEvent, ...]

    @property
    def end_time(self) -> float:
        return self.events[-1].end

    def count(self, kind: EventKind) -> int:
        return sum(1 for e in self.events if e.kind is kind)

    def __len__(self):
        return len(self.events)


def schedule_scan(bus: BusConfig) -> ScanTrace:
    """Event-level schedule of one frame, in emission order.

    Event times are computed from integer step counts rather than
    accumulated, so the trace ends exactly at :func:`total_scan_time`.
    Instantaneous events share timestamps with their neighbours; emission
    order breaks the ties.
    """
    bus.check_integrity()
    slot = _slot(bus)
    period = _taxel_period(bus)
    n = bus.n_peripherals
    events: List[ScanEvent] = [ScanEvent(0.0, EventKind.CLR_PULSE)]
    for i in range(bus.n_out):
        for j in range(bus.n_in):
            s = i * bus.n_in + j
            t_s = s * period
            for k in range(n):
                t0 = t_s + k * slot
                events.append(ScanEvent(t0, EventKind.CS_LOW, k, s))
                events.append(ScanEvent(t0, EventKind.SPI_TRANSFER, k, s, t_s + (k + 1) * slot))
                events.append(ScanEvent(t_s + (k + 1) * slot, EventKind.CS_HIGH, k, s))
            t_cnt = t_s + n * slot
            events.append(ScanEvent(t_cnt, EventKind.CNT_PULSE, None, s))
            events.append(ScanEvent(t_cnt, EventKind.SETTLE_WAIT, None, s, (s + 1) * period))
    return ScanTrace(bus, tuple(events))


GridSource = Union[Sequence[ResistanceGrid], Callable[[int, float], Sequence[ResistanceGrid]]]


def acquire_frames(
    grids: GridSource,
    drive: DriveConfig,
    adc: AdcConfig,
    bus: BusConfig,
    n_frames: int,
    sensor_ids: Optional[Sequence[int]] = None,
    t_start: float = 0.0,
) -> List[Tuple[Tuple[Frame, ...], float]]:
    """Run ``n_frames`` scans of the bus.

    ``grids`` is either one grid per peripheral or a callable
    ``(frame_index, t) -> grids`` for a time-varying stimulus. Each frame is
    stamped with its completion time, and frames are ``frame_period(bus)``
    apart.
    """
    if n_frames < 0:
        raise ValueError("n_frames must be >= 0")
    ids = list(range(bus.n_peripherals)) if sensor_ids is None else list(sensor_ids)
    if len(ids) != bus.n_peripherals:
        raise ValueError("sensor_ids length must equal n_peripherals")
    bus.check_integrity()
    period = frame_period(bus)
    static = None if callable(grids) else _check_grids(grids, bus)
    cached = None
    out = []
    for f in range(n_frames):
        t_begin = t_start + f * period
        t_done = t_begin + total_scan_time(bus)
        if static is not None:
            if cached is None:
                cached = [scan_frame(g, drive, adc, sid).codes for g, sid in zip(static, ids)]
            codes = cached
        else:
            current = _check_grids(grids(f, t_begin), bus)
            codes = [scan_frame(g, drive, adc, sid).codes for g, sid in zip(current, ids)]
        frames = tuple(Frame(sid, c, t_done) for sid, c in zip(ids, codes))
        out.append((frames, t_done))
    return out


def _check_grids(grids, bus: BusConfig):
    grids = list(grids)
    if len(grids) != bus.n_peripherals:
        raise ValueError(f"{len(grids)} grids for {bus.n_peripherals} peripherals")
    for g in grids:
        if g.shape != (bus.n_in, bus.n_out):
            raise ValueError(f"grid shape {g.shape} does not match bus {bus.n_in} x {bus.n_out}")
    return grids
