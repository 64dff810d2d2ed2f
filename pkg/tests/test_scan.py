import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fabsense.crossbar import AdcConfig, DriveConfig, PressureField, ResistanceGrid, ResistanceLaw
from fabsense.scan import (
    BusConfig,
    EventKind,
    SignalIntegrityWarning,
    acquire_frames,
    frame_rate,
    schedule_scan,
    total_scan_time,
)


def hand_total(n, clock=14e6):
    # 1024 taxels, 16-bit transfers, 1.08 us processing, 1 us settle
    return 1024 * (n * (16 / clock + 1.08e-6) + 1e-6)


@pytest.mark.parametrize("n, ms, hand_ms", [(8, 19.23, 19.23), (1, 3.30, 3.300), (3, 7.85, 7.853)])
def test_total_scan_time_examples(n, ms, hand_ms):
    t = total_scan_time(BusConfig(n_peripherals=n))
    assert t == pytest.approx(hand_total(n), rel=1e-12)
    assert float(f"{t * 1e3:.4g}") == hand_ms
    assert round(t * 1e3, 2) == ms


def test_frame_rates():
    assert frame_rate(BusConfig(n_peripherals=8)) == pytest.approx(52.0, abs=0.05)
    assert round(frame_rate(BusConfig(n_peripherals=1))) == 303
    assert round(frame_rate(BusConfig(n_peripherals=3))) == 127


def test_frame_overhead_only_in_adjusted_rate():
    bus = BusConfig(frame_overhead=0.6e-3)
    assert frame_rate(bus) == pytest.approx(1 / total_scan_time(bus))
    assert frame_rate(bus, include_overhead=True) == pytest.approx(1 / (total_scan_time(bus) + 0.6e-3))


@given(st.integers(1, 7), st.floats(1e6, 50e6))
def test_linear_in_peripherals(n, clock):
    a = BusConfig(n_peripherals=n, spi_clock_hz=clock)
    b = replace(a, n_peripherals=n + 1)
    step = 64 * 16 * (a.t_spi + a.t_proc)
    assert total_scan_time(b) - total_scan_time(a) == pytest.approx(step, rel=1e-9)


@given(st.integers(1, 8), st.floats(1e6, 50e6), st.floats(1e6, 50e6))
def test_rate_increases_with_clock(n, c1, c2):
    lo, hi = sorted((c1, c2))
    assert frame_rate(BusConfig(n_peripherals=n, spi_clock_hz=lo)) <= frame_rate(
        BusConfig(n_peripherals=n, spi_clock_hz=hi)
    )


@pytest.mark.parametrize("n", [1, 2, 3, 8])
def test_trace_matches_formula(n):
    bus = BusConfig(n_peripherals=n)
    trace = schedule_scan(bus)
    assert trace.end_time == total_scan_time(bus)
    assert trace.count(EventKind.CNT_PULSE) == 1024
    assert trace.count(EventKind.CLR_PULSE) == 1
    assert trace.count(EventKind.SPI_TRANSFER) == 1024 * n
    times = [e.time for e in trace.events]
    assert all(b >= a for a, b in zip(times, times[1:]))


def test_trace_peripheral_order():
    trace = schedule_scan(BusConfig(n_peripherals=2))
    between = []
    for e in trace.events:
        if e.kind is EventKind.SPI_TRANSFER:
            between.append(e.peripheral)
        elif e.kind is EventKind.CNT_PULSE:
            assert between == [0, 1]
            between = []


def test_trace_first_taxel_ends_on_first_cnt_cycle():
    bus = BusConfig(n_peripherals=3)
    trace = schedule_scan(bus)
    settle = [e for e in trace.events if e.kind is EventKind.SETTLE_WAIT]
    assert settle[0].duration == pytest.approx(1e-6)
    assert settle[-1].end == trace.end_time


def _grid(pressed=((3, 3),)):
    p = np.zeros((16, 64))
    for t in pressed:
        p[t] = 20.0
    return ResistanceGrid.from_pressure(PressureField(p), ResistanceLaw())


def test_acquire_empty():
    assert acquire_frames([_grid()], DriveConfig(), AdcConfig(), BusConfig(), 0) == []


def test_acquire_spacing_and_identity():
    bus = BusConfig(n_peripherals=3)
    out = acquire_frames([_grid()] * 3, DriveConfig(), AdcConfig(), bus, 10)
    times = np.array([t for _, t in out])
    np.testing.assert_allclose(np.diff(times), 7.85e-3, rtol=1e-3)
    np.testing.assert_allclose(np.diff(times), total_scan_time(bus), rtol=1e-12)
    for frames, t in out:
        assert [f.sensor_id for f in frames] == [0, 1, 2]
        assert all(np.array_equal(frames[0].codes, f.codes) for f in frames)
        assert all(f.t_acquired == t for f in frames)


def test_acquire_time_varying_stimulus():
    def stim(k, t):
        return [_grid(((k % 16, 0),))]

    out = acquire_frames(stim, DriveConfig(), AdcConfig(), BusConfig(), 3)
    peaks = [int(np.argmax(frames[0].codes)) for frames, _ in out]
    assert peaks == [0, 1, 2]


def test_acquire_rejects_mismatch():
    with pytest.raises(ValueError):
        acquire_frames([_grid()], DriveConfig(), AdcConfig(), BusConfig(n_peripherals=2), 1)
    small = ResistanceGrid.uniform(8, 64, 1e8)
    with pytest.raises(ValueError):
        acquire_frames([small], DriveConfig(), AdcConfig(), BusConfig(), 1)


def test_integrity_warning():
    with pytest.warns(SignalIntegrityWarning):
        schedule_scan(BusConfig(spi_clock_hz=28e6))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        schedule_scan(BusConfig(spi_clock_hz=14e6))


def test_bus_validation():
    with pytest.raises(ValueError, match="n_peripherals"):
        BusConfig(n_peripherals=9)
    with pytest.raises(ValueError, match="spi_clock_hz"):
        BusConfig(spi_clock_hz=0)
