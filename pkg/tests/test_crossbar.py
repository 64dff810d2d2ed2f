import itertools

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fabsense.crossbar import (
    AdcConfig,
    DriveConfig,
    DriveMode,
    PressureField,
    ResistanceGrid,
    ResistanceLaw,
    quantize,
    readout_matrix,
    scan_frame,
    solve_network,
    solve_readout,
)
from fabsense.experiments import CROSSTALK_GHOST, CROSSTALK_PRESSED
from fabsense.frame import from_scan_order


def _two_by_two_oracle():
    """Mitigated-mode output of a 2x2 grid from hand-written KCL, solved symbolically.

    Reading (0, 0): row 0 is switched to v_in, row 1 to ground, column 0 is
    routed through the mux to the virtual ground and column 1 leaks to ground.
    """
    r00, r01, r10, r11, rsw, rmux, rleak, vin, rf = sp.symbols("r00 r01 r10 r11 rsw rmux rleak vin rf", positive=True)
    a, b, c, d = sp.symbols("a b c d")  # row0, row1, col0, col1
    eqs = [
        (a - vin) / rsw + (a - c) / r00 + (a - d) / r01,
        b / rsw + (b - c) / r10 + (b - d) / r11,
        c / rmux + (c - a) / r00 + (c - b) / r10,
        d / rleak + (d - a) / r01 + (d - b) / r11,
    ]
    sol = sp.solve(eqs, [a, b, c, d], dict=True)[0]
    v_out = rf * sol[c] / rmux
    return sp.lambdify((r00, r01, r10, r11, rsw, rmux, rleak, vin, rf), sp.simplify(v_out), "mpmath")


_ORACLE = _two_by_two_oracle()


def oracle_2x2(r, drive):
    v = _ORACLE(
        *(float(x) for x in r.ravel()),
        drive.r_switch_on,
        drive.r_mux16 + drive.r_mux4,
        drive.r_leak,
        drive.v_in,
        drive.r_f,
    )
    return min(max(float(v), 0.0), drive.v_rail)


def test_law_examples():
    law = ResistanceLaw(r_max=1e6, r_min=100, k=0.1)
    assert law(10.0) == pytest.approx(500050.0, rel=1e-12)
    assert law(0.0) == 1e6
    assert law(1e15) == pytest.approx(100.0, rel=1e-6)


def test_law_rejects_negative_pressure():
    with pytest.raises(ValueError):
        ResistanceLaw()(-1.0)
    with pytest.raises(ValueError):
        ResistanceLaw()(np.nan)


@given(st.floats(0, 1e4), st.floats(0, 1e4))
def test_law_monotone(p, q):
    law = ResistanceLaw()
    lo, hi = sorted((p, q))
    assert law(lo) >= law(hi)
    assert law.r_min <= law(hi) <= law.r_max


def test_quantize_examples():
    adc = AdcConfig()
    assert quantize(3.3, adc) == 4095
    assert quantize(0.0, adc) == 0
    assert quantize(0.1046, adc) == 130
    assert quantize(5.0, adc) == 4095
    assert quantize(-1.0, adc) == 0


def test_one_by_one_ideal():
    grid = ResistanceGrid.uniform(1, 1, 10e3)
    drive = DriveConfig.ideal(r_f=10e3)
    assert solve_readout(grid, drive, 0, 0) == pytest.approx(3.3, rel=1e-12)


def test_two_by_two_default_parasitics_matches_oracle():
    grid = ResistanceGrid.uniform(2, 2, 10e3)
    drive = DriveConfig()
    got = solve_readout(grid, drive, 0, 0)
    assert got == pytest.approx(oracle_2x2(grid.r, drive), rel=1e-9)
    # frozen value of the same network
    assert got == pytest.approx(1.5500157397, rel=1e-9)


def test_naive_sneak_path_ghost():
    r = np.array([[1e3, 1e3], [1e3, 1e6]])
    grid = ResistanceGrid(r)
    naive = solve_readout(grid, DriveConfig(mode=DriveMode.NAIVE), 1, 1)
    mitigated = solve_readout(grid, DriveConfig(), 1, 1)
    # a 3 kOhm sneak path into a 10 kOhm pull-down, versus 1 MOhm direct
    assert naive > 0.5 * 3.3
    assert naive > 50 * 3.3 * 10e3 / (10e3 + 1e6)
    assert naive >= 10 * mitigated


def _random_grid(rng, rows, cols, pressed_frac=0.3):
    law = ResistanceLaw()
    p = np.where(rng.random((rows, cols)) < pressed_frac, rng.uniform(0.1, 200, (rows, cols)), 0.0)
    return ResistanceGrid.from_pressure(PressureField(p), law)


@pytest.mark.parametrize("mode", list(DriveMode))
def test_kcl_residual(mode):
    rng = np.random.default_rng(1)
    drive = DriveConfig(mode=mode)
    for _ in range(10):
        grid = _random_grid(rng, 16, 64)
        a, b = int(rng.integers(16)), int(rng.integers(64))
        sol = solve_network(grid, drive, a, b)
        injected = abs(sol.source_current())
        assert np.max(np.abs(sol.kcl_residual())) < 1e-9 * injected


@settings(max_examples=30, deadline=None)
@given(st.sets(st.tuples(st.integers(0, 7), st.integers(0, 11)), min_size=1, max_size=20), st.floats(0.5, 500))
def test_ideal_drive_reads_each_taxel_in_isolation(pressed, pressure):
    p = np.zeros((8, 12))
    for t in pressed:
        p[t] = pressure
    grid = ResistanceGrid.from_pressure(PressureField(p), ResistanceLaw())
    drive = DriveConfig.ideal()
    got = readout_matrix(grid, drive)
    expected = np.clip(drive.v_in * drive.r_f / grid.r, 0, drive.v_rail)
    np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-15)
    untouched = p == 0
    assert np.all(quantize(got[untouched], AdcConfig()) == 0)


def _pattern_grid(shape=(16, 64), pressed=CROSSTALK_PRESSED, pressure=100.0):
    p = np.zeros(shape)
    for t in pressed:
        p[t] = pressure
    return ResistanceGrid.from_pressure(PressureField(p), ResistanceLaw())


@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-6, 50.0)), min_size=2, max_size=6))
@settings(max_examples=25, deadline=None)
def test_ghost_monotone_in_switch_resistance(values):
    grid = _pattern_grid()
    ghosts = [solve_readout(grid, DriveConfig(r_switch_on=r), *CROSSTALK_GHOST) for r in sorted(values)]
    assert all(b >= a - 1e-15 for a, b in zip(ghosts, ghosts[1:]))


def test_gain_linear_in_feedback_resistor():
    grid = _random_grid(np.random.default_rng(2), 16, 64)
    v1 = readout_matrix(grid, DriveConfig(r_f=1e3))
    v2 = readout_matrix(grid, DriveConfig(r_f=2e3))
    unclamped = v2 < 3.3
    np.testing.assert_allclose(v2[unclamped], 2 * v1[unclamped], rtol=1e-9, atol=1e-18)
    assert np.all(v2[~unclamped] == 3.3)


def test_naive_ghost_dominates_mitigated():
    grid = _pattern_grid()
    naive = solve_readout(grid, DriveConfig(mode=DriveMode.NAIVE), *CROSSTALK_GHOST)
    mitigated = solve_readout(grid, DriveConfig(), *CROSSTALK_GHOST)
    assert naive >= 10 * mitigated


@pytest.mark.parametrize("mode", list(DriveMode))
def test_permutation_equivariance(mode):
    rng = np.random.default_rng(3)
    grid = _random_grid(rng, 6, 9)
    rp, cp = rng.permutation(6), rng.permutation(9)
    drive = DriveConfig(mode=mode)
    base = readout_matrix(grid, drive)
    perm = readout_matrix(ResistanceGrid(grid.r[np.ix_(rp, cp)]), drive)
    np.testing.assert_allclose(perm, base[np.ix_(rp, cp)], rtol=1e-9, atol=1e-15)


@pytest.mark.parametrize(
    "drive",
    [DriveConfig(), DriveConfig(mode=DriveMode.NAIVE), DriveConfig(mux_offsets=[0.1 * k for k in range(7)])],
    ids=["mitigated", "naive", "offsets"],
)
def test_fast_path_matches_per_taxel(drive):
    grid = _random_grid(np.random.default_rng(4), 5, 7)
    fast = readout_matrix(grid, drive)
    slow = np.array([[solve_readout(grid, drive, a, b) for b in range(7)] for a in range(5)])
    np.testing.assert_allclose(fast, slow, rtol=1e-9, atol=1e-15)


def test_untouched_baseline_small():
    grid = ResistanceGrid.uniform(16, 64, ResistanceLaw().r_max)
    frame = scan_frame(grid, DriveConfig(r_f=10e3))
    assert frame.codes.max() < 0.01 * 4095


def test_uniform_pressure_frame_is_flat():
    law = ResistanceLaw()
    grid = ResistanceGrid.from_pressure(PressureField(np.full((16, 64), 0.2)), law)
    codes = scan_frame(grid).codes
    assert codes.max() - codes.min() <= 1
    assert codes.min() > 0


def test_single_pressed_taxel():
    p = np.zeros((16, 64))
    p[3, 17] = 50.0
    frame = scan_frame(ResistanceGrid.from_pressure(PressureField(p), ResistanceLaw()))
    m = from_scan_order(frame.codes)
    assert m[3, 17] == m.max() and m[3, 17] > 1000
    others = np.delete(m.ravel(), 3 * 64 + 17)
    assert others.max() <= 0.033 * 4095


def test_drive_validation_names_field():
    with pytest.raises(ValueError, match="r_f"):
        DriveConfig(r_f=0)
    with pytest.raises(ValueError, match="mode"):
        DriveConfig(mode="sideways")
    with pytest.raises(ValueError, match="r_switch_on"):
        DriveConfig(r_switch_on=-1)


def test_pressure_field_validation():
    with pytest.raises(ValueError):
        PressureField(np.full((17, 4), 1.0))
    with pytest.raises(ValueError):
        PressureField(np.array([[1.0, -2.0]]))


def test_scan_order_layout():
    r = np.full((16, 64), 1e8)
    r[2, 5] = 1e3
    frame = scan_frame(ResistanceGrid(r))
    assert int(np.argmax(frame.codes)) == 5 * 16 + 2


def test_solver_handles_all_index_pairs_small():
    grid = ResistanceGrid.uniform(2, 3, 5e3)
    for a, b in itertools.product(range(2), range(3)):
        assert 0 < solve_readout(grid, DriveConfig(), a, b) <= 3.3
    with pytest.raises(IndexError):
        solve_readout(grid, DriveConfig(), 2, 0)
