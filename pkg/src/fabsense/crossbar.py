"""Resistive crossbar model of a fabric sensor and its readout electronics.

Rows are the driven inputs and columns the read outputs. Each readout is a
nodal solve over every row and column line: the active row is switched to
``v_in``, and the rest of the network is terminated according to the drive
mode.

``mitigated``
    Inactive rows are switched to ground and the active column is held at
    a virtual ground by a transimpedance amplifier, so the reading is
    ``r_f * I_vg`` clamped to the amplifier rails.
``naive``
    Inactive rows float and every column has a pull-down resistor. The
    reading is the voltage across the active column's pull-down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .frame import Frame, to_scan_order


# smallest non-ideal termination; below this the conductance overflows
MIN_RESISTANCE = 1e-9


class SolverError(ArithmeticError):
    """Raised when the nodal system cannot be solved to a finite result."""


class DriveMode(str, Enum):
    MITIGATED = "mitigated"
    NAIVE = "naive"


@dataclass(frozen=True)
class ResistanceLaw:
    """Saturating inverse-linear pressure to resistance law.

    ``R(p) = r_min + (r_max - r_min) / (1 + k p)``, with ``p`` in kPa.
    """

    r_max: float = 1e8
    r_min: float = 100.0
    k: float = 1000.0

    def __post_init__(self):
        if not (math.isfinite(self.r_max) and math.isfinite(self.r_min)):
            raise ValueError("r_max and r_min must be finite")
        if not self.r_max > self.r_min > 0:
            raise ValueError("require r_max > r_min > 0")
        if not (math.isfinite(self.k) and self.k > 0):
            raise ValueError("k must be > 0")

    def __call__(self, p):
        return resistance_from_pressure(p, self)


def resistance_from_pressure(p, law: ResistanceLaw):
    """Taxel resistance in ohms for applied pressure ``p`` (kPa).

    Accepts a scalar or an array; raises ``ValueError`` for negative or
    non-finite pressure.
    """
    arr = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("pressure must be finite and >= 0")
    r = law.r_min + (law.r_max - law.r_min) / (1.0 + law.k * arr)
    return float(r) if r.ndim == 0 else r


@dataclass(frozen=True, eq=False)
class PressureField:
    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2:
            raise ValueError("pressure field must be 2-D (rows, cols)")
        rows, cols = p.shape
        if not (1 <= rows <= 16 and 1 <= cols <= 64):
            raise ValueError(f"field shape {p.shape} exceeds 16 x 64")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("pressures must be finite and >= 0")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def rows(self) -> int:
        return self.p.shape[0]

    @property
    def cols(self) -> int:
        return self.p.shape[1]

    @classmethod
    def zeros(cls, rows: int = 16, cols: int = 64) -> "PressureField":
        return cls(np.zeros((rows, cols)))


@dataclass(frozen=True, eq=False)
class ResistanceGrid:
    r: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        if r.ndim != 2 or r.size == 0:
            raise ValueError("resistance grid must be a non-empty 2-D array")
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise ValueError("taxel resistances must be finite and > 0")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @property
    def rows(self) -> int:
        return self.r.shape[0]

    @property
    def cols(self) -> int:
        return self.r.shape[1]

    @property
    def shape(self):
        return self.r.shape

    @classmethod
    def from_pressure(cls, field: PressureField, law: ResistanceLaw) -> "ResistanceGrid":
        return cls(resistance_from_pressure(field.p, law))

    @classmethod
    def uniform(cls, rows: int, cols: int, r: float) -> "ResistanceGrid":
        return cls(np.full((rows, cols), float(r)))


@dataclass(frozen=True)
class DriveConfig:
    v_in: float = 3.3
    r_switch_on: float = 0.35
    r_mux16: float = 2.5
    r_mux4: float = 0.5
    r_f: float = 4.7e3
    mode: DriveMode = DriveMode.MITIGATED
    r_pulldown: float = 10e3
    r_leak: float = 1e9
    v_rail: float = 3.3
    # per-column additive mux on-resistance (flatness), ohms
    mux_offsets: Optional[Sequence[float]] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", DriveMode(self.mode))
        except ValueError:
            raise ValueError(f"mode must be one of {[m.value for m in DriveMode]}") from None
        for name in ("v_in", "r_f", "r_pulldown", "r_leak", "v_rail"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be > 0")
        # zero on-resistance is allowed: it models an ideal switch
        for name in ("r_switch_on", "r_mux16", "r_mux4"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be >= 0")
            if 0 < value < MIN_RESISTANCE:
                raise ValueError(f"{name} must be 0 (ideal) or >= {MIN_RESISTANCE:g} ohm")
        if self.mux_offsets is not None:
            offsets = tuple(float(x) for x in self.mux_offsets)
            if any(not math.isfinite(x) for x in offsets):
                raise ValueError("mux_offsets must be finite")
            object.__setattr__(self, "mux_offsets", offsets)

    @classmethod
    def ideal(cls, **kw) -> "DriveConfig":
        """Drive with zero-resistance switches and multiplexers."""
        return cls(r_switch_on=0.0, r_mux16=0.0, r_mux4=0.0, **kw)

    def column_mux_resistance(self, cols: int) -> np.ndarray:
        r = np.full(cols, self.r_mux16 + self.r_mux4)
        if self.mux_offsets is not None:
            if len(self.mux_offsets) != cols:
                raise ValueError(f"mux_offsets has {len(self.mux_offsets)} entries for {cols} columns")
            r = r + np.asarray(self.mux_offsets)
        if np.any(r < 0):
            raise ValueError("mux on-resistance plus offset must be >= 0")
        return r


@dataclass(frozen=True)
class AdcConfig:
    bits: int = 12
    v_ref: float = 3.3

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 1:
            raise ValueError("bits must be an integer >= 1")
        if not (math.isfinite(self.v_ref) and self.v_ref > 0):
            raise ValueError("v_ref must be > 0")

    @property
    def full_scale(self) -> int:
        return 2 ** int(self.bits) - 1


def quantize(v, adc: AdcConfig = AdcConfig()):
    """ADC code for voltage ``v``: clamp to [0, v_ref], scale, round half up."""
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("voltage must be finite")
    scaled = np.clip(arr, 0.0, adc.v_ref) / adc.v_ref * adc.full_scale
    code = np.floor(scaled + 0.5).astype(np.int64)
    return int(code) if code.ndim == 0 else code


@dataclass(frozen=True, eq=False)
class NodalSolution:
    """Solved node voltages for one readout configuration.

    Node order is rows first, then columns. Every node has exactly one
    termination ``(r_term, v_term)`` to a fixed potential; ``r_term == 0``
    marks an ideal connection.
    """

    grid: ResistanceGrid
    r_term: np.ndarray
    v_term: np.ndarray
    v: np.ndarray
    active_row: int
    active_col: int

    @property
    def row_v(self) -> np.ndarray:
        return self.v[: self.grid.rows]

    @property
    def col_v(self) -> np.ndarray:
        return self.v[self.grid.rows :]

    def taxel_currents(self) -> np.ndarray:
        """Current through every taxel, row to column (A)."""
        return (self.row_v[:, None] - self.col_v[None, :]) / self.grid.r

    def column_inflow(self, col: int) -> float:
        """Net current flowing from the taxels into column ``col``."""
        return float(self.taxel_currents()[:, col].sum())

    def kcl_residual(self) -> np.ndarray:
        """Sum of currents leaving each soft-terminated node.

        Ideally terminated nodes are pinned by their source, so they are
        reported as zero.
        """
        i = self.taxel_currents()
        out = np.concatenate([i.sum(axis=1), -i.sum(axis=0)])
        soft = self.r_term > 0
        res = np.zeros_like(out)
        res[soft] = out[soft] + (self.v[soft] - self.v_term[soft]) / self.r_term[soft]
        return res

    def source_current(self) -> float:
        """Current delivered by the ``v_in`` supply into the active row."""
        return float(self.taxel_currents()[self.active_row].sum())


def _terminations(shape, drive: DriveConfig, row: int, col: int):
    rows, cols = shape
    r_term = np.empty(rows + cols)
    v_term = np.zeros(rows + cols)
    if drive.mode is DriveMode.MITIGATED:
        r_term[:rows] = drive.r_switch_on
        r_term[rows:] = drive.r_leak
        r_term[rows + col] = drive.column_mux_resistance(cols)[col]
    else:
        r_term[:rows] = drive.r_leak
        r_term[row] = drive.r_switch_on
        r_term[rows:] = drive.r_pulldown
    v_term[row] = drive.v_in
    return r_term, v_term


def _laplacian(r: np.ndarray) -> np.ndarray:
    rows, cols = r.shape
    g = 1.0 / r
    n = rows + cols
    lap = np.zeros((n, n))
    lap[:rows, rows:] = -g
    lap[rows:, :rows] = -g.T
    lap[np.arange(rows), np.arange(rows)] = g.sum(axis=1)
    lap[rows + np.arange(cols), rows + np.arange(cols)] = g.sum(axis=0)
    return lap


def _nodal_solve(r: np.ndarray, r_term: np.ndarray, v_term: np.ndarray) -> np.ndarray:
    lap = _laplacian(r)
    hard = r_term == 0
    soft = ~hard
    v = np.zeros(r_term.size)
    v[hard] = v_term[hard]
    if soft.any():
        g_term = 1.0 / r_term[soft]
        a = lap[np.ix_(soft, soft)] + np.diag(g_term)
        b = g_term * v_term[soft] - lap[np.ix_(soft, hard)] @ v[hard]
        try:
            v[soft] = np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular nodal system: {exc}") from exc
    if not np.all(np.isfinite(v)):
        raise SolverError("non-finite node voltage")
    return v


def solve_network(grid: ResistanceGrid, drive: DriveConfig, active_row: int, active_col: int) -> NodalSolution:
    if not (0 <= active_row < grid.rows and 0 <= active_col < grid.cols):
        raise IndexError(f"taxel ({active_row}, {active_col}) outside {grid.shape}")
    r_term, v_term = _terminations(grid.shape, drive, active_row, active_col)
    v = _nodal_solve(grid.r, r_term, v_term)
    return NodalSolution(grid, r_term, v_term, v, active_row, active_col)


def _output_voltage(sol: NodalSolution, drive: DriveConfig) -> float:
    if drive.mode is DriveMode.MITIGATED:
        i_vg = sol.column_inflow(sol.active_col)
        return float(np.clip(drive.r_f * i_vg, 0.0, drive.v_rail))
    return float(sol.col_v[sol.active_col])


def solve_readout(grid: ResistanceGrid, drive: DriveConfig, active_row: int, active_col: int) -> float:
    """Measured output voltage for one taxel."""
    return _output_voltage(solve_network(grid, drive, active_row, active_col), drive)


def readout_matrix(grid: ResistanceGrid, drive: DriveConfig) -> np.ndarray:
    """Output voltage for every taxel, shape (rows, cols).

    Agrees with :func:`solve_readout` taxel by taxel. Mitigated mode with
    non-zero terminations shares one conductance matrix across all active
    rows; selecting a column only swaps its leak for the mux path, a rank-one
    update, so all readings follow from one inverse.
    """
    rows, cols = grid.shape
    if drive.mode is DriveMode.NAIVE:
        out = np.empty(grid.shape)
        for a in range(rows):
            r_term, v_term = _terminations(grid.shape, drive, a, 0)
            v = _nodal_solve(grid.r, r_term, v_term)
            out[a] = v[rows:]
        return out

    r_mux = drive.column_mux_resistance(cols)
    if drive.r_switch_on == 0 or np.any(r_mux == 0):
        out = np.empty(grid.shape)
        for a in range(rows):
            for b in range(cols):
                out[a, b] = solve_readout(grid, drive, a, b)
        return out

    g_sw = 1.0 / drive.r_switch_on
    g_leak = 1.0 / drive.r_leak
    g_mux = 1.0 / r_mux
    base = _laplacian(grid.r)
    diag = np.concatenate([np.full(rows, g_sw), np.full(cols, g_leak)])
    base[np.diag_indices_from(base)] += diag
    try:
        inv = np.linalg.inv(base)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular nodal system: {exc}") from exc
    col_idx = rows + np.arange(cols)
    # open-circuit column voltage per (active row, column), before the mux closes
    v_open = inv[np.ix_(col_idx, np.arange(rows))].T * (drive.v_in * g_sw)
    delta = g_mux - g_leak
    self_r = inv[col_idx, col_idx]
    i_vg = g_mux * v_open / (1.0 + delta * self_r)
    if not np.all(np.isfinite(i_vg)):
        raise SolverError("non-finite virtual-ground current")
    return np.clip(drive.r_f * i_vg, 0.0, drive.v_rail)


def scan_frame(
    grid: ResistanceGrid,
    drive: DriveConfig = DriveConfig(),
    adc: AdcConfig = AdcConfig(),
    sensor_id: int = 0,
    t_acquired: float = 0.0,
) -> Frame:
    """Quantised reading of every taxel, laid out in scan order."""
    codes = quantize(readout_matrix(grid, drive), adc)
    return Frame(sensor_id, to_scan_order(codes), t_acquired)
