"""Planar two-arm grasp of a deformable box, with optional tactile feedback.

Each arm has two antagonistic pneumatic joints. Joint 0 carries the
mid-arm link (sensor X1) and joint 1 the distal link (sensor X2). A chest
sensor X0 sits on the torso. Contact kinematics are linearised about the
grasp pose:

- distal indentation grows with the total curl ``theta0 + theta1``;
- mid-arm indentation grows with ``theta0`` but shrinks as the distal
  joint curls, because the fingertip levers the mid link off the box;
- the box is pulled into the chest in proportion to the arm contact forces.

Box deformation is the deepest indentation at any contact. Contact forces
become uniform pressure patches on the touching sensors. Those pass
through the full sensing chain (crossbar readout, wire encoding, decoding,
Hampel filtering) before the feedback law sees them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .crossbar import AdcConfig, DriveConfig, PressureField, ResistanceGrid, ResistanceLaw, scan_frame
from .frame import N_IN, N_OUT, Frame
from .pipeline import HampelConfig, HampelFilter, normalized_total_activation
from .protocol import StreamDecoder, encode_message
from .scan import BusConfig, total_scan_time

SIDES = ("L", "R")
SENSOR_NAMES = ("L0", "L1", "L2", "R0", "R1", "R2")
SENSOR_IDS = {name: i for i, name in enumerate(SENSOR_NAMES)}
CHEST, MID, DISTAL = 0, 1, 2


def modulate_pressure(p_nominal: float, sensor_sum: float, k_p: float) -> float:
    """Proportional tactile feedback on the grasp-direction pressure (kPa)."""
    if not (math.isfinite(p_nominal) and math.isfinite(sensor_sum) and math.isfinite(k_p)):
        raise ValueError("inputs must be finite")
    if k_p < 0:
        raise ValueError("k_p must be >= 0")
    return max(p_nominal - k_p * sensor_sum, 0.0)


@dataclass(frozen=True)
class JointModel:
    bend_gain: float = 0.01  # rad / kPa of differential pressure
    max_pressure: float = 250.0  # kPa
    time_constant: float = 0.25  # s

    def __post_init__(self):
        if not (self.bend_gain > 0 and self.max_pressure > 0 and self.time_constant > 0):
            raise ValueError("bend_gain, max_pressure and time_constant must be > 0")


@dataclass(frozen=True)
class ArmModel:
    joints: Tuple[JointModel, JointModel] = (JointModel(), JointModel())
    # sensor carried by the link after each joint; the chest sensor has no joint
    sensors: Tuple[int, int] = (MID, DISTAL)
    mid_lever: float = 0.06  # m of mid indentation per rad of joint 0
    mid_lift: float = 0.03  # m of mid relief per rad of joint 1
    mid_gap: float = 0.05  # m
    tip_lever: float = 0.05  # m of tip indentation per rad of total curl
    tip_gap: float = 0.12  # m
    chest_coupling: float = 0.3

    def __post_init__(self):
        if len(self.joints) != 2 or len(self.sensors) != 2:
            raise ValueError("arm model has exactly two joints")
        if min(self.mid_lever, self.tip_lever) <= 0 or min(self.mid_gap, self.tip_gap, self.mid_lift) < 0:
            raise ValueError("levers must be > 0 and gaps >= 0")
        if self.chest_coupling < 0:
            raise ValueError("chest_coupling must be >= 0")

    def indentation(self, theta: np.ndarray) -> Tuple[float, float]:
        """(mid, distal) indentation in metres for joint angles ``theta``."""
        mid = self.mid_lever * theta[0] - self.mid_lift * theta[1] - self.mid_gap
        tip = self.tip_lever * (theta[0] + theta[1]) - self.tip_gap
        return max(mid, 0.0), max(tip, 0.0)


@dataclass(frozen=True)
class BoxModel:
    stiffness: float = 1500.0  # N/m
    crush_threshold: float = 0.03  # m
    width: float = 0.4  # m

    def __post_init__(self):
        if not (self.stiffness > 0 and self.crush_threshold > 0 and self.width > 0):
            raise ValueError("stiffness, crush_threshold and width must be > 0")


@dataclass(frozen=True)
class ContactPatch:
    """Taxel block that a contact loads, and the taxel pitch."""

    row0: int = 6
    col0: int = 29
    rows: int = 4
    cols: int = 6
    taxel_pitch: float = 0.01  # m

    def __post_init__(self):
        if not (0 <= self.row0 and self.row0 + self.rows <= N_IN and 0 <= self.col0 and self.col0 + self.cols <= N_OUT):
            raise ValueError("patch must lie inside the 16 x 64 array")
        if self.rows < 1 or self.cols < 1 or not self.taxel_pitch > 0:
            raise ValueError("patch must be non-empty with positive pitch")

    @property
    def area(self) -> float:
        return self.rows * self.cols * self.taxel_pitch**2

    def field(self, force: float) -> PressureField:
        p = np.zeros((N_IN, N_OUT))
        p[self.row0 : self.row0 + self.rows, self.col0 : self.col0 + self.cols] = force / self.area / 1e3
        return PressureField(p)


@dataclass(frozen=True)
class GraspTrajectory:
    """Nominal grasp-direction pressure per joint over time (kPa)."""

    p_plus: np.ndarray  # (steps, 2)
    p_minus: np.ndarray  # (steps, 2)
    timestep: float

    def __post_init__(self):
        p_plus = np.asarray(self.p_plus, dtype=float)
        p_minus = np.asarray(self.p_minus, dtype=float)
        if p_plus.shape != p_minus.shape or p_plus.ndim != 2 or p_plus.shape[1] != 2:
            raise ValueError("p_plus and p_minus must both have shape (steps, 2)")
        if np.any(p_plus < 0) or np.any(p_minus < 0):
            raise ValueError("pressures must be non-negative")
        if not self.timestep > 0:
            raise ValueError("timestep must be > 0")
        object.__setattr__(self, "p_plus", p_plus)
        object.__setattr__(self, "p_minus", p_minus)

    @property
    def steps(self) -> int:
        return self.p_plus.shape[0]

    @property
    def duration(self) -> float:
        return self.steps * self.timestep

    @classmethod
    def ramp_and_hold(
        cls,
        timestep: float,
        duration: float = 4.0,
        ramp_time: float = 2.0,
        p_peak: float = 200.0,
        p_antagonist: float = 20.0,
    ) -> "GraspTrajectory":
        n = int(round(duration / timestep))
        t = np.arange(n) * timestep
        ramp = p_peak * np.clip(t / ramp_time, 0.0, 1.0)
        p_plus = np.column_stack([ramp, ramp])
        return cls(p_plus, np.full_like(p_plus, p_antagonist), timestep)


@dataclass
class PlantState:
    theta: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))  # (arm, joint)
    forces: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))  # (arm, sensor slot), N
    deformation: float = 0.0
    damaged: bool = False


def step_plant(
    state: PlantState,
    p_plus: np.ndarray,
    p_minus: np.ndarray,
    dt: float,
    arms: Sequence[ArmModel],
    box: BoxModel,
) -> PlantState:
    """Advance joint angles one step and recompute contact.

    ``p_plus`` and ``p_minus`` have shape (arm, joint). Angles relax toward
    ``bend_gain * (p_plus - p_minus)`` with each joint's time constant.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    theta = state.theta.copy()
    forces = np.zeros((len(arms), 3))
    deepest = 0.0
    for a, arm in enumerate(arms):
        for j, joint in enumerate(arm.joints):
            pp = min(max(float(p_plus[a][j]), 0.0), joint.max_pressure)
            pm = min(max(float(p_minus[a][j]), 0.0), joint.max_pressure)
            target = joint.bend_gain * (pp - pm)
            theta[a, j] += (1.0 - math.exp(-dt / joint.time_constant)) * (target - theta[a, j])
        mid, tip = arm.indentation(theta[a])
        forces[a, MID] = box.stiffness * mid
        forces[a, DISTAL] = box.stiffness * tip
        forces[a, CHEST] = arm.chest_coupling * (forces[a, MID] + forces[a, DISTAL])
        deepest = max(deepest, mid, tip, forces[a, CHEST] / box.stiffness)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(forces))):
        raise ArithmeticError("non-finite plant state")
    return PlantState(theta, forces, deepest, state.damaged or deepest > box.crush_threshold)


@dataclass(frozen=True)
class SensingChain:
    law: ResistanceLaw = ResistanceLaw()
    drive: DriveConfig = DriveConfig()
    adc: AdcConfig = AdcConfig()
    hampel: HampelConfig = HampelConfig()
    patch: ContactPatch = ContactPatch()
    spi_clock_hz: float = 14e6

    def bus(self) -> BusConfig:
        return BusConfig(n_peripherals=3, spi_clock_hz=self.spi_clock_hz)


class _SensingLoop:
    """Two three-sensor buses, each with its own decoder and filter."""

    def __init__(self, chain: SensingChain, wire_tap: Optional[Callable[[int, bytes], None]]):
        self.chain = chain
        self.wire_tap = wire_tap
        self.ids = [[SENSOR_IDS[f"{side}{k}"] for k in range(3)] for side in SIDES]
        self.decoders = [StreamDecoder() for _ in SIDES]
        self.filters = [HampelFilter(ids, chain.hampel) for ids in self.ids]
        self._cache: Dict[Tuple[int, float], np.ndarray] = {}

    def _codes(self, sid: int, force: float) -> np.ndarray:
        key = (sid, force)
        codes = self._cache.get(key)
        if codes is None:
            c = self.chain
            grid = ResistanceGrid.from_pressure(c.patch.field(force), c.law)
            codes = scan_frame(grid, c.drive, c.adc, sid).codes
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = codes
        return codes

    def sense(self, forces: np.ndarray, t: float) -> List[Frame]:
        filtered = []
        for b, ids in enumerate(self.ids):
            frames = [Frame(sid, self._codes(sid, float(forces[b, k])), t) for k, sid in enumerate(ids)]
            wire = encode_message(frames)
            if self.wire_tap is not None:
                self.wire_tap(b, wire)
            messages = self.decoders[b].feed(wire)
            if len(messages) != 1:
                raise RuntimeError(f"bus {b}: expected one message, decoded {len(messages)}")
            for frame in messages[0].frames(t):
                filtered.append(self.filters[b].filter_frame(frame)[0])
        return filtered


@dataclass
class GraspReport:
    feedback: bool
    k_p: float
    mean_activation: Dict[int, float]
    peak_deformation: float
    damaged: bool
    peak_force: float
    t: np.ndarray
    p_plus_cmd: np.ndarray  # (steps, arm, joint)
    p_minus: np.ndarray
    deformation: np.ndarray
    damage: np.ndarray
    activation: np.ndarray  # (steps, 6)

    def activation_by_name(self) -> Dict[str, float]:
        return {name: self.mean_activation[SENSOR_IDS[name]] for name in SENSOR_NAMES}


DEFAULT_KP = 2e-3


def run_grasp(
    traj: Optional[GraspTrajectory] = None,
    arms: Sequence[ArmModel] = (ArmModel(), ArmModel()),
    box: BoxModel = BoxModel(),
    chain: SensingChain = SensingChain(),
    k_p: float = DEFAULT_KP,
    feedback: bool = True,
    wire_tap: Optional[Callable[[int, bytes], None]] = None,
) -> GraspReport:
    """Run the grasp at the sensing frame rate, with or without feedback.

    With feedback on, each joint's grasp-direction pressure is reduced in
    proportion to the whole-sensor code sum of the link it drives. The
    chest sensors are read but never fed back. The trajectory's timestep
    must match the bus scan period.
    """
    if len(arms) != 2:
        raise ValueError("exactly two arms (left, right)")
    dt = total_scan_time(chain.bus())
    if traj is None:
        traj = GraspTrajectory.ramp_and_hold(dt)
    if not math.isclose(traj.timestep, dt, rel_tol=1e-9):
        raise ValueError(f"trajectory timestep {traj.timestep} does not match scan period {dt}")
    loop = _SensingLoop(chain, wire_tap)
    state = PlantState()
    steps = traj.steps
    p_cmd_log = np.zeros((steps, 2, 2))
    p_minus_log = np.zeros((steps, 2, 2))
    deform = np.zeros(steps)
    damage = np.zeros(steps, dtype=bool)
    act = np.zeros((steps, len(SENSOR_NAMES)))
    peak_force = 0.0
    for n in range(steps):
        t = n * dt
        frames = loop.sense(state.forces, t)
        sums = {f.sensor_id: float(np.sum(f.codes)) for f in frames}
        for f in frames:
            act[n, f.sensor_id] = normalized_total_activation(f)
        p_cmd = np.empty((2, 2))
        for a, side in enumerate(SIDES):
            for j, slot in enumerate(arms[a].sensors):
                nominal = float(traj.p_plus[n, j])
                if feedback:
                    s = sums[SENSOR_IDS[f"{side}{slot}"]]
                    p_cmd[a, j] = modulate_pressure(nominal, s, k_p)
                else:
                    p_cmd[a, j] = nominal
        p_minus = np.tile(traj.p_minus[n], (2, 1))
        state = step_plant(state, p_cmd, p_minus, dt, arms, box)
        p_cmd_log[n] = p_cmd
        p_minus_log[n] = p_minus
        deform[n] = state.deformation
        damage[n] = state.damaged
        peak_force = max(peak_force, float(state.forces.max()))
    mean_act = {sid: float(act[:, sid].mean()) for sid in range(len(SENSOR_NAMES))}
    return GraspReport(
        feedback=feedback,
        k_p=k_p if feedback else 0.0,
        mean_activation=mean_act,
        peak_deformation=float(deform.max()) if steps else 0.0,
        damaged=bool(state.damaged),
        peak_force=peak_force,
        t=np.arange(steps) * dt,
        p_plus_cmd=p_cmd_log,
        p_minus=p_minus_log,
        deformation=deform,
        damage=damage,
        activation=act,
    )


def write_grasp_timeseries(fh, report: GraspReport):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("t", "joint", "p_plus_cmd", "p_minus", "deformation", "damage"))
    for n, t in enumerate(report.t.tolist()):
        for a, side in enumerate(SIDES):
            for j in range(2):
                w.writerow(
                    (
                        repr(t),
                        f"{side}j{j}",
                        repr(float(report.p_plus_cmd[n, a, j])),
                        repr(float(report.p_minus[n, a, j])),
                        repr(float(report.deformation[n])),
                        int(report.damage[n]),
                    )
                )


def write_grasp_summary(fh, report: GraspReport):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("sensor_id", "mean_normalized_total_activation"))
    for sid in range(len(SENSOR_NAMES)):
        w.writerow((sid, repr(report.mean_activation[sid])))
