"""Streaming per-taxel Hampel filtering and frame statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .frame import TAXELS, Frame


@dataclass(frozen=True)
class HampelConfig:
    window: int = 7
    k: float = 3.0
    mad_scale: float = 1.4826
    # lower bound on the MAD, in ADC counts; keeps a flat window from
    # flagging every one-count change
    mad_floor: float = 1.0

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be an odd integer >= 3")
        if not self.k > 0:
            raise ValueError("k must be > 0")
        if not self.mad_scale > 0:
            raise ValueError("mad_scale must be > 0")
        if not self.mad_floor >= 0:
            raise ValueError("mad_floor must be >= 0")


def hampel_update(samples: Sequence[float], cfg: HampelConfig = HampelConfig()) -> Tuple[float, bool]:
    """Filter the newest (last) sample of ``samples`` against the whole window.

    >>> hampel_update([4, 1, 3, 2, 100])
    (3.0, True)
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("window is empty")
    if x.size > cfg.window:
        raise ValueError(f"{x.size} samples exceed window {cfg.window}")
    m = float(np.median(x))
    sigma = cfg.mad_scale * max(float(np.median(np.abs(x - m))), cfg.mad_floor)
    newest = float(x[-1])
    if abs(newest - m) > cfg.k * sigma:
        return m, True
    return newest, False


class HampelFilter:
    """Rolling-window state for every taxel of every sensor on the bus.

    Windows hold raw samples. Until a window fills, the rule is applied
    over the samples seen so far. Sample order inside the ring does not
    matter, since only medians are taken.
    """

    def __init__(self, sensor_ids: Sequence[int], cfg: HampelConfig = HampelConfig(), n_taxels: int = TAXELS):
        self.cfg = cfg
        self.sensor_ids = tuple(sensor_ids)
        self._slot = {sid: i for i, sid in enumerate(self.sensor_ids)}
        if len(self._slot) != len(self.sensor_ids):
            raise ValueError("sensor ids must be unique")
        self.n_taxels = n_taxels
        n = len(self.sensor_ids)
        self._ring = np.zeros((n, cfg.window, n_taxels))
        self._head = np.zeros(n, dtype=np.int64)
        self._count = np.zeros(n, dtype=np.int64)
        self.replaced = np.zeros((n, n_taxels), dtype=np.int64)

    def window_lengths(self) -> Dict[int, int]:
        return {sid: int(self._count[i]) for sid, i in self._slot.items()}

    def _step(self, slot: int, raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        ring = self._ring[slot]
        ring[self._head[slot]] = raw
        self._head[slot] = (self._head[slot] + 1) % cfg.window
        self._count[slot] = min(self._count[slot] + 1, cfg.window)
        window = ring[: self._count[slot]]
        med = np.median(window, axis=0)
        mad = np.median(np.abs(window - med), axis=0)
        sigma = cfg.mad_scale * np.maximum(mad, cfg.mad_floor)
        flag = np.abs(raw - med) > cfg.k * sigma
        self.replaced[slot] += flag
        return np.where(flag, med, raw), flag

    def filter_frame(self, frame: Frame) -> Tuple[Frame, np.ndarray]:
        """Filter one sensor's frame; returns the filtered frame and the replaced mask."""
        try:
            slot = self._slot[frame.sensor_id]
        except KeyError:
            raise ValueError(f"sensor {frame.sensor_id} is not tracked by this filter") from None
        if len(frame) != self.n_taxels:
            raise ValueError(f"frame has {len(frame)} taxels, filter expects {self.n_taxels}")
        out, flag = self._step(slot, frame.codes.astype(float))
        return Frame(frame.sensor_id, out, frame.t_acquired), flag

    def filter_frames(self, frames: Iterable[Frame]) -> List[Tuple[Frame, np.ndarray]]:
        return [self.filter_frame(f) for f in frames]


def filter_frame(state: HampelFilter, frame: Frame) -> Frame:
    return state.filter_frame(frame)[0]


def normalized_total_activation(frame: Frame) -> float:
    """Sum of all taxel codes divided by the taxel count."""
    return float(np.sum(frame.codes, dtype=float) / frame.codes.size)


FRAME_CSV_HEADER = ("t", "sensor_id", "taxel_index", "raw", "filtered", "replaced")
SUMMARY_CSV_HEADER = ("sensor_id", "frame", "normalized_total_activation")


def frame_rows(raw: Frame, filtered: Frame, replaced: np.ndarray):
    t = repr(float(raw.t_acquired))
    for idx, (r, f, flag) in enumerate(zip(raw.codes.tolist(), filtered.codes.tolist(), replaced.tolist())):
        yield (t, raw.sensor_id, idx, int(r), _num(f), int(flag))


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


class PipelineWriter:
    """Run frames through a Hampel filter and write both CSV reports."""

    def __init__(self, frame_fh, summary_fh, filt: HampelFilter):
        self.frame_csv = csv.writer(frame_fh, lineterminator="\n")
        self.summary_csv = csv.writer(summary_fh, lineterminator="\n")
        self.frame_csv.writerow(FRAME_CSV_HEADER)
        self.summary_csv.writerow(SUMMARY_CSV_HEADER)
        self.filter = filt
        self.n_frames = 0

    def process(self, frames: Sequence[Frame]) -> List[Frame]:
        out = []
        for raw in frames:
            filtered, flag = self.filter.filter_frame(raw)
            self.frame_csv.writerows(frame_rows(raw, filtered, flag))
            self.summary_csv.writerow((raw.sensor_id, self.n_frames, repr(normalized_total_activation(filtered))))
            out.append(filtered)
        self.n_frames += 1
        return out
