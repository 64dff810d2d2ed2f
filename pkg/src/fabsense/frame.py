"""Frame container and the canonical scan-order layout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_IN = 16
N_OUT = 64
TAXELS = N_IN * N_OUT
MAX_CODE = 4095


def scan_index(row: int, col: int, n_in: int = N_IN) -> int:
    """Flattened position of taxel (input ``row``, output ``col``).

    The input counter advances on every CNT pulse, so inputs vary fastest.
    """
    return col * n_in + row


def to_scan_order(matrix: np.ndarray) -> np.ndarray:
    """Flatten a (rows, cols) array into scan order."""
    return np.ascontiguousarray(np.asarray(matrix).T).ravel()


def from_scan_order(codes: np.ndarray, rows: int = N_IN, cols: int = N_OUT) -> np.ndarray:
    """Inverse of :func:`to_scan_order`."""
    return np.asarray(codes).reshape(cols, rows).T


@dataclass(frozen=True, eq=False)
class Frame:
    """One scan of a single sensor: codes in scan order plus a timestamp.

    Raw frames hold integer ADC codes; frames coming out of the Hampel
    filter may hold float medians.
    """

    sensor_id: int
    codes: np.ndarray
    t_acquired: float = 0.0

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.ndim != 1:
            raise ValueError("codes must be one-dimensional (scan order)")
        if codes.size and (codes.min() < 0 or codes.max() > MAX_CODE):
            raise ValueError("codes must lie in [0, 4095]")
        if not 0 <= self.sensor_id <= 254:
            raise ValueError(f"sensor_id {self.sensor_id} outside 0..254")
        object.__setattr__(self, "codes", codes)

    def __len__(self):
        return self.codes.size

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.sensor_id == other.sensor_id
            and self.t_acquired == other.t_acquired
            and np.array_equal(self.codes, other.codes)
        )

    def matrix(self, rows: int = N_IN) -> np.ndarray:
        return from_scan_order(self.codes, rows, self.codes.size // rows)
