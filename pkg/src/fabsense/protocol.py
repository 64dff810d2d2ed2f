"""Binary message codec for aggregated sensor frames.

Layout, all multi-byte fields little-endian::

    FF FF | count (u16) | id[0] .. id[N-1] (u8) | N x 1024 codes (u16)

Codes are 12-bit, so every payload high byte is at most 0x0F. Ids are
limited to 0..254. Together these guarantee that ``FF FF`` never appears
inside a well-formed message, which is what lets the decoder resynchronise
on the next start word after corruption.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .frame import MAX_CODE, TAXELS, Frame

START_WORD = b"\xff\xff"
MAX_SENSORS = 8
MAX_SENSOR_ID = 254
HEADER_SIZE = 4


class ProtocolError(ValueError):
    pass


def message_size(n_sensors: int) -> int:
    if not 1 <= n_sensors <= MAX_SENSORS:
        raise ProtocolError(f"sensor count {n_sensors} outside 1..{MAX_SENSORS}")
    return HEADER_SIZE + n_sensors + 2 * TAXELS * n_sensors


@dataclass(frozen=True, eq=False)
class Message:
    sensor_ids: Tuple[int, ...]
    payload: np.ndarray  # (N, 1024) uint16, scan order

    def __post_init__(self):
        ids = tuple(int(i) for i in self.sensor_ids)
        payload = np.asarray(self.payload)
        n = len(ids)
        if not 1 <= n <= MAX_SENSORS:
            raise ProtocolError(f"sensor count {n} outside 1..{MAX_SENSORS}")
        if any(not 0 <= i <= MAX_SENSOR_ID for i in ids):
            raise ProtocolError(f"sensor ids must be in 0..{MAX_SENSOR_ID}")
        if len(set(ids)) != n:
            raise ProtocolError("sensor ids must be unique")
        if payload.shape != (n, TAXELS):
            raise ProtocolError(f"payload shape {payload.shape}, expected {(n, TAXELS)}")
        if not np.issubdtype(payload.dtype, np.integer):
            if not np.array_equal(payload, np.round(payload)):
                raise ProtocolError("codes must be integers")
        if payload.size and (payload.min() < 0 or payload.max() > MAX_CODE):
            raise ProtocolError(f"codes must be in 0..{MAX_CODE}")
        payload = payload.astype(np.uint16)
        payload.setflags(write=False)
        object.__setattr__(self, "sensor_ids", ids)
        object.__setattr__(self, "payload", payload)

    def __eq__(self, other):
        if not isinstance(other, Message):
            return NotImplemented
        return self.sensor_ids == other.sensor_ids and np.array_equal(self.payload, other.payload)

    @property
    def n_sensors(self) -> int:
        return len(self.sensor_ids)

    @classmethod
    def from_frames(cls, frames: Sequence[Frame]) -> "Message":
        for f in frames:
            if len(f) != TAXELS:
                raise ProtocolError(f"frame for sensor {f.sensor_id} has {len(f)} codes, expected {TAXELS}")
        return cls(tuple(f.sensor_id for f in frames), np.stack([f.codes for f in frames]))

    def frames(self, t_acquired: float = 0.0) -> List[Frame]:
        return [Frame(sid, row.copy(), t_acquired) for sid, row in zip(self.sensor_ids, self.payload)]

    def to_bytes(self) -> bytes:
        header = START_WORD + self.n_sensors.to_bytes(2, "little") + bytes(self.sensor_ids)
        return header + self.payload.astype("<u2").tobytes()


def encode_message(frames: Sequence[Frame]) -> bytes:
    """Serialise one frame per sensor into a single message."""
    return Message.from_frames(frames).to_bytes()


@dataclass
class DecodeDiagnostics:
    messages_ok: int = 0
    bytes_skipped: int = 0
    malformed: int = 0


class StreamDecoder:
    """Incremental decoder; feed it bytes as they arrive.

    Bytes that cannot start a valid message are skipped one at a time, and
    an incomplete trailing message is held until more data arrives.
    Invariant: ``bytes consumed by messages + bytes_skipped + pending ==
    total bytes fed``.
    """

    def __init__(self):
        self._buf = bytearray()
        self.diagnostics = DecodeDiagnostics()
        self.bytes_fed = 0
        self.bytes_in_messages = 0

    @property
    def pending(self) -> int:
        return len(self._buf)

    def feed(self, data: bytes) -> List[Message]:
        self._buf += data
        self.bytes_fed += len(data)
        buf = self._buf
        diag = self.diagnostics
        out = []
        pos = 0
        while True:
            i = buf.find(START_WORD, pos)
            if i < 0:
                # a lone trailing 0xFF may be the first half of a start word
                keep = 1 if len(buf) > pos and buf[-1] == 0xFF else 0
                diag.bytes_skipped += len(buf) - keep - pos
                pos = len(buf) - keep
                break
            diag.bytes_skipped += i - pos
            pos = i
            status = _check_candidate(buf, pos)
            if status is None:
                break
            if status is False:
                diag.malformed += 1
                diag.bytes_skipped += 1
                pos += 1
                continue
            n = status
            size = message_size(n)
            ids = tuple(buf[pos + HEADER_SIZE : pos + HEADER_SIZE + n])
            body = np.frombuffer(bytes(buf[pos + HEADER_SIZE + n : pos + size]), dtype="<u2")
            out.append(Message(ids, body.reshape(n, TAXELS)))
            diag.messages_ok += 1
            self.bytes_in_messages += size
            pos += size
        del buf[:pos]
        return out


def _check_candidate(buf: bytearray, pos: int):
    """Validate a header at ``pos``.

    Returns the sensor count for a complete valid message, ``False`` for
    an invalid candidate, or ``None`` when more bytes are needed to decide.
    Partial payloads are checked as far as they go, so a false start is
    rejected as early as possible.
    """
    avail = len(buf) - pos
    if avail < HEADER_SIZE:
        return None
    n = int.from_bytes(buf[pos + 2 : pos + 4], "little")
    if not 1 <= n <= MAX_SENSORS:
        return False
    ids = buf[pos + HEADER_SIZE : pos + min(avail, HEADER_SIZE + n)]
    if any(b > MAX_SENSOR_ID for b in ids) or len(set(ids)) != len(ids):
        return False
    if avail < HEADER_SIZE + n:
        return None
    size = message_size(n)
    start = pos + HEADER_SIZE + n
    stop = pos + min(avail, size)
    n_words = (stop - start) // 2
    if n_words:
        highs = np.frombuffer(bytes(buf[start + 1 : start + 2 * n_words : 2]), dtype=np.uint8)
        if np.any(highs > MAX_CODE >> 8):
            return False
    if avail < size:
        return None
    return n


def decode_stream(data: bytes, decoder: Optional[StreamDecoder] = None) -> Tuple[List[Message], DecodeDiagnostics]:
    """Decode ``data``; pass a decoder to carry partial messages across calls."""
    decoder = StreamDecoder() if decoder is None else decoder
    messages = decoder.feed(data)
    return messages, decoder.diagnostics


def iter_messages(chunks: Iterable[bytes]) -> Iterable[Message]:
    decoder = StreamDecoder()
    for chunk in chunks:
        yield from decoder.feed(chunk)
