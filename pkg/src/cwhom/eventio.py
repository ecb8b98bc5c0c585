"""Photon-event stream files: packed binary and CSV interchange.

Binary layout (little-endian):
  32-byte header: magic "CWHOMEV1", u64 duration_ps, u64 record count,
  8 zero pad bytes; then 16-byte records (u64 timestamp_ps, u8 channel,
  7 pad bytes) sorted by timestamp.  Channel 0 is A, 1 is B.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CWHOMEV1"
_HEADER = struct.Struct("<8sQQ8x")
_RECORD_DTYPE = np.dtype([("timestamp_ps", "<u8"), ("channel", "u1"),
                          ("pad", "V7")])

CHANNEL_A = 0
CHANNEL_B = 1


class EventFileError(ValueError):
    pass


def _interleave(events_a: np.ndarray, events_b: np.ndarray) -> np.ndarray:
    rec = np.zeros(events_a.size + events_b.size, dtype=_RECORD_DTYPE)
    rec["timestamp_ps"][: events_a.size] = events_a
    rec["channel"][: events_a.size] = CHANNEL_A
    rec["timestamp_ps"][events_a.size:] = events_b
    rec["channel"][events_a.size:] = CHANNEL_B
    order = np.argsort(rec["timestamp_ps"], kind="stable")
    return rec[order]


def write_events(path, events_a: np.ndarray, events_b: np.ndarray,
                 duration_ps: int):
    rec = _interleave(np.asarray(events_a, dtype=np.uint64),
                      np.asarray(events_b, dtype=np.uint64))
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, int(duration_ps), rec.size))
        f.write(rec.tobytes())


def read_events(path):
    """Returns (events_a, events_b, duration_ps); timestamps int64 ps."""
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise EventFileError(f"{path}: truncated header")
        magic, duration_ps, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise EventFileError(f"{path}: bad magic {magic!r}")
        body = f.read(count * _RECORD_DTYPE.itemsize)
    if len(body) != count * _RECORD_DTYPE.itemsize:
        raise EventFileError(f"{path}: expected {count} records")
    rec = np.frombuffer(body, dtype=_RECORD_DTYPE)
    ts = rec["timestamp_ps"].astype(np.int64)
    ch = rec["channel"]
    return ts[ch == CHANNEL_A], ts[ch == CHANNEL_B], int(duration_ps)


def write_events_csv(path, events_a: np.ndarray, events_b: np.ndarray):
    """CSV interchange: rows of (timestamp_ps, channel letter)."""
    rec = _interleave(np.asarray(events_a, dtype=np.uint64),
                      np.asarray(events_b, dtype=np.uint64))
    with open(path, "w") as f:
        f.write("timestamp_ps,channel\n")
        for t, c in zip(rec["timestamp_ps"], rec["channel"]):
            f.write(f"{t},{'A' if c == CHANNEL_A else 'B'}\n")


def read_events_csv(path):
    ts_a, ts_b = [], []
    with open(path) as f:
        header = f.readline().strip()
        if header != "timestamp_ps,channel":
            raise EventFileError(f"{path}: unexpected CSV header {header!r}")
        for line_no, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            t_str, ch = line.split(",")
            if ch == "A":
                ts_a.append(int(t_str))
            elif ch == "B":
                ts_b.append(int(t_str))
            else:
                raise EventFileError(f"{path}:{line_no}: bad channel {ch!r}")
    return np.array(ts_a, dtype=np.int64), np.array(ts_b, dtype=np.int64)
