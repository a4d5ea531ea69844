"""Time-tag streams and their on-disk formats.

Records are (channel, timestamp) pairs.  Timestamps are integer picoseconds
from run start and, at this layer, exact multiples of the pump pulse period.
The binary format is columnar and little-endian: all channels as u32 followed
by all timestamps as u64, with run metadata in a JSON sidecar next to the data
file.  CSV export uses the header ``channel,timestamp_ps``.  Both round-trip
bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = [
    "StreamMeta",
    "TimeTagRecord",
    "TimeTagStream",
    "sidecar_path",
    "write_stream",
    "read_stream",
    "write_csv",
    "read_csv",
    "merge_streams",
]

FORMAT_NAME = "ttag-columnar"
FORMAT_VERSION = 1
RECORD_BYTES = 4 + 8  # u32 channel + u64 picoseconds


@dataclass(frozen=True)
class TimeTagRecord:
    """One detection event."""

    channel: int
    timestamp_ps: int

    @property
    def timestamp_s(self) -> float:
        return self.timestamp_ps * 1e-12


@dataclass(frozen=True)
class StreamMeta:
    """Run metadata carried with a stream.

    config_digest identifies the device configuration (emitter, couplers,
    network, losses, detector) that produced the stream; analysis against a
    different configuration is refused.  Schedule and acquisition parameters
    are per-run and recorded here explicitly.
    """

    config_digest: str
    pump_rate_hz: float
    pulse_period_ps: int
    pulse_count: int
    n_channels: int
    schedule_period: int
    schedule_targets: tuple[int, ...]
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "format_version": self.format_version,
            "config_digest": self.config_digest,
            "pump_rate_hz": self.pump_rate_hz,
            "pulse_period_ps": self.pulse_period_ps,
            "pulse_count": self.pulse_count,
            "n_channels": self.n_channels,
            "schedule_period": self.schedule_period,
            "schedule_targets": list(self.schedule_targets),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StreamMeta":
        if doc.get("format") != FORMAT_NAME:
            raise DataError(f"not a {FORMAT_NAME} sidecar: format={doc.get('format')!r}")
        if doc.get("format_version") != FORMAT_VERSION:
            raise DataError(f"unsupported format_version {doc.get('format_version')!r}")
        return cls(
            config_digest=doc["config_digest"],
            pump_rate_hz=float(doc["pump_rate_hz"]),
            pulse_period_ps=int(doc["pulse_period_ps"]),
            pulse_count=int(doc["pulse_count"]),
            n_channels=int(doc["n_channels"]),
            schedule_period=int(doc["schedule_period"]),
            schedule_targets=tuple(int(t) for t in doc["schedule_targets"]),
        )


class TimeTagStream:
    """Detection events sorted by timestamp, ties broken by channel."""

    def __init__(self, channels: np.ndarray, timestamps_ps: np.ndarray, meta: StreamMeta):
        channels = np.asarray(channels, dtype=np.uint32)
        timestamps_ps = np.asarray(timestamps_ps, dtype=np.uint64)
        if channels.shape != timestamps_ps.shape or channels.ndim != 1:
            raise DataError("channels and timestamps must be 1-d arrays of equal length")
        if len(timestamps_ps) > 1:
            dt = np.diff(timestamps_ps.astype(np.int64))
            same = dt == 0
            if np.any(dt < 0) or np.any(np.diff(channels.astype(np.int64))[same] <= 0):
                raise DataError("records must be sorted by timestamp, ties by channel")
        self.channels = channels
        self.timestamps_ps = timestamps_ps
        self.meta = meta

    def __len__(self) -> int:
        return len(self.channels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (
            self.meta == other.meta
            and np.array_equal(self.channels, other.channels)
            and np.array_equal(self.timestamps_ps, other.timestamps_ps)
        )

    @property
    def acquisition_s(self) -> float:
        """Total acquisition time implied by the pulse count."""
        return self.meta.pulse_count / self.meta.pump_rate_hz

    @property
    def pulse_indices(self) -> np.ndarray:
        return (self.timestamps_ps // np.uint64(self.meta.pulse_period_ps)).astype(np.int64)

    def singles_counts(self) -> np.ndarray:
        """Per-channel record counts, index 0 = channel 1."""
        counts = np.zeros(self.meta.n_channels, dtype=np.int64)
        if len(self):
            np.add.at(counts, self.channels.astype(np.int64) - 1, 1)
        return counts

    def singles_rates_hz(self) -> np.ndarray:
        return self.singles_counts() / self.acquisition_s

    def records(self):
        """Iterate records as TimeTagRecord objects (small streams only)."""
        for ch, ts in zip(self.channels, self.timestamps_ps):
            yield TimeTagRecord(int(ch), int(ts))


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_stream(stream: TimeTagStream, path) -> None:
    """Write the columnar binary file and its JSON sidecar."""
    path = Path(path)
    payload = (
        stream.channels.astype("<u4").tobytes()
        + stream.timestamps_ps.astype("<u8").tobytes()
    )
    path.write_bytes(payload)
    doc = stream.meta.to_dict()
    doc["n_records"] = len(stream)
    sidecar_path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_stream(path) -> TimeTagStream:
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise DataError(f"missing sidecar {side}")
    doc = json.loads(side.read_text())
    n = int(doc["n_records"])
    raw = path.read_bytes()
    if len(raw) != n * RECORD_BYTES:
        raise DataError(
            f"{path}: expected {n * RECORD_BYTES} bytes for {n} records, got {len(raw)}"
        )
    channels = np.frombuffer(raw, dtype="<u4", count=n, offset=0)
    timestamps = np.frombuffer(raw, dtype="<u8", count=n, offset=4 * n)
    return TimeTagStream(channels.copy(), timestamps.copy(), StreamMeta.from_dict(doc))


def write_csv(stream: TimeTagStream, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("channel,timestamp_ps\n")
        for ch, ts in zip(stream.channels, stream.timestamps_ps):
            fh.write(f"{int(ch)},{int(ts)}\n")


def read_csv(path, meta: StreamMeta) -> TimeTagStream:
    """Load a CSV export; metadata must be supplied (CSV has no sidecar)."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if header != "channel,timestamp_ps":
            raise DataError(f"unexpected CSV header {header!r}")
        rows = [line.split(",") for line in fh if line.strip()]
    channels = np.array([int(r[0]) for r in rows], dtype=np.uint32)
    timestamps = np.array([int(r[1]) for r in rows], dtype=np.uint64)
    return TimeTagStream(channels, timestamps, meta)


def merge_streams(parts, meta: StreamMeta) -> TimeTagStream:
    """Concatenate shard streams that cover disjoint, ordered pulse ranges."""
    parts = list(parts)
    if not parts:
        return TimeTagStream(np.empty(0, np.uint32), np.empty(0, np.uint64), meta)
    channels = np.concatenate([p.channels for p in parts])
    timestamps = np.concatenate([p.timestamps_ps for p in parts])
    return TimeTagStream(channels, timestamps, meta)
