"""Recording files: ``PCAVREC1`` then length-prefixed wire frames."""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from pathlib import Path

from . import wire
from .frames import SensorFrame

REC_MAGIC = b"PCAVREC1"
_REC_STEM = REC_MAGIC[:7]


class TruncatedFrame(wire.WireError):
    def __init__(self, index: int, detail: str):
        super().__init__(f"frame {index} truncated: {detail}")
        self.index = index


def record(frames: Iterable[SensorFrame], path: str | Path) -> int:
    """Write ``frames`` to ``path``; returns the number written."""
    n = 0
    with open(path, "wb") as f:
        f.write(REC_MAGIC)
        for frame in frames:
            wire.write_frame(f, wire.encode(frame))
            n += 1
    return n


def replay(path: str | Path) -> Iterator[SensorFrame]:
    """Yield the stored frames in order with their stored timestamps."""
    with open(path, "rb") as f:
        magic = f.read(len(REC_MAGIC))
        if magic != REC_MAGIC:
            if len(magic) == len(REC_MAGIC) and magic.startswith(_REC_STEM):
                raise wire.VersionMismatch(magic[-1] - ord("0"))
            raise wire.BadMagic(f"not a recording: {magic!r}")
        index = 0
        while True:
            prefix = f.read(wire.LENGTH_PREFIX.size)
            if not prefix:
                return
            if len(prefix) < wire.LENGTH_PREFIX.size:
                raise TruncatedFrame(index, "incomplete length prefix")
            (size,) = wire.LENGTH_PREFIX.unpack(prefix)
            payload = f.read(size)
            if len(payload) < size:
                raise TruncatedFrame(index, f"expected {size} bytes, got {len(payload)}")
            try:
                yield wire.decode(payload)
            except wire.Truncated as exc:
                raise TruncatedFrame(index, str(exc)) from exc
            index += 1
