"""Dyadic time aggregation at full counter resolution.

Level j holds one sketch covering the most recently completed aligned
window of 2^j epochs; an in-progress unit sketch accumulates the open
epoch. Closing an epoch promotes the unit into level 0 and cascades a
swap/accumulate up every level whose window boundary the new epoch
count crosses, which costs an amortized two sketch additions per epoch
regardless of history length.

At epoch count t, level j covers the inclusive epoch span
``[t - d - 2^j + 1, t - d]`` with ``d = t mod 2^j`` (epochs are
1-based; spans that would precede epoch 1 are simply smaller, and a
span whose end is below 1 is empty). The highest level is capped:
history older than its span is discarded.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import (
    AlignmentError,
    BadMagicError,
    EpochRangeError,
    SnapshotFormatError,
    TruncatedSnapshotError,
    VersionMismatchError,
)
from .sketch import CmSketch, SketchConfig, require_compatible

DEFAULT_MAX_LEVEL = 11

SNAPSHOT_MAGIC = b"HKTP"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIQI")


def dyadic_ruler(t: int) -> int:
    """Largest l such that t is divisible by 2^l (t >= 1)."""
    return (t & -t).bit_length() - 1


def level_span(t: int, level: int) -> tuple[int, int, int]:
    """(start, end, staleness) of a level's span at epoch count t, inclusive."""
    delta = t % (1 << level)
    end = t - delta
    return end - (1 << level) + 1, end, delta


def covering_levels(t: int, max_level: int, epoch: int) -> list[int]:
    """Levels whose current span contains the given completed epoch."""
    hits = []
    for j in range(max_level + 1):
        start, end, _ = level_span(t, j)
        if end >= 1 and start <= epoch <= end:
            hits.append(j)
    return hits


@dataclass(frozen=True)
class IntervalDescriptor:
    """The epoch span (inclusive) a level answer refers to.

    ``stale`` marks queries whose target epoch fell outside the span the
    selected level currently holds; the lag is intrinsic to the dyadic
    schedule, so the answer is still returned and the caller decides.
    """

    level: int
    start: int
    end: int
    staleness: int
    stale: bool

    @property
    def length(self) -> int:
        return 1 << self.level

    def contains(self, epoch: int) -> bool:
        return self.end >= 1 and self.start <= epoch <= self.end


class TimePyramid:
    """Full-resolution sketches over exponentially growing past windows."""

    def __init__(self, config: SketchConfig, max_level: int = DEFAULT_MAX_LEVEL):
        if max_level < 0:
            raise ValueError(f"max_level must be >= 0, got {max_level}")
        self.config = config
        self.max_level = max_level
        self._unit = CmSketch(config)
        self._levels = [CmSketch(config) for _ in range(max_level + 1)]
        self._t = 0
        self.addition_count = 0  # sketch additions performed by ticks

    @property
    def t(self) -> int:
        """Number of completed epochs."""
        return self._t

    @property
    def unit(self) -> CmSketch:
        """The in-progress epoch's sketch. Treat as read-only."""
        return self._unit

    def level(self, j: int) -> CmSketch:
        """Level j's sketch. Treat as read-only."""
        if not 0 <= j <= self.max_level:
            raise EpochRangeError(f"level {j} out of range 0..{self.max_level}")
        return self._levels[j]

    def insert_current(self, key: bytes, count: int = 1) -> None:
        """Record an arrival in the open epoch."""
        self._unit.insert(key, count)

    def tick(self) -> None:
        """Close the open epoch and cascade the dyadic swap/accumulate."""
        self._t += 1
        top = min(dyadic_ruler(self._t), self.max_level)
        cumulative = self._unit
        for j in range(top + 1):
            backup = cumulative
            cumulative = backup.merge(self._levels[j])
            self.addition_count += 1
            self._levels[j] = backup
        self._unit = CmSketch(self.config)

    def covering_level(self, epoch: int) -> IntervalDescriptor:
        """The level answering a point query for the given epoch.

        Selects level floor(log2(t - epoch)); the freshest level 0 when
        epoch == t. The returned span may lag past the target epoch, in
        which case it is flagged stale.
        """
        self._check_epoch(epoch)
        if epoch == self._t:
            j = 0
        else:
            j = min((self._t - epoch).bit_length() - 1, self.max_level)
        start, end, delta = level_span(self._t, j)
        stale = not (end >= 1 and start <= epoch <= end)
        return IntervalDescriptor(j, start, end, delta, stale)

    def query_point(self, key: bytes, epoch: int) -> tuple[int, IntervalDescriptor]:
        """Count of ``key`` over the covering span, plus its descriptor.

        The estimate aggregates the whole span; callers wanting a
        per-epoch figure normalize by the descriptor's length.
        """
        desc = self.covering_level(epoch)
        return self._levels[desc.level].query(key), desc

    def covering_levels(self, epoch: int) -> list[int]:
        self._check_epoch(epoch)
        return covering_levels(self._t, self.max_level, epoch)

    def insert_delayed(self, key: bytes, count: int, epoch: int) -> list[int]:
        """Late arrival: add to every level whose span contains ``epoch``.

        Returns the levels updated (possibly empty when the epoch has
        aged out of every span). Linearity makes the result identical
        to having inserted on time.
        """
        touched = self.covering_levels(epoch)
        for j in touched:
            self._levels[j].insert(key, count)
        return touched

    def merge_with(self, other: "TimePyramid") -> "TimePyramid":
        """Set-additive merge of two pyramids ticked in lockstep."""
        require_compatible(self.config, other.config)
        if self.max_level != other.max_level:
            raise AlignmentError(
                f"max_level differs: {self.max_level} != {other.max_level}"
            )
        if self._t != other._t:
            raise AlignmentError(f"epoch counters differ: {self._t} != {other._t}")
        merged = TimePyramid(self.config, self.max_level)
        merged._t = self._t
        merged._unit = self._unit.merge(other._unit)
        merged._levels = [a.merge(b) for a, b in zip(self._levels, other._levels)]
        return merged

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimePyramid):
            return NotImplemented
        return (
            self.config == other.config
            and self.max_level == other.max_level
            and self._t == other._t
            and self._unit == other._unit
            and self._levels == other._levels
        )

    __hash__ = None  # type: ignore[assignment]

    def _check_epoch(self, epoch: int) -> None:
        if not 1 <= epoch <= self._t:
            raise EpochRangeError(f"epoch {epoch} outside completed range 1..{self._t}")

    # -- snapshot: magic "HKTP", version u32, t u64, max_level u32, then
    # max_level + 2 sketch snapshots (unit, level 0 .. level max_level).

    def serialize(self) -> bytes:
        parts = [_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, self._t, self.max_level)]
        parts.append(self._unit.serialize())
        parts.extend(level.serialize() for level in self._levels)
        return b"".join(parts)

    @classmethod
    def deserialize(cls, data: bytes) -> "TimePyramid":
        pyramid, end = cls.read_from(data, 0)
        if end != len(data):
            raise SnapshotFormatError(f"{len(data) - end} trailing bytes after pyramid")
        return pyramid

    @classmethod
    def read_from(cls, data: bytes, offset: int) -> tuple["TimePyramid", int]:
        if len(data) - offset < 4:
            raise TruncatedSnapshotError("snapshot shorter than its magic")
        magic = bytes(data[offset : offset + 4])
        if magic != SNAPSHOT_MAGIC:
            raise BadMagicError(f"expected {SNAPSHOT_MAGIC!r}, found {magic!r}")
        if len(data) - offset < _HEADER.size:
            raise TruncatedSnapshotError("pyramid header incomplete")
        _, version, t, max_level = _HEADER.unpack_from(data, offset)
        if version != SNAPSHOT_VERSION:
            raise VersionMismatchError(f"unsupported pyramid version {version}")
        offset += _HEADER.size
        unit, offset = CmSketch.read_from(data, offset)
        levels = []
        for _ in range(max_level + 1):
            sketch, offset = CmSketch.read_from(data, offset)
            levels.append(sketch)
        for sketch in levels:
            if sketch.config != unit.config:
                raise SnapshotFormatError("pyramid levels disagree on sketch config")
        pyramid = cls(unit.config, max_level)
        pyramid._t = t
        pyramid._unit = unit
        pyramid._levels = levels
        return pyramid, offset
