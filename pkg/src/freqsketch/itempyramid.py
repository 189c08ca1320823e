"""Per-epoch sketches whose width halves at dyadic ages.

Every completed epoch keeps its own sketch at full time resolution.
When an epoch's age reaches 2^k the sketch is folded once, so an epoch
aged ``a`` sits at log-width ``b - floor(log2 a)`` (clamped at 1, and
still full-width at ages 0 and 1). Each dyadic age band then costs the
same storage, which bounds the whole structure by O(log t) full
sketches. Exact per-epoch totals ride alongside as plain scalars.
"""

from __future__ import annotations

import struct

from .errors import (
    AlignmentError,
    BadMagicError,
    EpochRangeError,
    IncompatibleSketchError,
    SnapshotFormatError,
    TruncatedSnapshotError,
    VersionMismatchError,
)
from .sketch import CmSketch, SketchConfig, require_compatible

SNAPSHOT_MAGIC = b"HKIP"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQQQ")
_RECORD = struct.Struct("<QIQ")


def scheduled_log_width(full_log_width: int, age: int) -> int:
    """Log-width of an epoch sketch at the given age, floored at 1."""
    if age < 2:
        return full_log_width
    return max(1, full_log_width - (age.bit_length() - 1))


class ItemPyramid:
    """One sketch per epoch, degrading in key resolution with age."""

    def __init__(self, config: SketchConfig):
        self.config = config
        self._epochs: list[CmSketch] = []
        self._totals: list[int] = []
        self._t = 0
        self.last_tick_fold_additions = 0  # column-pair adds in the last tick
        self.total_fold_additions = 0

    @property
    def t(self) -> int:
        return self._t

    def tick(self, unit: CmSketch) -> None:
        """Adopt the closed epoch's sketch and fold the dyadic-aged ones."""
        require_compatible(unit.config, self.config)
        self._t += 1
        self._epochs.append(unit.copy())
        self._totals.append(unit.total_mass)
        additions = 0
        for k in range(1, self._t.bit_length()):
            s = self._t - (1 << k)
            if s < 1:
                break
            sketch = self._epochs[s - 1]
            if sketch.config.log_width > 1:
                additions += sketch.config.width // 2
                self._epochs[s - 1] = sketch.fold()
        self.last_tick_fold_additions = additions
        self.total_fold_additions += additions

    def epoch_sketch(self, epoch: int) -> CmSketch:
        """The sketch for one epoch at its current width. Treat as read-only."""
        self._check_epoch(epoch)
        return self._epochs[epoch - 1]

    def epoch_log_width(self, epoch: int) -> int:
        self._check_epoch(epoch)
        return self._epochs[epoch - 1].config.log_width

    def query_epoch(self, key: bytes, epoch: int) -> int:
        """Estimated count of ``key`` within one epoch; never undercounts."""
        self._check_epoch(epoch)
        return self._epochs[epoch - 1].query(key)

    def epoch_total(self, epoch: int) -> int:
        """Exact total inserts of one epoch (kept outside the sketch)."""
        self._check_epoch(epoch)
        return self._totals[epoch - 1]

    def insert_delayed(self, key: bytes, count: int, epoch: int) -> None:
        """Late arrival, hashed at the epoch's current (possibly folded) width."""
        self._check_epoch(epoch)
        self._epochs[epoch - 1].insert(key, count)
        self._totals[epoch - 1] += count

    def storage_counters(self) -> int:
        """Total counters currently held across all epoch sketches."""
        return sum(s.config.depth * s.config.width for s in self._epochs)

    def merge_with(self, other: "ItemPyramid") -> "ItemPyramid":
        if self.config != other.config:
            raise IncompatibleSketchError(
                f"config differs: {self.config} != {other.config}"
            )
        if self._t != other._t:
            raise AlignmentError(f"epoch counters differ: {self._t} != {other._t}")
        merged = ItemPyramid(self.config)
        merged._t = self._t
        merged._epochs = [a.merge(b) for a, b in zip(self._epochs, other._epochs)]
        merged._totals = [a + b for a, b in zip(self._totals, other._totals)]
        return merged

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ItemPyramid):
            return NotImplemented
        return (
            self.config == other.config
            and self._t == other._t
            and self._totals == other._totals
            and self._epochs == other._epochs
        )

    __hash__ = None  # type: ignore[assignment]

    def _check_epoch(self, epoch: int) -> None:
        if not 1 <= epoch <= self._t:
            raise EpochRangeError(f"epoch {epoch} outside completed range 1..{self._t}")

    # -- snapshot: magic "HKIP", version u32, depth u32, log_width u32,
    # seed u64, t u64, record count u64, then per-epoch records
    # (epoch u64, log_width u32, total u64, sketch snapshot).

    def serialize(self) -> bytes:
        parts = [
            _HEADER.pack(
                SNAPSHOT_MAGIC,
                SNAPSHOT_VERSION,
                self.config.depth,
                self.config.log_width,
                self.config.seed,
                self._t,
                len(self._epochs),
            )
        ]
        for s, (sketch, total) in enumerate(zip(self._epochs, self._totals), start=1):
            parts.append(_RECORD.pack(s, sketch.config.log_width, total))
            parts.append(sketch.serialize())
        return b"".join(parts)

    @classmethod
    def deserialize(cls, data: bytes) -> "ItemPyramid":
        pyramid, end = cls.read_from(data, 0)
        if end != len(data):
            raise SnapshotFormatError(f"{len(data) - end} trailing bytes after pyramid")
        return pyramid

    @classmethod
    def read_from(cls, data: bytes, offset: int) -> tuple["ItemPyramid", int]:
        if len(data) - offset < 4:
            raise TruncatedSnapshotError("snapshot shorter than its magic")
        magic = bytes(data[offset : offset + 4])
        if magic != SNAPSHOT_MAGIC:
            raise BadMagicError(f"expected {SNAPSHOT_MAGIC!r}, found {magic!r}")
        if len(data) - offset < _HEADER.size:
            raise TruncatedSnapshotError("pyramid header incomplete")
        _, version, depth, log_width, seed, t, n_records = _HEADER.unpack_from(
            data, offset
        )
        if version != SNAPSHOT_VERSION:
            raise VersionMismatchError(f"unsupported pyramid version {version}")
        offset += _HEADER.size
        config = SketchConfig(depth, log_width, seed)
        pyramid = cls(config)
        pyramid._t = t
        for expected_epoch in range(1, n_records + 1):
            if len(data) - offset < _RECORD.size:
                raise TruncatedSnapshotError("epoch record incomplete")
            s, b_s, total = _RECORD.unpack_from(data, offset)
            offset += _RECORD.size
            if s != expected_epoch:
                raise SnapshotFormatError(f"epoch records out of order at {s}")
            sketch, offset = CmSketch.read_from(data, offset)
            if sketch.config.log_width != b_s:
                raise SnapshotFormatError(f"epoch {s} record width disagrees with sketch")
            if sketch.config.seed != seed or sketch.config.depth != depth:
                raise SnapshotFormatError(f"epoch {s} sketch config disagrees with header")
            pyramid._epochs.append(sketch)
            pyramid._totals.append(total)
        return pyramid, offset
