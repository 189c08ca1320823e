"""Jointly time- and item-aggregated levels, and the interpolating query.

The dual pyramid mirrors the time pyramid's swap/accumulate cascade in
folded space: its level j is maintained so that it always equals the
time pyramid's level j folded j times (clamped at width 2). That
makes it the right normalizer for reconstructing a per-epoch count
from the two marginals,

    estimate = time_level_cell * epoch_cell / dual_cell,

taken per hash row before the final min. The reconstruction is exact
whenever item and epoch are independent within each folded cell and
degrades gracefully otherwise.

Point queries go through a two-way switch: if the per-epoch sketch's
own read exceeds the absolute error scale of its folded width, it is
trusted outright (heavy hitter); otherwise the interpolated value is
returned.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from .errors import (
    AlignmentError,
    BadMagicError,
    ClockSkewError,
    EpochRangeError,
    SnapshotFormatError,
    TruncatedSnapshotError,
    VersionMismatchError,
)
from .itempyramid import ItemPyramid
from .sketch import CmSketch, SketchConfig, require_compatible
from .timepyramid import DEFAULT_MAX_LEVEL, TimePyramid, covering_levels, dyadic_ruler

METHOD_HEAVY_HITTER = "heavy-hitter"
METHOD_INTERPOLATED = "interpolated"

SNAPSHOT_MAGIC = b"HKDP"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIQI")


@dataclass(frozen=True)
class EstimateReport:
    """A point estimate plus how it was produced.

    method is "heavy-hitter" iff the per-epoch read exceeded the
    threshold; the value is then that read, otherwise the interpolated
    reconstruction. ``stale`` marks answers whose covering time span
    had already moved past the target epoch.
    """

    value: float
    method: str
    level: int
    threshold: float
    stale: bool = False


def _folded_config(config: SketchConfig, folds: int) -> SketchConfig:
    return SketchConfig(config.depth, max(1, config.log_width - folds), config.seed)


class DualPyramid:
    """Level j: the time pyramid's level j at width 2^(b - j)."""

    def __init__(self, config: SketchConfig, max_level: int = DEFAULT_MAX_LEVEL):
        if max_level < 1:
            raise ValueError(f"max_level must be >= 1, got {max_level}")
        self.config = config
        self.max_level = max_level
        # level-0 register: full-width mirror of the newest time level,
        # the cascade's seed and the normalizer for age-1 queries
        self._register = CmSketch(config)
        self._levels = [
            CmSketch(_folded_config(config, j)) for j in range(1, max_level + 1)
        ]
        self._t = 0

    @property
    def t(self) -> int:
        return self._t

    @property
    def level0(self) -> CmSketch:
        """The full-width register (fold count zero). Treat as read-only."""
        return self._register

    def level(self, j: int) -> CmSketch:
        """Level j's sketch, folded j times. Treat as read-only."""
        if not 1 <= j <= self.max_level:
            raise EpochRangeError(f"level {j} out of range 1..{self.max_level}")
        return self._levels[j - 1]

    def tick(self, unit: CmSketch) -> None:
        """Run the time cascade on a folding cumulative sum of the unit."""
        require_compatible(unit.config, self.config)
        self._t += 1
        top = min(dyadic_ruler(self._t), self.max_level)
        cumulative = unit.copy()
        backup = cumulative
        cumulative = backup.merge(self._register)
        self._register = backup
        for j in range(1, top + 1):
            if cumulative.config.log_width > 1:
                cumulative = cumulative.fold()
            backup = cumulative
            cumulative = backup.merge(self._levels[j - 1])
            self._levels[j - 1] = backup

    def insert_delayed(self, key: bytes, count: int, epoch: int) -> None:
        """Mirror a late arrival into every covering level at its own width."""
        if not 1 <= epoch <= self._t:
            raise EpochRangeError(f"epoch {epoch} outside completed range 1..{self._t}")
        for j in covering_levels(self._t, self.max_level, epoch):
            if j == 0:
                self._register.insert(key, count)
            else:
                self._levels[j - 1].insert(key, count)

    def merge_with(self, other: "DualPyramid") -> "DualPyramid":
        require_compatible(self.config, other.config)
        if self.max_level != other.max_level:
            raise AlignmentError(
                f"max_level differs: {self.max_level} != {other.max_level}"
            )
        if self._t != other._t:
            raise AlignmentError(f"epoch counters differ: {self._t} != {other._t}")
        merged = DualPyramid(self.config, self.max_level)
        merged._t = self._t
        merged._register = self._register.merge(other._register)
        merged._levels = [a.merge(b) for a, b in zip(self._levels, other._levels)]
        return merged

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DualPyramid):
            return NotImplemented
        return (
            self.config == other.config
            and self.max_level == other.max_level
            and self._t == other._t
            and self._register == other._register
            and self._levels == other._levels
        )

    __hash__ = None  # type: ignore[assignment]

    # -- snapshot: magic "HKDP", version u32, t u64, max_level u32, then
    # the register and levels 1..max_level as sketch snapshots.

    def serialize(self) -> bytes:
        parts = [_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, self._t, self.max_level)]
        parts.append(self._register.serialize())
        parts.extend(level.serialize() for level in self._levels)
        return b"".join(parts)

    @classmethod
    def deserialize(cls, data: bytes) -> "DualPyramid":
        pyramid, end = cls.read_from(data, 0)
        if end != len(data):
            raise SnapshotFormatError(f"{len(data) - end} trailing bytes after pyramid")
        return pyramid

    @classmethod
    def read_from(cls, data: bytes, offset: int) -> tuple["DualPyramid", int]:
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
        register, offset = CmSketch.read_from(data, offset)
        levels = []
        for j in range(1, max_level + 1):
            sketch, offset = CmSketch.read_from(data, offset)
            if sketch.config != _folded_config(register.config, j):
                raise SnapshotFormatError(f"level {j} width off schedule")
            levels.append(sketch)
        pyramid = cls(register.config, max_level)
        pyramid._t = t
        pyramid._register = register
        pyramid._levels = levels
        return pyramid, offset


def _common_clock(
    time_pyramid: TimePyramid, item_pyramid: ItemPyramid, dual_pyramid: DualPyramid
) -> int:
    t = time_pyramid.t
    if item_pyramid.t != t or dual_pyramid.t != t:
        raise ClockSkewError(
            f"pyramids disagree on t: time={t} item={item_pyramid.t} "
            f"dual={dual_pyramid.t}"
        )
    return t


def interpolate(
    key: bytes,
    epoch: int,
    time_pyramid: TimePyramid,
    item_pyramid: ItemPyramid,
    dual_pyramid: DualPyramid,
) -> float:
    """Reconstructed per-epoch count of ``key`` from the three pyramids.

    Per hash row: (time-level cell) * (epoch cell) / (dual cell), then
    the min across rows. A row whose dual cell is zero contributes 0
    when both numerator factors are zero (the consistent case) and is
    skipped otherwise; if every row is skipped the estimate is 0.
    Queries for the newest completed epoch bypass interpolation and
    return the full-width per-epoch read.
    """
    t = _common_clock(time_pyramid, item_pyramid, dual_pyramid)
    if not 1 <= epoch <= t:
        raise EpochRangeError(f"epoch {epoch} outside completed range 1..{t}")
    if epoch == t:
        return float(item_pyramid.query_epoch(key, epoch))
    j = min((t - epoch).bit_length() - 1, time_pyramid.max_level, dual_pyramid.max_level)
    time_cells = time_pyramid.level(j).row_values(key)
    epoch_cells = item_pyramid.epoch_sketch(epoch).row_values(key)
    denominator = dual_pyramid.level0 if j == 0 else dual_pyramid.level(j)
    dual_cells = denominator.row_values(key)
    best: float | None = None
    for numer_t, numer_x, denom in zip(time_cells, epoch_cells, dual_cells):
        if denom == 0:
            if numer_t != 0 and numer_x != 0:
                continue  # inconsistent row (delayed-insert race): skip
            candidate = 0.0
        else:
            candidate = float(numer_t) * float(numer_x) / float(denom)
        best = candidate if best is None else min(best, candidate)
    return 0.0 if best is None else best


def heavy_hitter_threshold(item_pyramid: ItemPyramid, epoch: int, scale: float = 1.0) -> float:
    """Absolute error scale of the epoch's folded sketch: e/width * epoch mass."""
    width = item_pyramid.epoch_sketch(epoch).config.width
    return scale * (math.e / width) * item_pyramid.epoch_total(epoch)


def estimate(
    key: bytes,
    epoch: int,
    time_pyramid: TimePyramid,
    item_pyramid: ItemPyramid,
    dual_pyramid: DualPyramid,
    threshold_scale: float = 1.0,
) -> EstimateReport:
    """Point estimate with the heavy-hitter switch.

    The per-epoch read is trusted when it clears the folded sketch's
    absolute error scale; below that, interpolation takes over.
    """
    t = _common_clock(time_pyramid, item_pyramid, dual_pyramid)
    if not 1 <= epoch <= t:
        raise EpochRangeError(f"epoch {epoch} outside completed range 1..{t}")
    item_count = item_pyramid.query_epoch(key, epoch)
    threshold = heavy_hitter_threshold(item_pyramid, epoch, threshold_scale)
    descriptor = time_pyramid.covering_level(epoch)
    if item_count > threshold:
        return EstimateReport(
            float(item_count),
            METHOD_HEAVY_HITTER,
            descriptor.level,
            threshold,
            descriptor.stale,
        )
    value = interpolate(key, epoch, time_pyramid, item_pyramid, dual_pyramid)
    return EstimateReport(
        value, METHOD_INTERPOLATED, descriptor.level, threshold, descriptor.stale
    )
