"""Count-Min sketch with a seeded hash family and width folding.

The sketch is a depth x 2^log_width matrix of unsigned counters. Each
insert increments one counter per row, addressed by that row's hash of
the key; a query returns the minimum of the addressed counters, which
never undercounts and overestimates by a bounded amount.

Two structural facts carry the rest of the package:

* Linearity: sketches of disjoint streams add cell-wise, so summaries
  of adjacent time intervals can be merged without touching raw data.
* Foldability: the column index is the low ``b`` bits of a full 64-bit
  row hash, so adding the top and bottom halves of each row yields
  exactly the sketch that would have been built at half the width.

Counters are 64-bit unsigned; overflow is out of contract (a 64-bit
counter outlives any realistic stream).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from hashlib import blake2b

import numpy as np

from .errors import (
    BadMagicError,
    CannotFoldError,
    ConfigError,
    IncompatibleSketchError,
    SnapshotFormatError,
    TruncatedSnapshotError,
    VersionMismatchError,
)

SNAPSHOT_MAGIC = b"HKSK"
SNAPSHOT_VERSION = 1
MAX_LOG_WIDTH = 62

_HEADER = struct.Struct("<4sIIIQQ")


@dataclass(frozen=True)
class SketchConfig:
    """Shape and seeding of a counter matrix.

    Two sketches are merge-compatible iff depth, log_width and seed are
    all equal.
    """

    depth: int
    log_width: int
    seed: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.depth, int) or self.depth < 1:
            raise ConfigError(f"depth must be a positive integer, got {self.depth}")
        if not isinstance(self.log_width, int) or not 1 <= self.log_width <= MAX_LOG_WIDTH:
            raise ConfigError(
                f"log_width must be in [1, {MAX_LOG_WIDTH}], got {self.log_width}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit value, got {self.seed}")

    @property
    def width(self) -> int:
        return 1 << self.log_width

    def folded(self) -> "SketchConfig":
        """Config of the half-width sketch produced by one fold."""
        if self.log_width < 2:
            raise CannotFoldError("log_width 1 cannot fold further")
        return SketchConfig(self.depth, self.log_width - 1, self.seed)


def log_width_for_error(epsilon: float) -> int:
    """Smallest log_width whose width is >= ceil(e / epsilon)."""
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    return max(1, math.ceil(math.log2(math.e / epsilon)))


def depth_for_confidence(delta: float) -> int:
    """Smallest depth >= ln(1/delta)."""
    if not 0 < delta < 1:
        raise ConfigError("delta must be in (0, 1)")
    return max(1, math.ceil(math.log(1.0 / delta)))


class HashFamily:
    """Deterministic family of 64-bit row hashes derived from one seed.

    Row ``i`` of a key is an 8-byte little-endian slice of a keyed
    BLAKE2b digest, so the full 64-bit value is fixed by
    (seed, i, key) alone. The b-bit column index is the value's b
    low-order bits, which makes the half-width index equal to the
    full-width index reduced mod 2^(b-1) by construction.
    """

    __slots__ = ("seed", "depth", "_key", "_salts")

    def __init__(self, seed: int, depth: int):
        self.seed = seed
        self.depth = depth
        self._key = seed.to_bytes(8, "little")
        # one 64-byte digest covers 8 rows; extra blocks vary the salt
        self._salts = [struct.pack("<Q8x", blk) for blk in range((depth + 7) // 8)]

    def row_hashes(self, key: bytes) -> np.ndarray:
        """Full 64-bit hash per row, shape (depth,)."""
        digest = b"".join(
            blake2b(key, digest_size=64, key=self._key, salt=salt).digest()
            for salt in self._salts
        )
        return np.frombuffer(digest, dtype="<u8")[: self.depth]

    def columns(self, key: bytes, log_width: int) -> np.ndarray:
        """Column index per row at the given width: the low bits of the hash."""
        return self.row_hashes(key) & np.uint64((1 << log_width) - 1)


@lru_cache(maxsize=None)
def _family(seed: int, depth: int) -> HashFamily:
    return HashFamily(seed, depth)


def require_compatible(a: SketchConfig, b: SketchConfig) -> None:
    """Raise IncompatibleSketchError naming the first differing field."""
    for field in ("depth", "log_width", "seed"):
        if getattr(a, field) != getattr(b, field):
            raise IncompatibleSketchError(
                f"{field} differs: {getattr(a, field)} != {getattr(b, field)}"
            )


class CmSketch:
    """The counter matrix: insert, query, merge, fold, serialize.

    Thread model: any number of concurrent readers with no writer. With
    one writer, a reader may observe a partially applied insert across
    rows; monotone counters keep any interleaving an overestimate of
    the pre-insert state.
    """

    __slots__ = ("config", "_counters", "_total", "_hashes", "_rows")

    def __init__(
        self,
        config: SketchConfig,
        _counters: np.ndarray | None = None,
        _total: int = 0,
    ):
        self.config = config
        if _counters is None:
            _counters = np.zeros((config.depth, config.width), dtype=np.uint64)
        self._counters = _counters
        self._total = _total
        self._hashes = _family(config.seed, config.depth)
        self._rows = np.arange(config.depth)

    @property
    def counters(self) -> np.ndarray:
        """The counter matrix. Treat as read-only."""
        return self._counters

    @property
    def total_mass(self) -> int:
        """Sum of all inserted counts; equals every row's sum."""
        return self._total

    def insert(self, key: bytes, count: int = 1) -> None:
        """Add ``count`` to one cell per row."""
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        cols = self._hashes.columns(key, self.config.log_width)
        self._counters[self._rows, cols] += np.uint64(count)
        self._total += count

    def row_values(self, key: bytes) -> np.ndarray:
        """The d addressed counters for a key, one per row."""
        cols = self._hashes.columns(key, self.config.log_width)
        return self._counters[self._rows, cols]

    def query(self, key: bytes) -> int:
        """Estimated count: min over rows, never below the true count."""
        return int(self.row_values(key).min())

    def merge(self, other: "CmSketch") -> "CmSketch":
        """Cell-wise sum with a compatible sketch; a new sketch."""
        self._require_compatible(other)
        return CmSketch(
            self.config,
            _counters=self._counters + other._counters,
            _total=self._total + other._total,
        )

    def fold(self) -> "CmSketch":
        """Half the width by adding cell j and cell j + width/2.

        The result is bit-identical to a sketch of the same stream
        built directly at log_width - 1 with the same seed.
        """
        if self.config.log_width < 2:
            raise CannotFoldError("cannot fold a width-2 sketch")
        half = self.config.width // 2
        folded = self._counters[:, :half] + self._counters[:, half:]
        return CmSketch(self.config.folded(), _counters=folded, _total=self._total)

    def copy(self) -> "CmSketch":
        return CmSketch(self.config, _counters=self._counters.copy(), _total=self._total)

    def row_sums(self) -> list[int]:
        return [int(s) for s in self._counters.sum(axis=1, dtype=np.uint64)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CmSketch):
            return NotImplemented
        return (
            self.config == other.config
            and self._total == other._total
            and np.array_equal(self._counters, other._counters)
        )

    __hash__ = None  # type: ignore[assignment]

    def _require_compatible(self, other: "CmSketch") -> None:
        require_compatible(self.config, other.config)

    # -- snapshot format -------------------------------------------------
    # little-endian: magic "HKSK", version u32, depth u32, log_width u32,
    # seed u64, total_mass u64, then depth * width u64 counters row-major.

    def serialize(self) -> bytes:
        header = _HEADER.pack(
            SNAPSHOT_MAGIC,
            SNAPSHOT_VERSION,
            self.config.depth,
            self.config.log_width,
            self.config.seed,
            self._total,
        )
        body = np.ascontiguousarray(self._counters, dtype="<u8").tobytes()
        return header + body

    @classmethod
    def deserialize(cls, data: bytes) -> "CmSketch":
        sketch, end = cls.read_from(data, 0)
        if end != len(data):
            raise SnapshotFormatError(f"{len(data) - end} trailing bytes after sketch")
        return sketch

    @classmethod
    def read_from(cls, data: bytes, offset: int) -> tuple["CmSketch", int]:
        """Parse one sketch snapshot from ``data`` starting at ``offset``."""
        if len(data) - offset < 4:
            raise TruncatedSnapshotError("snapshot shorter than its magic")
        magic = bytes(data[offset : offset + 4])
        if magic != SNAPSHOT_MAGIC:
            raise BadMagicError(f"expected {SNAPSHOT_MAGIC!r}, found {magic!r}")
        if len(data) - offset < _HEADER.size:
            raise TruncatedSnapshotError("snapshot header incomplete")
        _, version, depth, log_width, seed, total = _HEADER.unpack_from(data, offset)
        if version != SNAPSHOT_VERSION:
            raise VersionMismatchError(f"unsupported snapshot version {version}")
        config = SketchConfig(depth, log_width, seed)  # ConfigError on bad fields
        offset += _HEADER.size
        need = depth * config.width * 8
        if len(data) - offset < need:
            raise TruncatedSnapshotError(
                f"counter payload needs {need} bytes, {len(data) - offset} available"
            )
        counters = (
            np.frombuffer(data, dtype="<u8", count=depth * config.width, offset=offset)
            .reshape(depth, config.width)
            .astype(np.uint64, copy=True)
        )
        return cls(config, _counters=counters, _total=total), offset + need
