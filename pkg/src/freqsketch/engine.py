"""The deployable engine: one clock, three pyramids, persistence.

All pyramids share a single epoch counter; closing an epoch ticks the
three of them with the same unit sketch, so every published state is
internally consistent and two engines fed disjoint streams in lockstep
merge into exactly the engine that would have seen the union.

Replay mode drives the clock from the input (explicit epochs and TICK
commands); live mode closes epochs on wall-clock boundaries aligned to
multiples of the epoch duration since the Unix epoch, so independently
started engines fall on the same grid.
"""

from __future__ import annotations

import math
import os
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dual import DualPyramid, EstimateReport, METHOD_HEAVY_HITTER, METHOD_INTERPOLATED, estimate
from .errors import (
    AlignmentError,
    BadMagicError,
    ConfigError,
    EpochRangeError,
    SnapshotFormatError,
    TruncatedSnapshotError,
    VersionMismatchError,
)
from .itempyramid import ItemPyramid
from .ngram import NgramStore, SmoothingConfig, bigram_chain, unigram_chain
from .sketch import SketchConfig
from .timepyramid import DEFAULT_MAX_LEVEL, TimePyramid

SNAPSHOT_MAGIC = b"HKEG"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIBBddQQQ")
_BLOB = struct.Struct("<Q")

MODE_REPLAY = "replay"
MODE_LIVE = "live"

ENV_PREFIX = "FREQSKETCH_"


@dataclass(frozen=True)
class EngineConfig:
    """Everything needed to build an engine.

    Defaults mirror the production profile (4 rows, 2^23 bins, 2^11
    aggregation levels, 5-minute epochs); tests and the eval harness
    use much smaller desk profiles.
    """

    mode: str = MODE_REPLAY
    epoch_seconds: float = 300.0
    sketch: SketchConfig = field(default_factory=lambda: SketchConfig(4, 23, 1))
    max_level: int = DEFAULT_MAX_LEVEL
    threshold_scale: float = 1.0
    ngram: bool = False
    ngram_log_width: int | None = None
    smoothing: SmoothingConfig | None = None
    snapshot_path: str | None = None
    host: str = "127.0.0.1"
    port: int = 7700

    def __post_init__(self) -> None:
        if self.mode not in (MODE_REPLAY, MODE_LIVE):
            raise ConfigError(f"mode must be replay or live, got {self.mode!r}")
        if self.epoch_seconds <= 0:
            raise ConfigError("epoch_seconds must be positive")
        if self.max_level < 1:
            raise ConfigError("max_level must be >= 1")
        if self.threshold_scale <= 0:
            raise ConfigError("threshold_scale must be positive")

    def ngram_sketch_config(self) -> SketchConfig:
        log_width = self.ngram_log_width or self.sketch.log_width
        return SketchConfig(self.sketch.depth, log_width, self.sketch.seed)


_CONFIG_KEYS = {
    "mode": str,
    "epoch_seconds": float,
    "depth": int,
    "log_width": int,
    "seed": int,
    "max_level": int,
    "threshold_scale": float,
    "ngram": bool,
    "ngram_log_width": int,
    "smoothing_n0": float,
    "smoothing_n1": float,
    "smoothing_vocabulary": int,
    "snapshot_path": str,
    "host": str,
    "port": int,
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def load_config(
    path: str | Path | None = None,
    env: dict[str, str] | None = None,
    overrides: dict[str, str] | None = None,
) -> EngineConfig:
    """Build a config from key=value text, environment, and overrides.

    Precedence: defaults < file < FREQSKETCH_* environment < overrides.
    """
    raw: dict[str, str] = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            raw[key.strip()] = value.strip()
    env = dict(os.environ) if env is None else env
    for key in _CONFIG_KEYS:
        env_value = env.get(ENV_PREFIX + key.upper())
        if env_value is not None:
            raw[key] = env_value
    raw.update(overrides or {})
    return config_from_mapping(raw)


def config_from_mapping(raw: dict[str, str]) -> EngineConfig:
    parsed: dict[str, object] = {}
    for key, value in raw.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        kind = _CONFIG_KEYS[key]
        try:
            parsed[key] = _parse_bool(value) if kind is bool else kind(value)
        except ValueError as exc:
            raise ConfigError(f"config key {key}: {exc}") from exc
    sketch = SketchConfig(
        int(parsed.pop("depth", 4)),
        int(parsed.pop("log_width", 23)),
        int(parsed.pop("seed", 1)),
    )
    smoothing = None
    n0 = parsed.pop("smoothing_n0", None)
    n1 = parsed.pop("smoothing_n1", 0.0)
    vocabulary = parsed.pop("smoothing_vocabulary", 1)
    if n0 is not None:
        smoothing = SmoothingConfig(float(n0), float(n1), int(vocabulary))
    return EngineConfig(sketch=sketch, smoothing=smoothing, **parsed)  # type: ignore[arg-type]


@dataclass
class IngestSummary:
    lines: int = 0
    inserted: int = 0
    delayed: int = 0
    dropped: int = 0
    errors: int = 0
    ticks: int = 0

    def as_text(self) -> str:
        return (
            f"lines={self.lines} inserted={self.inserted} delayed={self.delayed} "
            f"dropped={self.dropped} errors={self.errors} ticks={self.ticks}"
        )


class Engine:
    """Three synchronized pyramids plus an optional n-gram store."""

    def __init__(self, config: EngineConfig):
        self.config = config
        self.time = TimePyramid(config.sketch, config.max_level)
        self.items = ItemPyramid(config.sketch)
        self.dual = DualPyramid(config.sketch, config.max_level)
        self.ngrams: NgramStore | None = (
            NgramStore(config.ngram_sketch_config(), config.smoothing)
            if config.ngram
            else None
        )
        self._single = unigram_chain(1)
        self._pair = bigram_chain(2)
        self._previous_token: bytes | None = None
        self.mass = 0
        self.live_origin = 0  # wall-clock epoch index at the first live tick

    @property
    def t(self) -> int:
        return self.time.t

    @property
    def open_epoch(self) -> int:
        return self.time.t + 1

    def insert(self, token: bytes, count: int = 1) -> None:
        """Record arrivals in the open epoch."""
        self.time.insert_current(token, count)
        self.mass += count
        self._feed_ngrams(token, count)

    def tick(self) -> None:
        """Close the open epoch across all pyramids."""
        unit = self.time.unit
        self.time.tick()
        self.items.tick(unit)
        self.dual.tick(unit)

    def insert_delayed(self, token: bytes, count: int, epoch: int) -> bool:
        """Route a late arrival into every structure covering its epoch.

        Returns False when the epoch has aged out of every time level;
        the record is then dropped entirely to keep the pyramids
        mutually consistent.
        """
        if epoch == self.open_epoch:
            self.insert(token, count)
            return True
        if not 1 <= epoch <= self.t:
            raise EpochRangeError(
                f"epoch {epoch} outside 1..{self.open_epoch} (open epoch included)"
            )
        if not self.time.covering_levels(epoch):
            return False
        self.time.insert_delayed(token, count, epoch)
        self.items.insert_delayed(token, count, epoch)
        self.dual.insert_delayed(token, count, epoch)
        self.mass += count
        self._feed_ngrams(token, count)
        return True

    def _feed_ngrams(self, token: bytes, count: int) -> None:
        # flat store, no time axis: consume singles plus adjacent pairs
        # in arrival order; count > 1 means a run of identical tokens
        if self.ngrams is None:
            return
        self.ngrams.insert_tuple(self._single, (token,), count)
        if self._previous_token is not None:
            self.ngrams.insert_tuple(self._pair, (self._previous_token, token))
        if count > 1:
            self.ngrams.insert_tuple(self._pair, (token, token), count - 1)
        self._previous_token = token

    def query(self, token: bytes, epoch: int) -> EstimateReport:
        """Point estimate; the open epoch answers from the unit sketch."""
        if epoch == self.open_epoch:
            count = self.time.unit.query(token)
            threshold = (
                self.config.threshold_scale
                * (math.e / self.config.sketch.width)
                * self.time.unit.total_mass
            )
            method = METHOD_HEAVY_HITTER if count > threshold else METHOD_INTERPOLATED
            return EstimateReport(float(count), method, 0, threshold, False)
        return estimate(
            token,
            epoch,
            self.time,
            self.items,
            self.dual,
            self.config.threshold_scale,
        )

    def query_range(self, token: bytes, first: int, last: int) -> float:
        """Sum of per-epoch point estimates over an inclusive epoch range."""
        if first < 1 or last < first or last > self.open_epoch:
            raise EpochRangeError(f"bad epoch range {first}..{last}")
        return sum(self.query(token, s).value for s in range(first, last + 1))

    def ngram_estimate(self, tokens: list[bytes]) -> float:
        if self.ngrams is None:
            raise ConfigError("n-gram store disabled")
        if not tokens:
            raise ValueError("need at least one token")
        template = unigram_chain(1) if len(tokens) == 1 else bigram_chain(len(tokens))
        return self.ngrams.estimate_tuple(template, tokens)

    def stats(self) -> tuple[int, int]:
        return self.t, self.mass

    def merge_with(self, other: "Engine") -> "Engine":
        """Set-additive merge of two engines ticked in lockstep."""
        if self.config.sketch != other.config.sketch:
            raise AlignmentError("engines configured differently")
        if self.t != other.t:
            raise AlignmentError(f"epoch counters differ: {self.t} != {other.t}")
        if self.live_origin != other.live_origin:
            raise AlignmentError("engines started in different live epochs")
        merged = Engine(self.config)
        merged.time = self.time.merge_with(other.time)
        merged.items = self.items.merge_with(other.items)
        merged.dual = self.dual.merge_with(other.dual)
        merged.mass = self.mass + other.mass
        merged.live_origin = self.live_origin
        if self.ngrams is not None and other.ngrams is not None:
            merged_store = NgramStore(self.ngrams.config, self.ngrams.smoothing)
            blob_a, blob_b = self.ngrams, other.ngrams
            sizes = set(blob_a._sketches) | set(blob_b._sketches)
            for size in sizes:
                a = blob_a._sketches.get(size)
                b = blob_b._sketches.get(size)
                if a is not None and b is not None:
                    merged_store._sketches[size] = a.merge(b)
                else:
                    merged_store._sketches[size] = (a or b).copy()  # type: ignore[union-attr]
            merged_store._windows = blob_a._windows + blob_b._windows
            merged.ngrams = merged_store
        return merged

    # -- ingestion --------------------------------------------------------

    def ingest_lines(self, lines, replay: bool | None = None) -> IngestSummary:
        """Feed `epoch<TAB>token` (replay) or bare `token` (live) lines.

        Epoch jumps forward close epochs; epochs at or below the
        current count take the delayed path; epochs past retention are
        dropped and counted. Malformed lines are counted and skipped.
        At end of input the open epoch is closed if it received data.
        """
        replay = (self.config.mode == MODE_REPLAY) if replay is None else replay
        summary = IngestSummary()
        open_epoch_dirty = False
        for raw in lines:
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            summary.lines += 1
            if not replay:
                self.insert(line.encode())
                summary.inserted += 1
                continue
            epoch_text, sep, token = line.partition("\t")
            if not sep or not token:
                summary.errors += 1
                continue
            try:
                epoch = int(epoch_text)
            except ValueError:
                summary.errors += 1
                continue
            if epoch < 1:
                summary.errors += 1
                continue
            if epoch > self.open_epoch:
                while self.open_epoch < epoch:
                    self.tick()
                    summary.ticks += 1
                open_epoch_dirty = False
            if epoch == self.open_epoch:
                self.insert(token.encode())
                summary.inserted += 1
                open_epoch_dirty = True
            else:
                if self.insert_delayed(token.encode(), 1, epoch):
                    summary.delayed += 1
                else:
                    summary.dropped += 1
        if replay and open_epoch_dirty:
            self.tick()
            summary.ticks += 1
        return summary

    def ingest_file(self, path: str | Path, replay: bool | None = None) -> IngestSummary:
        with open(path, "r", encoding="utf-8") as handle:
            return self.ingest_lines(handle, replay=replay)

    # -- persistence ------------------------------------------------------
    # magic "HKEG", version u32, mode u8, ngram-present u8,
    # epoch_seconds f64, threshold_scale f64, mass u64, live_origin u64,
    # blob count u64, then length-prefixed blobs: time pyramid, item
    # pyramid, dual pyramid, and the n-gram store when present.

    def snapshot_bytes(self) -> bytes:
        blobs = [self.time.serialize(), self.items.serialize(), self.dual.serialize()]
        if self.ngrams is not None:
            blobs.append(self.ngrams.serialize())
        head = _HEADER.pack(
            SNAPSHOT_MAGIC,
            SNAPSHOT_VERSION,
            0 if self.config.mode == MODE_REPLAY else 1,
            0 if self.ngrams is None else 1,
            self.config.epoch_seconds,
            self.config.threshold_scale,
            self.mass,
            self.live_origin,
            len(blobs),
        )
        parts = [head]
        for blob in blobs:
            parts.append(_BLOB.pack(len(blob)))
            parts.append(blob)
        return b"".join(parts)

    def save_snapshot(self, path: str | Path) -> None:
        Path(path).write_bytes(self.snapshot_bytes())

    @classmethod
    def from_snapshot_bytes(
        cls, data: bytes, config: EngineConfig | None = None
    ) -> "Engine":
        if len(data) < 4:
            raise TruncatedSnapshotError("snapshot shorter than its magic")
        if data[:4] != SNAPSHOT_MAGIC:
            raise BadMagicError(f"expected {SNAPSHOT_MAGIC!r}, found {data[:4]!r}")
        if len(data) < _HEADER.size:
            raise TruncatedSnapshotError("engine header incomplete")
        (
            _,
            version,
            mode_flag,
            ngram_flag,
            epoch_seconds,
            threshold_scale,
            mass,
            live_origin,
            blob_count,
        ) = _HEADER.unpack_from(data, 0)
        if version != SNAPSHOT_VERSION:
            raise VersionMismatchError(f"unsupported engine version {version}")
        expected_blobs = 3 + (1 if ngram_flag else 0)
        if blob_count != expected_blobs:
            raise SnapshotFormatError(f"expected {expected_blobs} blobs, got {blob_count}")
        offset = _HEADER.size
        blobs = []
        for _ in range(blob_count):
            if len(data) - offset < _BLOB.size:
                raise TruncatedSnapshotError("blob length record incomplete")
            (length,) = _BLOB.unpack_from(data, offset)
            offset += _BLOB.size
            if len(data) - offset < length:
                raise TruncatedSnapshotError("blob payload incomplete")
            blobs.append(data[offset : offset + length])
            offset += length
        if offset != len(data):
            raise SnapshotFormatError(f"{len(data) - offset} trailing bytes after engine")
        time_pyramid = TimePyramid.deserialize(blobs[0])
        item_pyramid = ItemPyramid.deserialize(blobs[1])
        dual_pyramid = DualPyramid.deserialize(blobs[2])
        if item_pyramid.t != time_pyramid.t or dual_pyramid.t != time_pyramid.t:
            raise SnapshotFormatError("pyramid snapshots disagree on epoch count")
        if config is None:
            config = EngineConfig(
                mode=MODE_REPLAY if mode_flag == 0 else MODE_LIVE,
                epoch_seconds=epoch_seconds,
                threshold_scale=threshold_scale,
            )
        # structural fields always come from the snapshot itself
        engine = cls(
            replace(
                config,
                sketch=time_pyramid.config,
                max_level=time_pyramid.max_level,
                ngram=bool(ngram_flag),
            )
        )
        engine.time = time_pyramid
        engine.items = item_pyramid
        engine.dual = dual_pyramid
        if ngram_flag:
            engine.ngrams = NgramStore.deserialize(blobs[3], smoothing=config.smoothing)
        engine.mass = mass
        engine.live_origin = live_origin
        return engine

    @classmethod
    def load_snapshot(
        cls, path: str | Path, config: EngineConfig | None = None
    ) -> "Engine":
        return cls.from_snapshot_bytes(Path(path).read_bytes(), config)

    # -- live clock -------------------------------------------------------

    def wall_epoch_index(self, now: float | None = None) -> int:
        """Wall-clock epoch index on the shared grid."""
        now = time.time() if now is None else now
        return int(now // self.config.epoch_seconds)

    def live_catch_up(self, now: float | None = None) -> int:
        """Close every wall-clock epoch boundary passed since the last call.

        Returns the number of epochs closed. The first call pins the
        engine's origin so that merge partners must share a start epoch.
        """
        index = self.wall_epoch_index(now)
        if self.live_origin == 0:
            self.live_origin = index
            return 0
        ticks = 0
        while self.live_origin + self.t < index:
            self.tick()
            ticks += 1
        return ticks
