"""Tuple frequency estimation from sketched marginals.

Longer tuples are too rare to sketch accurately head-on: the error of
a counter matrix is absolute, so it swamps low-frequency keys. Instead
a tuple's count is factorized over a junction-tree decomposition of
its dependence structure: multiply clique counts, divide separator
counts, scale by the grand total,

    estimate = n^(|separators| - |cliques| + 1)
               * prod(clique counts) / prod(separator counts).

A chain of pairwise cliques reproduces the first-order Markov
estimate n_ab * n_bc / n_b; singleton cliques with no separators give
the independence product. One sketch is kept per projection size, so
a pair template and its singleton separators share two sketches total.

Optional backoff smoothing blends sketched counts with a uniform
pseudo-count for singletons and with the product of singleton
estimates for pairs, keeping every probability strictly positive.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import (
    ArityError,
    BadMagicError,
    ConfigError,
    InconsistentCountsError,
    SnapshotFormatError,
    TemplateError,
    TruncatedSnapshotError,
    VersionMismatchError,
)
from .sketch import CmSketch, SketchConfig

SNAPSHOT_MAGIC = b"HKNG"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQQI")
_SHAPE = struct.Struct("<IQ")

_MAX_CLIQUES = 12  # validation backtracks over orderings


@dataclass(frozen=True)
class SmoothingConfig:
    """Backoff parameters: singleton pseudo-count, pair backoff weight,
    and the vocabulary-size surrogate used by the uniform prior."""

    n0: float
    n1: float
    vocabulary: int

    def __post_init__(self) -> None:
        if self.n0 < 0 or self.n1 < 0:
            raise ConfigError("smoothing pseudo-counts must be non-negative")
        if self.vocabulary < 1:
            raise ConfigError("vocabulary surrogate must be a positive integer")


@dataclass(frozen=True)
class FactorTemplate:
    """A junction-tree decomposition of tuple positions 1..arity.

    Cliques must cover every position; each listed separator must be
    realizable as the intersection of a clique with the union of the
    cliques placed before it, for some placement order (the running
    intersection property). Missing separators are implicitly empty:
    a template of k singleton cliques with no separators is the
    independence decomposition.
    """

    arity: int
    cliques: tuple[tuple[int, ...], ...]
    separators: tuple[tuple[int, ...], ...] = ()
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.arity < 1:
            raise TemplateError(f"arity must be >= 1, got {self.arity}")
        object.__setattr__(
            self, "cliques", tuple(tuple(sorted(set(c))) for c in self.cliques)
        )
        object.__setattr__(
            self, "separators", tuple(tuple(sorted(set(s))) for s in self.separators)
        )
        self._validate()

    def _validate(self) -> None:
        positions = set(range(1, self.arity + 1))
        if not self.cliques:
            raise TemplateError("template needs at least one clique")
        if len(self.cliques) > _MAX_CLIQUES:
            raise TemplateError(f"more than {_MAX_CLIQUES} cliques unsupported")
        covered: set[int] = set()
        for group in self.cliques + self.separators:
            if not set(group) <= positions:
                raise TemplateError(f"indices {group} outside 1..{self.arity}")
        for clique in self.cliques:
            covered |= set(clique)
        if covered != positions:
            raise TemplateError(f"cliques cover {sorted(covered)}, need {sorted(positions)}")
        for sep in self.separators:
            if not sep:
                raise TemplateError("separators must be nonempty (empty ones are implicit)")
        if len(self.separators) > len(self.cliques) - 1:
            raise TemplateError("more separators than cliques minus one")
        if not self._running_intersection():
            raise TemplateError(
                "cliques and separators do not satisfy the running intersection property"
            )

    def _running_intersection(self) -> bool:
        cliques = [frozenset(c) for c in self.cliques]
        remaining = Counter(frozenset(s) for s in self.separators)
        used = [False] * len(cliques)

        def place(count: int, covered: frozenset[int]) -> bool:
            if count == len(cliques):
                return sum(remaining.values()) == 0
            for idx, clique in enumerate(cliques):
                if used[idx]:
                    continue
                intersection = clique & covered
                if intersection:
                    if remaining[intersection] == 0:
                        continue
                    if not any(
                        used[j] and intersection <= cliques[j]
                        for j in range(len(cliques))
                    ):
                        continue
                    remaining[intersection] -= 1
                    used[idx] = True
                    if place(count + 1, covered | clique):
                        return True
                    used[idx] = False
                    remaining[intersection] += 1
                else:
                    # first clique of a (sub)tree: implicit empty separator
                    used[idx] = True
                    if place(count + 1, covered | clique):
                        return True
                    used[idx] = False
            return False

        return place(0, frozenset())

    def projection_sizes(self) -> set[int]:
        return {len(g) for g in self.cliques + self.separators}


def unigram_chain(arity: int, name: str = "") -> FactorTemplate:
    """Independence decomposition: one singleton clique per position."""
    return FactorTemplate(
        arity,
        tuple((i,) for i in range(1, arity + 1)),
        (),
        name or f"unigram-chain-{arity}",
    )


def bigram_chain(arity: int, name: str = "") -> FactorTemplate:
    """First-order chain: adjacent pairs with singleton overlaps."""
    if arity < 2:
        return unigram_chain(arity, name or "bigram-chain-1")
    return FactorTemplate(
        arity,
        tuple((i, i + 1) for i in range(1, arity)),
        tuple((i,) for i in range(2, arity)),
        name or f"bigram-chain-{arity}",
    )


def single_clique(arity: int, name: str = "") -> FactorTemplate:
    """Whole tuple as one clique: the direct-sketch baseline."""
    return FactorTemplate(
        arity, (tuple(range(1, arity + 1)),), (), name or f"direct-{arity}"
    )


def parse_template_file(path) -> FactorTemplate:
    """Load a template definition file; the name defaults to the file stem."""
    from pathlib import Path

    path = Path(path)
    return parse_template(path.read_text(), name=path.stem)


def parse_template(text: str, name: str = "") -> FactorTemplate:
    """Parse the text template format: 'arity k', 'clique i,j', 'sep i' lines."""
    arity = None
    cliques: list[tuple[int, ...]] = []
    separators: list[tuple[int, ...]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split(None, 1)
        keyword = fields[0].lower()
        rest = fields[1] if len(fields) > 1 else ""
        try:
            if keyword == "arity":
                arity = int(rest)
            elif keyword == "clique":
                cliques.append(tuple(int(x) for x in rest.split(",")))
            elif keyword == "sep":
                separators.append(tuple(int(x) for x in rest.split(",")))
            else:
                raise TemplateError(f"line {lineno}: unknown keyword {keyword!r}")
        except ValueError as exc:
            raise TemplateError(f"line {lineno}: {exc}") from exc
    if arity is None:
        raise TemplateError("template file declares no arity")
    return FactorTemplate(arity, tuple(cliques), tuple(separators), name)


def encode_symbols(symbols: Sequence[bytes]) -> bytes:
    """Injective key encoding: length-prefixed concatenation."""
    return b"".join(struct.pack("<I", len(s)) + s for s in symbols)


class NgramStore:
    """Sketched projection counts keyed by projection size.

    The grand total n counts insert_tuple calls (tuple windows); with
    mixed-arity feeding it is the pooled window count, so templates
    whose estimate cancels n (any chain of pairwise cliques) are
    unaffected while probability outputs assume one shape per store.
    """

    def __init__(self, config: SketchConfig, smoothing: SmoothingConfig | None = None):
        self.config = config
        self.smoothing = smoothing
        self._sketches: dict[int, CmSketch] = {}
        self._windows = 0

    @property
    def window_count(self) -> int:
        return self._windows

    def sketch_for_size(self, size: int) -> CmSketch | None:
        return self._sketches.get(size)

    def insert_tuple(
        self, template: FactorTemplate, symbols: Sequence[bytes], count: int = 1
    ) -> None:
        """Insert one window: every clique and separator projection."""
        if len(symbols) != template.arity:
            raise ArityError(
                f"template arity {template.arity}, got {len(symbols)} symbols"
            )
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        for group in template.cliques + template.separators:
            projection = tuple(symbols[i - 1] for i in group)
            sketch = self._sketches.get(len(group))
            if sketch is None:
                sketch = CmSketch(self.config)
                self._sketches[len(group)] = sketch
            sketch.insert(encode_symbols(projection), count)
        self._windows += count

    def consume(self, template: FactorTemplate, tokens: Sequence[bytes]) -> int:
        """Slide an arity-length window over a token stream.

        Returns the number of windows inserted: len(tokens) - arity + 1.
        """
        k = template.arity
        windows = 0
        for i in range(len(tokens) - k + 1):
            self.insert_tuple(template, tokens[i : i + k])
            windows += 1
        return windows

    def consume_counts(
        self, template: FactorTemplate, window_counts: Iterable[tuple[Sequence[bytes], int]]
    ) -> None:
        """Bulk form of consume for pre-aggregated (window, count) pairs."""
        for symbols, count in window_counts:
            self.insert_tuple(template, symbols, count)

    def shape_count(self, symbols: Sequence[bytes]) -> int:
        """Raw sketched count of one projection (0 if the shape is unseen)."""
        sketch = self._sketches.get(len(symbols))
        if sketch is None:
            return 0
        return sketch.query(encode_symbols(symbols))

    def smoothed_unigram(self, symbol: bytes) -> float:
        """(count + n0) / (n + vocabulary * n0); the uniform prior at n = 0."""
        if self.smoothing is None:
            raise ConfigError("smoothing config not set")
        n0 = self.smoothing.n0
        denominator = self._windows + self.smoothing.vocabulary * n0
        if denominator == 0:
            return 0.0
        return (self.shape_count((symbol,)) + n0) / denominator

    def smoothed_bigram(self, first: bytes, second: bytes) -> float:
        """(count + n1 * p(first) * p(second)) / (n + n1)."""
        if self.smoothing is None:
            raise ConfigError("smoothing config not set")
        n1 = self.smoothing.n1
        denominator = self._windows + n1
        if denominator == 0:
            return 0.0
        backoff = n1 * self.smoothed_unigram(first) * self.smoothed_unigram(second)
        return (self.shape_count((first, second)) + backoff) / denominator

    def estimate_tuple(
        self, template: FactorTemplate, symbols: Sequence[bytes]
    ) -> float:
        """Estimated count of the tuple under the template's factorization.

        With smoothing set and all projections of size <= 2, smoothed
        probabilities replace raw counts and the result stays positive.
        Without smoothing, a zero clique count yields 0 and a zero
        separator count under nonzero cliques is an inconsistency.
        """
        if len(symbols) != template.arity:
            raise ArityError(
                f"template arity {template.arity}, got {len(symbols)} symbols"
            )
        smoothable = self.smoothing is not None and all(
            size <= 2 for size in template.projection_sizes()
        )
        if smoothable:
            return self._estimate_smoothed(template, symbols)
        clique_counts = [
            self.shape_count(tuple(symbols[i - 1] for i in c)) for c in template.cliques
        ]
        if any(c == 0 for c in clique_counts):
            return 0.0
        separator_counts = [
            self.shape_count(tuple(symbols[i - 1] for i in s))
            for s in template.separators
        ]
        if any(c == 0 for c in separator_counts):
            raise InconsistentCountsError(
                "zero separator count under nonzero clique counts (enable smoothing)"
            )
        exponent = len(template.separators) - len(template.cliques) + 1
        value = float(self._windows) ** exponent if self._windows else (
            1.0 if exponent == 0 else 0.0
        )
        for c in clique_counts:
            value *= c
        for s in separator_counts:
            value /= s
        return value

    def _estimate_smoothed(
        self, template: FactorTemplate, symbols: Sequence[bytes]
    ) -> float:
        def prob(group: tuple[int, ...]) -> float:
            projection = tuple(symbols[i - 1] for i in group)
            if len(projection) == 1:
                return self.smoothed_unigram(projection[0])
            return self.smoothed_bigram(*projection)

        value = float(self._windows)
        for clique in template.cliques:
            value *= prob(clique)
        for sep in template.separators:
            p = prob(sep)
            if p == 0.0:
                raise InconsistentCountsError("zero smoothed separator probability")
            value /= p
        return value

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NgramStore):
            return NotImplemented
        return (
            self.config == other.config
            and self._windows == other._windows
            and self._sketches == other._sketches
        )

    __hash__ = None  # type: ignore[assignment]

    # -- snapshot: magic "HKNG", version u32, depth u32, log_width u32,
    # seed u64, window count u64, shape count u32, then the shape
    # directory: (size u32, blob length u64, sketch) per shape.

    def serialize(self) -> bytes:
        parts = [
            _HEADER.pack(
                SNAPSHOT_MAGIC,
                SNAPSHOT_VERSION,
                self.config.depth,
                self.config.log_width,
                self.config.seed,
                self._windows,
                len(self._sketches),
            )
        ]
        for size in sorted(self._sketches):
            blob = self._sketches[size].serialize()
            parts.append(_SHAPE.pack(size, len(blob)))
            parts.append(blob)
        return b"".join(parts)

    @classmethod
    def deserialize(
        cls, data: bytes, smoothing: SmoothingConfig | None = None
    ) -> "NgramStore":
        store, end = cls.read_from(data, 0, smoothing=smoothing)
        if end != len(data):
            raise SnapshotFormatError(f"{len(data) - end} trailing bytes after store")
        return store

    @classmethod
    def read_from(
        cls, data: bytes, offset: int, smoothing: SmoothingConfig | None = None
    ) -> tuple["NgramStore", int]:
        if len(data) - offset < 4:
            raise TruncatedSnapshotError("snapshot shorter than its magic")
        magic = bytes(data[offset : offset + 4])
        if magic != SNAPSHOT_MAGIC:
            raise BadMagicError(f"expected {SNAPSHOT_MAGIC!r}, found {magic!r}")
        if len(data) - offset < _HEADER.size:
            raise TruncatedSnapshotError("store header incomplete")
        _, version, depth, log_width, seed, windows, n_shapes = _HEADER.unpack_from(
            data, offset
        )
        if version != SNAPSHOT_VERSION:
            raise VersionMismatchError(f"unsupported store version {version}")
        offset += _HEADER.size
        config = SketchConfig(depth, log_width, seed)
        sketches: dict[int, CmSketch] = {}
        for _ in range(n_shapes):
            if len(data) - offset < _SHAPE.size:
                raise TruncatedSnapshotError("shape record incomplete")
            size, blob_len = _SHAPE.unpack_from(data, offset)
            offset += _SHAPE.size
            sketch, new_offset = CmSketch.read_from(data, offset)
            if new_offset - offset != blob_len:
                raise SnapshotFormatError(f"shape {size} blob length mismatch")
            offset = new_offset
            if sketch.config != config:
                raise SnapshotFormatError(f"shape {size} sketch config disagrees")
            sketches[size] = sketch
        store = cls(config, smoothing=smoothing)
        store._windows = windows
        store._sketches = sketches
        return store, offset
