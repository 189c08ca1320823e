"""Exact (key, epoch) counting and deviation scoring.

This is the gold standard the sketch estimators are graded against:
a plain hash map of exact counts, sealable to immutable, plus the two
accuracy metrics used throughout the evaluation harness,

    absolute deviation = sum over keys of |estimate - exact|
    relative deviation = sum over keys of |estimate - exact| / estimate,

optionally stratified by epoch age and by the key's global frequency
band. The relative sum may exceed 1 because it aggregates over keys.
Memory is bounded by design: fine at desk scale, sample the key set
beyond ~10^7 distinct (key, epoch) pairs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import EmptyKeySetError, EpochRangeError

Estimator = Callable[[bytes, int], float]


def frequency_band(count: int) -> int:
    """Dyadic frequency band: 0 for zero, else bit_length (1, 2, 2, 3, ...)."""
    return count.bit_length()


@dataclass(frozen=True)
class DeviationRow:
    """Deviation sums for one stratum (None = not stratified on that axis)."""

    age: int | None
    band: int | None
    pairs: int
    absolute: float
    relative: float


@dataclass(frozen=True)
class DeviationReport:
    """Aggregate metrics plus any per-stratum rows."""

    absolute: float
    relative: float
    pairs: int
    rows: tuple[DeviationRow, ...] = ()


class ExactOracle:
    """Exact counts per (key, epoch), sealable to immutable."""

    def __init__(self) -> None:
        self._counts: dict[tuple[bytes, int], int] = {}
        self._key_totals: dict[bytes, int] = {}
        self._epoch_totals: dict[int, int] = {}
        self._total = 0
        self._sealed = False

    def record(self, key: bytes, epoch: int, count: int = 1) -> None:
        if self._sealed:
            raise RuntimeError("oracle is sealed")
        if epoch < 1:
            raise EpochRangeError(f"epoch must be >= 1, got {epoch}")
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        pair = (key, epoch)
        self._counts[pair] = self._counts.get(pair, 0) + count
        self._key_totals[key] = self._key_totals.get(key, 0) + count
        self._epoch_totals[epoch] = self._epoch_totals.get(epoch, 0) + count
        self._total += count

    def seal(self) -> None:
        self._sealed = True

    @property
    def sealed(self) -> bool:
        return self._sealed

    @property
    def total(self) -> int:
        return self._total

    def exact(self, key: bytes, epoch: int) -> int:
        return self._counts.get((key, epoch), 0)

    def exact_range(self, key: bytes, first: int, last: int) -> int:
        if first < 1 or last < first:
            raise EpochRangeError(f"bad epoch range {first}..{last}")
        return sum(self._counts.get((key, s), 0) for s in range(first, last + 1))

    def key_total(self, key: bytes) -> int:
        return self._key_totals.get(key, 0)

    def epoch_total(self, epoch: int) -> int:
        return self._epoch_totals.get(epoch, 0)

    def keys(self) -> list[bytes]:
        return sorted(self._key_totals)

    def epochs(self) -> list[int]:
        return sorted(self._epoch_totals)

    def pairs(self) -> list[tuple[bytes, int]]:
        return sorted(self._counts)

    def deviation(
        self,
        estimator: Estimator,
        pairs: Iterable[tuple[bytes, int]],
        *,
        now: int | None = None,
        by_age: bool = False,
        by_band: bool = False,
    ) -> DeviationReport:
        """Score an estimator over (key, epoch) pairs.

        A zero estimate contributes its full absolute deviation to the
        relative sum (denominator clamped to 1); this can only arise
        for estimators without the overestimate guarantee.
        """
        pairs = list(pairs)
        if not pairs:
            raise EmptyKeySetError("deviation over an empty key set")
        if by_age and now is None:
            raise ValueError("age stratification needs the current epoch count")
        strata: dict[tuple[int | None, int | None], list[float]] = {}
        total_abs = 0.0
        total_rel = 0.0
        for key, epoch in pairs:
            truth = self._counts.get((key, epoch), 0)
            guess = float(estimator(key, epoch))
            dev = abs(guess - truth)
            rel = 0.0 if dev == 0.0 else dev / (guess if guess > 0 else 1.0)
            total_abs += dev
            total_rel += rel
            age = (now - epoch) if by_age else None
            band = frequency_band(self._key_totals.get(key, 0)) if by_band else None
            cell = strata.setdefault((age, band), [0, 0.0, 0.0])
            cell[0] += 1
            cell[1] += dev
            cell[2] += rel
        rows = tuple(
            DeviationRow(age, band, int(n), a, r)
            for (age, band), (n, a, r) in sorted(
                strata.items(), key=lambda kv: (kv[0][0] or 0, kv[0][1] or 0)
            )
        )
        if not by_age and not by_band:
            rows = ()
        return DeviationReport(total_abs, total_rel, len(pairs), rows)

    def export_csv(
        self,
        path: str,
        estimator: Estimator,
        pairs: Sequence[tuple[bytes, int]],
        method: Callable[[bytes, int], str] | None = None,
    ) -> None:
        """Dump key, epoch, exact, estimate, method rows."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["key", "epoch", "exact", "estimate", "method"])
            for key, epoch in pairs:
                writer.writerow(
                    [
                        key.decode("utf-8", "replace"),
                        epoch,
                        self.exact(key, epoch),
                        estimator(key, epoch),
                        method(key, epoch) if method else "",
                    ]
                )
