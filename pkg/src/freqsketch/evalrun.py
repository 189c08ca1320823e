"""Accuracy evaluation against the exact oracle.

Replays a synthetic drifting-Zipf stream (or an input file) into an
engine, then scores four per-epoch estimators over every sampled
(key, epoch) pair:

    time     covering-window count divided by the window length
    item     the per-epoch sketch read
    interp   the heavy-hitter switch (item read or interpolation)
    interp-raw   interpolation forced, no switch (informational)

Output is a CSV grid with one row per (estimator, age, frequency
band), zero-filled so the row count is exactly the product of axis
sizes, plus optional rendered figures of deviation against age.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dual import interpolate
from .engine import Engine, EngineConfig
from .oracle import ExactOracle, frequency_band
from .streams import key_label, zipf_epoch_counts, zipf_probabilities

ESTIMATORS = ("time", "item", "interp", "interp-raw")

CSV_FIELDS = ("estimator", "age", "band", "pairs", "absolute", "relative")


@dataclass(frozen=True)
class StreamSpec:
    """Synthetic drifting-Zipf generator parameters."""

    keys: int = 300
    epochs: int = 64
    tokens_per_epoch: int = 2000
    exponent: float = 1.1
    drift: int = 1
    seed: int = 7

    def __post_init__(self) -> None:
        if self.keys < 1 or self.epochs < 1 or self.tokens_per_epoch < 1:
            raise ValueError("keys, epochs and tokens_per_epoch must be positive")
        if self.exponent <= 0:
            raise ValueError("exponent must be positive")


@dataclass
class EvalRow:
    estimator: str
    age: int
    band: int
    pairs: int
    absolute: float
    relative: float


@dataclass
class EvalResult:
    rows: list[EvalRow]
    t: int
    keys: int
    csv_path: Path | None = None
    figure_paths: tuple[Path, ...] = ()

    def totals(self, estimator: str) -> tuple[float, float]:
        """(absolute, relative) summed over the grid for one estimator."""
        rows = [r for r in self.rows if r.estimator == estimator]
        return sum(r.absolute for r in rows), sum(r.relative for r in rows)


def populate(engine: Engine, spec: StreamSpec) -> ExactOracle:
    """Stream the synthetic epochs into the engine and the oracle."""
    rng = np.random.default_rng(spec.seed)
    probs = zipf_probabilities(spec.keys, spec.exponent)
    oracle = ExactOracle()
    for epoch in range(1, spec.epochs + 1):
        counts = zipf_epoch_counts(
            rng, probs, spec.tokens_per_epoch, shift=spec.drift * (epoch - 1)
        )
        for key_id, count in counts.items():
            token = key_label(key_id)
            engine.insert(token, count)
            oracle.record(token, epoch, count)
        engine.tick()
    oracle.seal()
    return oracle


def populate_from_file(engine: Engine, path: str | Path) -> ExactOracle:
    """Replay an `epoch<TAB>token` file into the engine and the oracle."""
    oracle = ExactOracle()
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            epoch_text, sep, token = line.rstrip("\n").partition("\t")
            if not sep or not token:
                continue
            oracle.record(token.encode(), int(epoch_text))
    engine.ingest_file(path, replay=True)
    oracle.seal()
    return oracle


def run_eval(
    config: EngineConfig,
    spec: StreamSpec | None = None,
    input_path: str | Path | None = None,
    csv_path: str | Path | None = None,
    figures_dir: str | Path | None = None,
    key_sample: int | None = None,
) -> EvalResult:
    """Build, score, and report. Exactly one of spec/input_path is used."""
    if (spec is None) == (input_path is None):
        raise ValueError("provide exactly one of spec or input_path")
    engine = Engine(config)
    if spec is not None:
        oracle = populate(engine, spec)
    else:
        oracle = populate_from_file(engine, input_path)  # type: ignore[arg-type]

    keys = oracle.keys()
    if key_sample is not None and key_sample < len(keys):
        rng = np.random.default_rng(spec.seed if spec else 0)
        picked = rng.choice(len(keys), size=key_sample, replace=False)
        keys = [keys[i] for i in sorted(picked)]

    t = engine.t
    estimators = {
        "time": lambda k, s: _time_rate(engine, k, s),
        "item": lambda k, s: float(engine.items.query_epoch(k, s)),
        "interp": lambda k, s: engine.query(k, s).value,
        "interp-raw": lambda k, s: interpolate(
            k, s, engine.time, engine.items, engine.dual
        ),
    }

    cells: dict[tuple[str, int, int], list[float]] = defaultdict(lambda: [0, 0.0, 0.0])
    bands_seen: set[int] = set()
    for key in keys:
        band = frequency_band(oracle.key_total(key))
        bands_seen.add(band)
        for epoch in range(1, t + 1):
            truth = oracle.exact(key, epoch)
            age = t - epoch
            for name, estimator in estimators.items():
                guess = estimator(key, epoch)
                dev = abs(guess - truth)
                rel = 0.0 if dev == 0.0 else dev / (guess if guess > 0 else 1.0)
                cell = cells[(name, age, band)]
                cell[0] += 1
                cell[1] += dev
                cell[2] += rel

    rows = [
        EvalRow(name, age, band, int(cells[(name, age, band)][0]),
                cells[(name, age, band)][1], cells[(name, age, band)][2])
        for name in ESTIMATORS
        for age in range(t)
        for band in sorted(bands_seen)
    ]
    result = EvalResult(rows=rows, t=t, keys=len(keys))

    if csv_path is not None:
        result.csv_path = Path(csv_path)
        with open(result.csv_path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_FIELDS)
            for row in rows:
                writer.writerow(
                    [row.estimator, row.age, row.band, row.pairs,
                     f"{row.absolute:.6f}", f"{row.relative:.6f}"]
                )
    if figures_dir is not None:
        from .report import render_deviation_figures

        result.figure_paths = tuple(render_deviation_figures(rows, figures_dir))
    return result


def _time_rate(engine: Engine, key: bytes, epoch: int) -> float:
    """Per-epoch rate from the covering time window (piecewise constant)."""
    count, desc = engine.time.query_point(key, epoch)
    start = max(desc.start, 1)
    length = max(desc.end - start + 1, 1)
    return count / length


def age_band_means(rows: list[EvalRow], estimator: str) -> list[float]:
    """Mean absolute deviation per dyadic fold band of age.

    Band k groups the ages whose sketches have been folded k times
    (ages 0-1, then 2-3, 4-7, ...), the bands in which the per-epoch
    width is constant.
    """
    sums: dict[int, float] = defaultdict(float)
    counts: dict[int, int] = defaultdict(int)
    for row in rows:
        if row.estimator != estimator or row.pairs == 0:
            continue
        band = 0 if row.age < 2 else row.age.bit_length() - 1
        sums[band] += row.absolute
        counts[band] += row.pairs
    return [sums[b] / counts[b] for b in sorted(sums)]
