"""Exact oracle bookkeeping and the deviation metrics."""

import pytest

from freqsketch import (
    EmptyKeySetError,
    EpochRangeError,
    ExactOracle,
    frequency_band,
)


def filled_oracle():
    oracle = ExactOracle()
    oracle.record(b"a", 1, 3)
    oracle.record(b"a", 2, 1)
    oracle.record(b"b", 1, 2)
    oracle.record(b"b", 3, 5)
    return oracle


class TestBookkeeping:
    def test_record_then_exact(self):
        oracle = filled_oracle()
        assert oracle.exact(b"a", 1) == 3
        assert oracle.exact(b"a", 3) == 0
        assert oracle.exact(b"nope", 1) == 0

    def test_range_sums(self):
        oracle = filled_oracle()
        assert oracle.exact_range(b"a", 1, 3) == oracle.key_total(b"a") == 4
        assert oracle.exact_range(b"b", 2, 3) == 5
        with pytest.raises(EpochRangeError):
            oracle.exact_range(b"a", 3, 1)

    def test_totals(self):
        oracle = filled_oracle()
        assert oracle.total == 11
        assert oracle.epoch_total(1) == 5
        assert oracle.epochs() == [1, 2, 3]

    def test_sealed_rejects_record(self):
        oracle = filled_oracle()
        oracle.seal()
        with pytest.raises(RuntimeError):
            oracle.record(b"c", 1)

    def test_bad_record_args(self):
        oracle = ExactOracle()
        with pytest.raises(EpochRangeError):
            oracle.record(b"a", 0)
        with pytest.raises(ValueError):
            oracle.record(b"a", 1, 0)


class TestDeviation:
    def test_oracle_vs_itself_is_zero(self):
        oracle = filled_oracle()
        report = oracle.deviation(
            lambda k, s: float(oracle.exact(k, s)), oracle.pairs()
        )
        assert report.absolute == 0.0
        assert report.relative == 0.0

    def test_constant_offset(self):
        oracle = filled_oracle()
        pairs = oracle.pairs()
        report = oracle.deviation(
            lambda k, s: float(oracle.exact(k, s) + 1), pairs
        )
        assert report.absolute == pytest.approx(len(pairs))

    def test_relative_uses_estimate_denominator(self):
        oracle = ExactOracle()
        oracle.record(b"a", 1, 4)
        report = oracle.deviation(lambda k, s: 8.0, [(b"a", 1)])
        assert report.relative == pytest.approx(0.5)

    def test_empty_pairs_rejected(self):
        with pytest.raises(EmptyKeySetError):
            filled_oracle().deviation(lambda k, s: 0.0, [])

    def test_stratified_rows(self):
        oracle = filled_oracle()
        report = oracle.deviation(
            lambda k, s: float(oracle.exact(k, s) + 1),
            oracle.pairs(),
            now=3,
            by_age=True,
            by_band=True,
        )
        assert sum(row.pairs for row in report.rows) == report.pairs
        ages = {row.age for row in report.rows}
        assert ages <= {0, 1, 2}

    def test_band_definition(self):
        assert frequency_band(0) == 0
        assert frequency_band(1) == 1
        assert frequency_band(3) == 2
        assert frequency_band(4) == 3


class TestCsvExport:
    def test_columns(self, tmp_path):
        oracle = filled_oracle()
        path = tmp_path / "out.csv"
        oracle.export_csv(
            str(path),
            lambda k, s: float(oracle.exact(k, s)),
            oracle.pairs(),
            method=lambda k, s: "exact",
        )
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "key,epoch,exact,estimate,method"
        assert len(lines) == 1 + len(oracle.pairs())
