"""Engine: ingestion, synchronized clocks, snapshots, config loading."""

import numpy as np
import pytest

from freqsketch import (
    AlignmentError,
    BadMagicError,
    ConfigError,
    EpochRangeError,
    Engine,
    EngineConfig,
    SketchConfig,
    TruncatedSnapshotError,
)
from freqsketch.engine import load_config


def desk_config(**kwargs) -> EngineConfig:
    defaults = dict(sketch=SketchConfig(3, 10, seed=77), max_level=5)
    defaults.update(kwargs)
    return EngineConfig(**defaults)


class TestClockSync:
    def test_pyramids_tick_together(self):
        engine = Engine(desk_config())
        for epoch in range(5):
            engine.insert(b"x")
            engine.tick()
            assert engine.time.t == engine.items.t == engine.dual.t == epoch + 1

    def test_open_epoch_query(self):
        engine = Engine(desk_config())
        engine.insert(b"x", 3)
        report = engine.query(b"x", 1)  # open epoch, answered from the unit
        assert report.value == 3.0

    def test_query_range_sums(self):
        engine = Engine(desk_config())
        for _ in range(4):
            engine.insert(b"x", 2)
            engine.tick()
        assert engine.query_range(b"x", 1, 4) == pytest.approx(8.0)
        with pytest.raises(EpochRangeError):
            engine.query_range(b"x", 2, 99)


class TestDelayedRouting:
    def test_delayed_insert_visible(self):
        engine = Engine(desk_config())
        for _ in range(4):
            engine.insert(b"a")
            engine.tick()
        assert engine.insert_delayed(b"late", 2, 2)
        assert engine.items.query_epoch(b"late", 2) >= 2
        assert engine.mass == 6

    def test_beyond_retention_dropped(self):
        engine = Engine(desk_config(max_level=2))
        for _ in range(40):
            engine.insert(b"a")
            engine.tick()
        assert not engine.time.covering_levels(1)
        mass_before = engine.mass
        assert engine.insert_delayed(b"late", 1, 1) is False
        assert engine.mass == mass_before
        assert engine.items.query_epoch(b"late", 1) == 0

    def test_future_epoch_rejected(self):
        engine = Engine(desk_config())
        engine.tick()
        with pytest.raises(EpochRangeError):
            engine.insert_delayed(b"x", 1, 5)


class TestIngest:
    def test_single_epoch_file(self, tmp_path):
        path = tmp_path / "stream.tsv"
        path.write_text("1\tfoo\n1\tbar\n1\tfoo\n")
        engine = Engine(desk_config())
        summary = engine.ingest_file(path)
        assert summary.lines == 3
        assert summary.inserted == 3
        assert summary.ticks == 1  # end of input closes the epoch
        assert engine.t == 1
        assert engine.items.query_epoch(b"foo", 1) >= 2

    def test_late_record_routed(self, tmp_path):
        path = tmp_path / "stream.tsv"
        path.write_text("1\ta\n2\tb\n1\tlate\n2\tc\n")
        engine = Engine(desk_config())
        summary = engine.ingest_file(path)
        assert summary.delayed == 1
        assert summary.inserted == 3

    def test_epoch_gap_ticks_through(self, tmp_path):
        path = tmp_path / "stream.tsv"
        path.write_text("1\ta\n4\tb\n")
        engine = Engine(desk_config())
        summary = engine.ingest_file(path)
        assert engine.t == 4
        assert summary.ticks == 4

    def test_malformed_lines_counted(self, tmp_path):
        path = tmp_path / "stream.tsv"
        path.write_text("1\ta\nnot-a-line\nx\tb\n0\tc\n2\td\n")
        engine = Engine(desk_config())
        summary = engine.ingest_file(path)
        assert summary.errors == 3
        assert summary.inserted == 2

    def test_replay_determinism(self, tmp_path):
        path = tmp_path / "stream.tsv"
        rng = np.random.default_rng(60)
        lines = []
        epoch = 1
        for _ in range(300):
            if rng.random() < 0.1:
                epoch += int(rng.integers(1, 3))
            lines.append(f"{epoch}\tk{int(rng.integers(0, 40))}")
        path.write_text("\n".join(lines) + "\n")
        snaps = []
        for _ in range(2):
            engine = Engine(desk_config(ngram=True))
            engine.ingest_file(path)
            snaps.append(engine.snapshot_bytes())
        assert snaps[0] == snaps[1]


class TestSnapshotPersistence:
    def test_save_load_save_identical(self, tmp_path):
        engine = Engine(desk_config(ngram=True))
        rng = np.random.default_rng(61)
        for _ in range(9):
            for _ in range(30):
                engine.insert(b"k%d" % rng.integers(0, 25))
            engine.tick()
        engine.insert_delayed(b"late", 1, 3)
        path = tmp_path / "engine.snap"
        engine.save_snapshot(path)
        loaded = Engine.load_snapshot(path)
        path2 = tmp_path / "engine2.snap"
        loaded.save_snapshot(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_load_preserves_answers(self, tmp_path):
        engine = Engine(desk_config())
        rng = np.random.default_rng(62)
        for _ in range(7):
            for _ in range(40):
                engine.insert(b"k%d" % rng.integers(0, 30))
            engine.tick()
        path = tmp_path / "engine.snap"
        engine.save_snapshot(path)
        loaded = Engine.load_snapshot(path)
        for _ in range(1000):
            key = b"k%d" % rng.integers(0, 40)
            epoch = int(rng.integers(1, 8))
            assert loaded.query(key, epoch) == engine.query(key, epoch)

    def test_corrupt_snapshot_rejected(self, tmp_path):
        engine = Engine(desk_config())
        engine.insert(b"x")
        engine.tick()
        data = engine.snapshot_bytes()
        with pytest.raises(BadMagicError):
            Engine.from_snapshot_bytes(b"XXXX" + data[4:])
        with pytest.raises(TruncatedSnapshotError):
            Engine.from_snapshot_bytes(data[: len(data) - 10])

    def test_ngram_store_round_trips(self):
        engine = Engine(desk_config(ngram=True))
        for token in (b"a", b"b", b"a", b"c"):
            engine.insert(token)
        engine.tick()
        restored = Engine.from_snapshot_bytes(engine.snapshot_bytes())
        assert restored.ngram_estimate([b"a", b"b"]) == engine.ngram_estimate(
            [b"a", b"b"]
        )


class TestMergeEngines:
    def test_partitioned_lockstep(self):
        rng = np.random.default_rng(63)
        config = desk_config()
        whole, left, right = Engine(config), Engine(config), Engine(config)
        for _ in range(6):
            for _ in range(50):
                token = b"k%d" % rng.integers(0, 30)
                whole.insert(token)
                (left if rng.random() < 0.5 else right).insert(token)
            whole.tick(), left.tick(), right.tick()
        merged = left.merge_with(right)
        assert merged.snapshot_bytes() == whole.snapshot_bytes()

    def test_mismatched_t(self):
        a, b = Engine(desk_config()), Engine(desk_config())
        a.tick()
        with pytest.raises(AlignmentError):
            a.merge_with(b)


class TestNgramPath:
    def test_estimate_uses_pair_chain(self):
        engine = Engine(desk_config(ngram=True))
        for token in (b"a", b"b", b"c", b"a", b"b"):
            engine.insert(token)
        assert engine.ngram_estimate([b"a", b"b"]) == pytest.approx(2.0)
        assert engine.ngram_estimate([b"a"]) == pytest.approx(2.0)

    def test_disabled_store_raises(self):
        engine = Engine(desk_config())
        with pytest.raises(ConfigError):
            engine.ngram_estimate([b"a"])


class TestLiveClock:
    def test_catch_up_follows_wall_grid(self):
        engine = Engine(desk_config(mode="live", epoch_seconds=60.0))
        base = 1_000_000  # wall index pinned at the first call
        assert engine.live_catch_up(now=base * 60.0) == 0
        assert engine.t == 0
        assert engine.live_catch_up(now=(base + 3) * 60.0 + 5) == 3
        assert engine.t == 3
        assert engine.live_catch_up(now=(base + 3) * 60.0 + 30) == 0

    def test_lockstep_engines_merge(self):
        a = Engine(desk_config(mode="live", epoch_seconds=60.0))
        b = Engine(desk_config(mode="live", epoch_seconds=60.0))
        start = 2_000_000 * 60.0
        for engine in (a, b):
            engine.live_catch_up(now=start)
        a.insert(b"x")
        b.insert(b"y")
        for engine in (a, b):
            engine.live_catch_up(now=start + 120.0)
        merged = a.merge_with(b)
        assert merged.t == 2
        assert merged.items.query_epoch(b"x", 1) >= 1
        assert merged.items.query_epoch(b"y", 1) >= 1

    def test_different_origins_refuse_merge(self):
        # equal tick counts but shifted wall grids would alias epochs
        a = Engine(desk_config(mode="live", epoch_seconds=60.0))
        b = Engine(desk_config(mode="live", epoch_seconds=60.0))
        a.live_catch_up(now=3_000_000 * 60.0)
        b.live_catch_up(now=3_000_001 * 60.0)
        a.live_catch_up(now=3_000_002 * 60.0)
        b.live_catch_up(now=3_000_003 * 60.0)
        assert a.t == b.t == 2
        with pytest.raises(AlignmentError):
            a.merge_with(b)


class TestConfigLoading:
    def test_file_env_override_precedence(self, tmp_path):
        path = tmp_path / "engine.conf"
        path.write_text(
            "# desk profile\nmode=replay\ndepth=3\nlog_width=12\nseed=5\nport=9000\n"
        )
        config = load_config(
            path,
            env={"FREQSKETCH_PORT": "9100", "FREQSKETCH_MAX_LEVEL": "6"},
            overrides={"port": "9200"},
        )
        assert config.sketch == SketchConfig(3, 12, 5)
        assert config.max_level == 6
        assert config.port == 9200

    def test_smoothing_keys(self, tmp_path):
        path = tmp_path / "engine.conf"
        path.write_text("smoothing_n0=1.5\nsmoothing_n1=2.0\nsmoothing_vocabulary=100\n")
        config = load_config(path, env={})
        assert config.smoothing is not None
        assert config.smoothing.n0 == 1.5
        assert config.smoothing.vocabulary == 100

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "engine.conf"
        path.write_text("no_such_key=1\n")
        with pytest.raises(ConfigError):
            load_config(path, env={})

    def test_bad_line_rejected(self, tmp_path):
        path = tmp_path / "engine.conf"
        path.write_text("just a line\n")
        with pytest.raises(ConfigError):
            load_config(path, env={})
