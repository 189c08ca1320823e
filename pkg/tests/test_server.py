"""Line protocol: command handling, error lines, the golden transcript."""

import socket
import threading
from pathlib import Path

import pytest

from freqsketch import Engine, EngineConfig, SketchConfig
from freqsketch.server import SketchServer, format_count, handle_line

from conftest import run_session

DATA = Path(__file__).parent / "data"

TRANSCRIPT_CONFIG = EngineConfig(
    sketch=SketchConfig(4, 16, seed=7), max_level=8, ngram=True
)


def desk_engine(**kwargs) -> Engine:
    defaults = dict(sketch=SketchConfig(3, 10, seed=5), max_level=5)
    defaults.update(kwargs)
    return Engine(EngineConfig(**defaults))


class TestHandleLine:
    def test_insert_no_reply(self):
        engine = desk_engine()
        assert handle_line(engine, "I foo") is None
        assert engine.mass == 1

    def test_tick_and_query(self):
        engine = desk_engine()
        handle_line(engine, "I foo")
        assert handle_line(engine, "TICK") is None
        response = handle_line(engine, "Q foo 1")
        value, method = response.split()
        assert float(value) >= 1
        assert method in ("heavy-hitter", "interpolated")

    def test_missing_key_zero(self):
        engine = desk_engine()
        handle_line(engine, "TICK")
        assert handle_line(engine, "Q missing 1") in ("0 interpolated", "0 heavy-hitter")

    def test_every_line_gets_at_most_one_response(self):
        engine = desk_engine(ngram=True)
        lines = [
            "I a", "ID 0 x", "TICK", "Q a 1", "QR a 1 1", "QN a", "STATS",
            "", "NOPE", "Q", "ID x y", "QR a 1", "Q a x",
        ]
        for line in lines:
            response = handle_line(engine, line)
            assert response is None or isinstance(response, str)

    @pytest.mark.parametrize(
        "line,fragment",
        [
            ("", "empty"),
            ("WHAT", "unknown"),
            ("I", "usage"),
            ("Q tok", "usage"),
            ("Q tok abc", "integer"),
            ("ID 99 tok", "range"),
            ("QR tok 1 99", "range"),
            ("QN a", "disabled"),
        ],
    )
    def test_error_lines(self, line, fragment):
        engine = desk_engine()
        engine.insert(b"tok")
        handle_line(engine, "TICK")
        response = handle_line(engine, line)
        assert response.startswith("ERR")
        assert fragment in response

    def test_tick_rejected_in_live_mode(self):
        engine = desk_engine(mode="live", epoch_seconds=60.0)
        assert handle_line(engine, "TICK").startswith("ERR")

    def test_stats_format(self):
        engine = desk_engine()
        engine.insert(b"a", 4)
        handle_line(engine, "TICK")
        assert handle_line(engine, "STATS") == "t=1 mass=4"


class TestFormatCount:
    def test_whole_numbers_bare(self):
        assert format_count(3.0) == "3"
        assert format_count(0.0) == "0"

    def test_fractions_general(self):
        assert format_count(2.5) == "2.5"
        assert format_count(1 / 3) == format(1 / 3, ".12g")


class TestSocketSessions:
    def test_golden_transcript(self):
        commands = (DATA / "session_commands.txt").read_bytes()
        expected = (DATA / "session_expected.txt").read_bytes()
        got = run_session(Engine(TRANSCRIPT_CONFIG), commands)
        assert got == expected

    def test_state_survives_connections(self):
        engine = desk_engine()
        server = SketchServer(engine, ("127.0.0.1", 0))
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            address = server.server_address[:2]
            with socket.create_connection(address, timeout=10) as conn:
                conn.sendall(b"I once\nTICK\n")
                conn.shutdown(socket.SHUT_WR)
                while conn.recv(4096):
                    pass
            with socket.create_connection(address, timeout=10) as conn:
                conn.sendall(b"STATS\n")
                conn.shutdown(socket.SHUT_WR)
                data = b""
                while True:
                    chunk = conn.recv(4096)
                    if not chunk:
                        break
                    data += chunk
            assert data == b"t=1 mass=1\n"
        finally:
            server.shutdown()
            server.server_close()
            thread.join(timeout=5)

    def test_non_utf8_line(self):
        engine = desk_engine()
        got = run_session(engine, b"\xff\xfe garbage\nSTATS\n")
        assert got == b"ERR not utf-8\nt=0 mass=0\n"
