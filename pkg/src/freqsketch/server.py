"""Line protocol over a stream socket.

UTF-8 lines, one command each. Inserts are one-way (no response);
queries get exactly one response line; anything malformed gets one
ERR line, so every input line produces zero or one output lines:

    I <token>                insert into the open epoch, no reply
    ID <epoch> <token>       insert with an explicit epoch, no reply
    TICK                     close the open epoch (replay mode only)
    Q <token> <epoch>        -> "<count> <method>"
    QR <token> <from> <to>   -> "<count>"
    QN <tok1> <tok2> ...     -> "<estimate>"
    STATS                    -> "t=<t> mass=<n>"

One logical writer mutates the engine; a lock serializes command
handling so readers always observe a consistent epoch.
"""

from __future__ import annotations

import socketserver
import threading

from .engine import MODE_LIVE, Engine, EngineConfig
from .errors import ConfigError, EpochRangeError, FreqSketchError


def format_count(value: float) -> str:
    """Counts render as integers when whole, else general precision."""
    if value == int(value) and abs(value) < 2**63:
        return str(int(value))
    return format(value, ".12g")


def handle_line(engine: Engine, line: str) -> str | None:
    """Execute one command; returns the response line or None (no reply)."""
    fields = line.split()
    if not fields:
        return "ERR empty command"
    command = fields[0]
    try:
        if command == "I":
            if len(fields) != 2:
                return "ERR usage: I <token>"
            engine.insert(fields[1].encode())
            return None
        if command == "ID":
            if len(fields) != 3:
                return "ERR usage: ID <epoch> <token>"
            try:
                epoch = int(fields[1])
            except ValueError:
                return "ERR epoch not an integer"
            engine.insert_delayed(fields[2].encode(), 1, epoch)
            return None  # beyond-retention drops are silent, counted upstream
        if command == "TICK":
            if engine.config.mode == MODE_LIVE:
                return "ERR tick not allowed in live mode"
            engine.tick()
            return None
        if command == "Q":
            if len(fields) != 3:
                return "ERR usage: Q <token> <epoch>"
            try:
                epoch = int(fields[2])
            except ValueError:
                return "ERR epoch not an integer"
            report = engine.query(fields[1].encode(), epoch)
            return f"{format_count(report.value)} {report.method}"
        if command == "QR":
            if len(fields) != 4:
                return "ERR usage: QR <token> <from> <to>"
            try:
                first, last = int(fields[2]), int(fields[3])
            except ValueError:
                return "ERR epochs not integers"
            return format_count(engine.query_range(fields[1].encode(), first, last))
        if command == "QN":
            if len(fields) < 2:
                return "ERR usage: QN <token> [token ...]"
            tokens = [f.encode() for f in fields[1:]]
            return format_count(engine.ngram_estimate(tokens))
        if command == "STATS":
            t, mass = engine.stats()
            return f"t={t} mass={mass}"
        return "ERR unknown command"
    except FreqSketchError as exc:
        return f"ERR {_reason(exc)}"


def _reason(exc: FreqSketchError) -> str:
    # stable, short reasons keep transcripts reproducible
    if isinstance(exc, EpochRangeError):
        return "epoch out of range"
    if isinstance(exc, ConfigError):
        return str(exc)
    return exc.__class__.__name__


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        engine: Engine = self.server.engine  # type: ignore[attr-defined]
        lock: threading.Lock = self.server.engine_lock  # type: ignore[attr-defined]
        for raw in self.rfile:
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                self.wfile.write(b"ERR not utf-8\n")
                continue
            with lock:
                response = handle_line(engine, line)
            if response is not None:
                self.wfile.write(response.encode("utf-8") + b"\n")


class SketchServer(socketserver.ThreadingTCPServer):
    """TCP server bound to an engine; one thread per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, engine: Engine, address: tuple[str, int]):
        super().__init__(address, _Handler)
        self.engine = engine
        self.engine_lock = threading.Lock()
        self._ticker: threading.Thread | None = None
        self._stop = threading.Event()

    def start_live_ticker(self, poll_seconds: float = 0.05) -> None:
        """Close epochs on wall-clock boundaries (live mode)."""

        def run() -> None:
            with self.engine_lock:
                self.engine.live_catch_up()
            while not self._stop.wait(poll_seconds):
                with self.engine_lock:
                    self.engine.live_catch_up()

        self._ticker = threading.Thread(target=run, daemon=True)
        self._ticker.start()

    def shutdown(self) -> None:
        self._stop.set()
        super().shutdown()


def serve(config: EngineConfig, engine: Engine | None = None) -> None:
    """Run the protocol loop until interrupted."""
    engine = Engine(config) if engine is None else engine
    with SketchServer(engine, (config.host, config.port)) as server:
        if config.mode == MODE_LIVE:
            server.start_live_ticker()
        host, port = server.server_address[:2]
        print(f"listening on {host}:{port} (mode={config.mode})", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
