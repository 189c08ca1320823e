"""Shared fixtures and stream helpers."""

from __future__ import annotations

import socket
import threading
from collections import Counter

import numpy as np
import pytest

from freqsketch import CmSketch, Engine, SketchConfig
from freqsketch.server import SketchServer


@pytest.fixture
def small_config() -> SketchConfig:
    return SketchConfig(depth=3, log_width=8, seed=1234)


def random_stream(rng: np.random.Generator, n_keys: int, length: int) -> list[bytes]:
    """Uniform random key stream as byte labels."""
    ids = rng.integers(0, n_keys, size=length)
    return [b"key-%d" % i for i in ids]


def sketch_of(config: SketchConfig, stream) -> CmSketch:
    sketch = CmSketch(config)
    for key, count in Counter(stream).items():
        sketch.insert(key, count)
    return sketch


def unit_sketch(config: SketchConfig, counts: dict[bytes, int]) -> CmSketch:
    sketch = CmSketch(config)
    for key, count in counts.items():
        sketch.insert(key, count)
    return sketch


def run_session(engine: Engine, payload: bytes) -> bytes:
    """Serve one scripted connection and return the raw response bytes."""
    server = SketchServer(engine, ("127.0.0.1", 0))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        with socket.create_connection(server.server_address[:2], timeout=10) as conn:
            conn.sendall(payload)
            conn.shutdown(socket.SHUT_WR)
            chunks = []
            while True:
                chunk = conn.recv(65536)
                if not chunk:
                    break
                chunks.append(chunk)
        return b"".join(chunks)
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
