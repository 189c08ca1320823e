"""Synthetic token streams for tests and the evaluation harness."""

from __future__ import annotations

import numpy as np


def key_label(index: int) -> bytes:
    return b"k%06d" % index


def zipf_probabilities(n_keys: int, exponent: float) -> np.ndarray:
    """Normalized rank^-exponent weights for ranks 1..n_keys."""
    ranks = np.arange(1, n_keys + 1, dtype=np.float64)
    weights = ranks**-exponent
    return weights / weights.sum()


def zipf_epoch_counts(
    rng: np.random.Generator,
    probs: np.ndarray,
    tokens: int,
    shift: int = 0,
) -> dict[int, int]:
    """Sampled key-id -> count for one epoch.

    ``shift`` rotates which key holds which rank, the drift model: the
    popularity profile stays Zipf while identities migrate over time.
    """
    n_keys = len(probs)
    ranks = rng.choice(n_keys, size=tokens, p=probs)
    ids = (ranks + shift) % n_keys
    uniq, counts = np.unique(ids, return_counts=True)
    return {int(k): int(c) for k, c in zip(uniq, counts)}


def zipf_sample(
    rng: np.random.Generator, n_keys: int, tokens: int, exponent: float
) -> np.ndarray:
    """Flat sample of key ids, no drift."""
    return rng.choice(n_keys, size=tokens, p=zipf_probabilities(n_keys, exponent))


def markov_transitions(
    rng: np.random.Generator, vocab: int, fanout: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sparse random first-order chain: per-state successors and cumulative
    transition weights, both (vocab, fanout)."""
    successors = np.empty((vocab, fanout), dtype=np.int64)
    cumulative = np.empty((vocab, fanout), dtype=np.float64)
    for state in range(vocab):
        successors[state] = rng.choice(vocab, size=fanout, replace=False)
        weights = rng.random(fanout) ** 2 + 1e-3  # skewed so the chain is far from iid
        cumulative[state] = np.cumsum(weights / weights.sum())
    return successors, cumulative

def markov_walk(
    rng: np.random.Generator,
    successors: np.ndarray,
    cumulative: np.ndarray,
    length: int,
) -> np.ndarray:
    """Sample a state sequence from the chain."""
    vocab = successors.shape[0]
    draws = rng.random(length)
    succ = successors.tolist()
    cums = cumulative.tolist()
    out = np.empty(length, dtype=np.int64)
    state = int(rng.integers(vocab))
    for i in range(length):
        row = cums[state]
        u = draws[i]
        lo = 0
        while row[lo] < u:
            lo += 1
        state = succ[state][lo]
        out[i] = state
    return out
