"""Synthetic generators: shape and determinism."""

import numpy as np

from freqsketch.streams import (
    markov_transitions,
    markov_walk,
    zipf_epoch_counts,
    zipf_probabilities,
)


def test_zipf_probabilities_normalized():
    probs = zipf_probabilities(100, 1.1)
    np.testing.assert_allclose(probs.sum(), 1.0)
    assert probs[0] > probs[50] > probs[99]


def test_zipf_counts_deterministic():
    a = zipf_epoch_counts(np.random.default_rng(1), zipf_probabilities(50, 1.2), 500)
    b = zipf_epoch_counts(np.random.default_rng(1), zipf_probabilities(50, 1.2), 500)
    assert a == b
    assert sum(a.values()) == 500


def test_drift_rotates_identities():
    probs = zipf_probabilities(50, 1.2)
    plain = zipf_epoch_counts(np.random.default_rng(2), probs, 500, shift=0)
    shifted = zipf_epoch_counts(np.random.default_rng(2), probs, 500, shift=7)
    assert shifted == {(k + 7) % 50: c for k, c in plain.items()}


def test_markov_walk_uses_transitions():
    rng = np.random.default_rng(3)
    successors, cumulative = markov_transitions(rng, vocab=20, fanout=3)
    walk = markov_walk(rng, successors, cumulative, 2000)
    assert len(walk) == 2000
    allowed = {(s, succ) for s in range(20) for succ in successors[s]}
    pairs = set(zip(walk[:-1].tolist(), walk[1:].tolist()))
    assert pairs <= allowed
