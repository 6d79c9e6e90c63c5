import numpy as np
import pytest
from scipy.linalg import null_space

from app.dmarkov import (
    DEFAULT_DAMPING,
    count_dgrams,
    emission_from_counts,
    estimate_model,
    generate,
    log_likelihood,
    model_from_emission,
    n_scored_emissions,
    solve_stationary,
    state_label,
    state_word,
    stationary_distribution,
    successor_table,
    transition_from_emission,
)
from app.exceptions import NoConvergence, SequenceTooShort
from app.symbolize import SymbolSequence


def brute_force_counts(seq, depth):
    a = seq.alphabet_size
    counts = np.zeros((a ** depth, a), dtype=np.int64)
    for seg in seq.segments():
        for k in range(depth, seg.size):
            word = 0
            for s in seg[k - depth:k]:
                word = word * a + int(s)
            counts[word, seg[k]] += 1
    return counts


def null_space_stationary(transition):
    vec = null_space(transition.T - np.eye(transition.shape[0]))[:, 0]
    return vec / vec.sum()


def test_state_indexing():
    assert state_word(5, 3, 2) == (1, 2)
    assert state_label(5, 3, 2) == '12'
    assert successor_table(3, 2)[5, 0] == 6
    assert successor_table(2, 3)[0b101, 1] == 0b011


def test_counts_match_brute_force(rng):
    seq = SymbolSequence.from_segments([rng.integers(0, 3, 400), rng.integers(0, 3, 377)], 3)
    for depth in (1, 2, 3):
        np.testing.assert_array_equal(count_dgrams(seq, depth), brute_force_counts(seq, depth))
        assert count_dgrams(seq, depth).sum() == n_scored_emissions(seq, depth)


def test_windows_never_cross_segments():
    seq = SymbolSequence.from_segments([[0, 1], [1, 0]], 2)
    counts = count_dgrams(seq, 1)
    assert counts.tolist() == [[0, 1], [1, 0]]


def test_sequence_too_short():
    with pytest.raises(SequenceTooShort):
        count_dgrams(SymbolSequence(np.array([0, 1]), 2), 2)


def test_emission_smoothing_and_unvisited_rows():
    counts = np.array([[3, 1], [0, 0]])
    np.testing.assert_allclose(emission_from_counts(counts, 1.0), [[4 / 6, 2 / 6], [0.5, 0.5]])
    np.testing.assert_allclose(emission_from_counts(counts, 0.0), [[0.75, 0.25], [0.5, 0.5]])


def test_estimated_model_is_stochastic(rng):
    seq = SymbolSequence(rng.integers(0, 3, 2000), 3)
    model = estimate_model(seq, 2, prior_weight=1.0)
    assert model.n_states == 9
    np.testing.assert_allclose(model.emission.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(model.transition.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.count_nonzero(model.transition, axis=1) == 3)
    assert model.stationary.sum() == pytest.approx(1.0)


def test_transition_places_mass_on_successors():
    emission = np.array([[0.1, 0.9], [0.6, 0.4], [0.3, 0.7], [0.5, 0.5]])
    transition = transition_from_emission(emission, 2)
    assert transition[1, 2] == 0.6
    assert transition[1, 3] == 0.4
    assert transition[1, 0] == 0.0


def test_stationary_matches_null_space(rng, random_model):
    for _ in range(20):
        a = int(rng.integers(2, 4))
        depth = int(rng.integers(1, 4 if a == 2 else 3))
        model = random_model(rng, a, depth)
        np.testing.assert_allclose(model.stationary, null_space_stationary(model.transition), atol=1e-8)


def test_periodic_chain_falls_back_to_damping():
    transition = np.array([
        [0.0, 0.5, 0.5],
        [1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
    ])
    with pytest.raises(NoConvergence):
        stationary_distribution(transition)
    pi, damping = solve_stationary(transition)
    assert damping == DEFAULT_DAMPING
    np.testing.assert_allclose(pi, [0.5, 0.25, 0.25], atol=1e-5)


def test_generate_is_seeded(rng, random_model):
    model = random_model(rng, 3, 2)
    first = generate(model, 4, 500, seed=7)
    second = generate(model, 4, 500, seed=7)
    np.testing.assert_array_equal(first.symbols, second.symbols)
    assert len(first) == 500
    assert first.symbols.max() < 3
    with pytest.raises(ValueError):
        generate(model, 9, 10, seed=0)


def test_log_likelihood_matches_stepwise_product(rng, random_model):
    model = random_model(rng, 3, 2)
    seq = SymbolSequence.from_segments([generate(model, 0, 300, seed=1).symbols, generate(model, 5, 200, seed=2).symbols], 3)
    expected = 0.0
    for seg in seq.segments():
        for k in range(2, seg.size):
            word = int(seg[k - 2]) * 3 + int(seg[k - 1])
            expected += np.log(model.emission[word, seg[k]])
    assert log_likelihood(model, seq) == pytest.approx(expected, rel=1e-12)


def test_log_likelihood_single_symbol_alphabet():
    model = model_from_emission(np.array([[1.0]]), 1)
    assert log_likelihood(model, SymbolSequence(np.zeros(50, dtype=int), 1)) == 0.0


def test_log_likelihood_zero_probability():
    model = estimate_model(SymbolSequence(np.array([0, 1, 0, 1, 0]), 2), 1, prior_weight=0.0)
    assert log_likelihood(model, SymbolSequence(np.array([0, 0]), 2)) == float('-inf')


def test_fingerprint_depends_on_parameters(rng, random_model):
    model = random_model(rng, 2, 2)
    again = model_from_emission(model.emission.copy(), 2)
    other = model_from_emission(np.flipud(model.emission).copy(), 2)
    assert model.fingerprint == again.fingerprint
    assert model.fingerprint != other.fingerprint


def test_periodic_sequence_visits_three_words():
    seq = SymbolSequence(np.tile([0, 0, 1], 100), 2)
    counts = count_dgrams(seq, 2)
    visited = np.flatnonzero(counts.sum(axis=1))
    assert visited.tolist() == [0, 1, 2]
    assert counts[0].tolist() == [0, 100]
    assert counts[1].tolist() == [99, 0]
    assert counts[2].tolist() == [99, 0]


def test_deterministic_cycle_is_reproduced_exactly():
    seq = SymbolSequence(np.arange(3000) % 3, 3)
    model = estimate_model(seq, 1, prior_weight=0.0)
    np.testing.assert_array_equal(model.emission, np.roll(np.eye(3), 1, axis=1))
    np.testing.assert_array_equal(generate(model, 0, 600, seed=5).symbols, (np.arange(600) + 1) % 3)
    assert log_likelihood(model, seq) == 0.0


def test_estimate_recovers_source(rng, random_model):
    source = random_model(rng, 3, 2)
    seq = generate(source, 0, 10 ** 5, seed=17)
    fitted = estimate_model(seq, 2, prior_weight=1.0)
    assert np.abs(fitted.emission - source.emission).max() <= 0.02

    words = count_dgrams(seq, 2).sum(axis=1) / n_scored_emissions(seq, 2)
    assert np.abs(words - source.stationary).max() <= 0.02
