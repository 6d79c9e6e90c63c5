from types import SimpleNamespace

import numpy as np
import pytest

from app.dmarkov import estimate_model, generate
from app.exceptions import ZeroProbability
from app.metrics import (
    anomaly_record,
    cluster_divergence,
    discrepancy_statistic,
    feature_frame,
    feature_vector,
    simplex_coordinates,
    symbol_marginal,
)
from app.reduce import ClusterMap, cut, hierarchical_cluster, pairwise_kl_distance, reduce_model, symmetric_kl
from app.symbolize import SymbolSequence


def definition_discrepancy(emission, stationary):
    marginal = stationary @ emission
    total = 0.0
    for q in range(emission.shape[0]):
        for s in range(emission.shape[1]):
            total += stationary[q] * (emission[q, s] - marginal[s]) * (np.log(emission[q, s]) - np.log(marginal[s]))
    return total


def test_iid_model_has_no_structure(make_model):
    model = make_model(np.tile([0.2, 0.3, 0.5], (9, 1)), 2)
    assert cluster_divergence(model) == 0.0
    assert discrepancy_statistic(model) == pytest.approx(0.0, abs=1e-10)
    assert discrepancy_statistic(model, one_sided=True) == pytest.approx(0.0, abs=1e-10)


def test_divergence_is_distance_matrix_max(rng, random_model, make_model):
    model = random_model(rng, 3, 2)
    assert cluster_divergence(model) == pairwise_kl_distance(model).max()
    pair = make_model(np.array([[0.5, 0.5], [0.25, 0.75]]), 1)
    assert cluster_divergence(pair) == pytest.approx(symmetric_kl([0.5, 0.5], [0.25, 0.75]), abs=1e-15)


def test_single_state_reduction_has_zero_discrepancy(rng, random_model):
    model = random_model(rng, 3, 2)
    one = reduce_model(model, ClusterMap(np.zeros(9, dtype=int), 1))
    assert cluster_divergence(one) == 0.0
    assert discrepancy_statistic(one) == pytest.approx(0.0, abs=1e-12)


def test_two_cycle_discrepancy():
    seq = SymbolSequence(np.arange(2001) % 2, 2)
    model = estimate_model(seq, 1, prior_weight=1.0)
    assert model.counts.tolist() == [[0, 1000], [1000, 0]]
    expected = definition_discrepancy(model.emission, model.stationary)
    assert discrepancy_statistic(model) == pytest.approx(expected, abs=1e-10)
    assert discrepancy_statistic(model) > 1.0


def test_one_sided_variant(make_model):
    model = make_model(np.array([[0.5, 0.5], [0.25, 0.75]]), 1)
    marginal = symbol_marginal(model)
    expected = sum(
        model.stationary[q] * sum(model.emission[q, s] * np.log(model.emission[q, s] / marginal[s]) for s in range(2))
        for q in range(2)
    )
    assert discrepancy_statistic(model, one_sided=True) == pytest.approx(expected, abs=1e-12)
    assert discrepancy_statistic(model) > discrepancy_statistic(model, one_sided=True)


def test_discrepancy_zero_only_for_marginal_rows(rng, random_model):
    model = random_model(rng, 3, 2)
    assert discrepancy_statistic(model) > 1e-10


def test_discrepancy_positive_when_rows_differ_from_equal_marginal(make_model):
    model = make_model(np.array([[0.8, 0.2], [0.2, 0.8]]), 1)
    np.testing.assert_allclose(symbol_marginal(model), [0.5, 0.5], atol=1e-12)
    expected = definition_discrepancy(model.emission, model.stationary)
    assert discrepancy_statistic(model) == pytest.approx(expected, abs=1e-12)
    assert discrepancy_statistic(model) > 0.1
    assert discrepancy_statistic(model, one_sided=True) > 0.0


def test_symmetric_form_rejects_zero_rows(make_model):
    model = make_model(np.array([[1.0, 0.0], [0.5, 0.5]]), 1)
    with pytest.raises(ZeroProbability):
        discrepancy_statistic(model)


def test_metrics_invariant_under_relabeling(rng, random_model):
    model = random_model(rng, 3, 2)
    delta = cluster_divergence(model)
    h = discrepancy_statistic(model)
    for _ in range(50):
        perm = rng.permutation(model.n_states)
        relabeled = SimpleNamespace(emission=model.emission[perm], stationary=model.stationary[perm])
        assert cluster_divergence(relabeled) == delta
        assert discrepancy_statistic(relabeled) == pytest.approx(h, rel=1e-12)


def test_simplex_rows(make_model):
    model = make_model(np.array([
        [1 / 3, 1 / 3, 1 / 3], [1.0, 0.0, 0.0], [0.2, 0.3, 0.5],
    ]), 1)
    frame = simplex_coordinates(model, 'run-7')
    assert list(frame.columns) == ['sample_id', 'state_id', 'p0', 'p1', 'p2']
    assert frame['state_id'].tolist() == [0, 1, 2]
    assert (frame['sample_id'] == 'run-7').all()
    np.testing.assert_allclose(frame[['p0', 'p1', 'p2']].sum(axis=1), 1.0)
    assert frame.iloc[0][['p0', 'p1', 'p2']].tolist() == [1 / 3, 1 / 3, 1 / 3]
    assert frame.iloc[1][['p0', 'p1', 'p2']].tolist() == [1.0, 0.0, 0.0]


def test_two_regimes_form_separate_clouds(rng, make_model):
    centers = {'a': np.array([0.7, 0.2, 0.1]), 'b': np.array([0.1, 0.2, 0.7])}
    clouds = {}
    for offset, (name, center) in enumerate(centers.items()):
        source = make_model(0.8 * center + 0.2 * rng.dirichlet(np.ones(3), size=9), 2)
        points = []
        for k in range(5):
            seq = generate(source, k, 3000, seed=100 * offset + k)
            fitted = estimate_model(seq, 2, prior_weight=1.0)
            reduced = reduce_model(fitted, cut(hierarchical_cluster(pairwise_kl_distance(fitted)), 2))
            frame = simplex_coordinates(reduced, f'{name}{k}')
            points.append(frame[['p0', 'p1', 'p2']].to_numpy())
        clouds[name] = np.vstack(points)
    centroid_a, centroid_b = clouds['a'].mean(axis=0), clouds['b'].mean(axis=0)
    spread = max(
        np.linalg.norm(clouds['a'] - centroid_a, axis=1).max(),
        np.linalg.norm(clouds['b'] - centroid_b, axis=1).max(),
    )
    assert np.linalg.norm(centroid_a - centroid_b) > 2 * spread


def test_feature_export(rng, random_model):
    model = random_model(rng, 3, 2)
    reduced = reduce_model(model, ClusterMap.from_labels(np.arange(9) % 2))
    vectors = {'s1': feature_vector(reduced), 's2': feature_vector(reduced)}
    frame = feature_frame(vectors, 2, 3)
    assert list(frame.columns) == ['sample_id', 'e0_0', 'e0_1', 'e0_2', 'e1_0', 'e1_1', 'e1_2']
    assert frame['sample_id'].tolist() == ['s1', 's2']
    np.testing.assert_array_equal(frame.iloc[0, 1:].to_numpy(dtype=float), reduced.emission.ravel())


def test_feature_frame_pads_clamped_reductions():
    frame = feature_frame({'wide': np.full(6, 0.5), 'narrow': np.full(3, 1 / 3)}, 4, 3)
    assert list(frame.columns)[1:] == ['e0_0', 'e0_1', 'e0_2', 'e1_0', 'e1_1', 'e1_2']
    assert frame.iloc[1, 4:].isna().all()
    assert frame.iloc[1, 1:4].tolist() == [1 / 3] * 3


def test_anomaly_record(rng, random_model):
    model = random_model(rng, 3, 2)
    reduced = reduce_model(model, ClusterMap.from_labels(np.arange(9) % 3))
    record = anomaly_record('x01', model, 3, reduced)
    assert record.delta_m == cluster_divergence(model)
    assert record.h_m == discrepancy_statistic(model)
    assert record.delta_m_reduced == cluster_divergence(reduced)
    assert record.to_dict()['selected_n'] == 3
    assert anomaly_record('x02', model, 9).delta_m_reduced is None
