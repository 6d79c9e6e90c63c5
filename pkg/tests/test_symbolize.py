import numpy as np
import pytest

from app.exceptions import DegeneratePartition, InvalidSeries
from app.ingest import SegmentedSeries
from app.symbolize import (
    PartitionSpec,
    SymbolSequence,
    cell_occupancy,
    encode,
    mep_partition,
    symbol_entropy,
)


def one_segment(values):
    return SegmentedSeries((np.asarray(values, dtype=np.float64),), 1)


def test_mep_equal_cells():
    data = one_segment(np.arange(1, 10))
    spec = mep_partition(data, 3)
    assert spec.edges == (3.0, 6.0)
    assert encode(data, spec).symbols.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2]


def test_mep_binary_edge_is_median():
    assert mep_partition(one_segment(np.arange(1, 10)), 2).edges == (5.0,)


def test_mep_standard_normal_edges(rng):
    spec = mep_partition(one_segment(rng.standard_normal(10 ** 5)), 3)
    assert spec.edges[0] == pytest.approx(-0.4307, abs=0.02)
    assert spec.edges[1] == pytest.approx(0.4307, abs=0.02)


def test_mep_pools_segments():
    data = SegmentedSeries((np.array([1.0, 3.0, 5.0]), np.array([2.0, 4.0, 6.0])), 2)
    assert mep_partition(data, 2).edges == (3.0,)


def test_mep_tied_data():
    with pytest.raises(DegeneratePartition):
        mep_partition(one_segment([0.0] * 10 + [1.0]), 3)


def test_mep_too_few_samples():
    with pytest.raises(DegeneratePartition):
        mep_partition(one_segment([1.0, 2.0]), 3)


def test_encode_right_closed():
    spec = PartitionSpec((3.0, 6.0), 3)
    assert encode(one_segment([1.0, 4.0, 9.0]), spec).symbols.tolist() == [0, 1, 2]
    assert encode(one_segment([3.0, 6.0, 6.0000001]), spec).symbols.tolist() == [0, 1, 2]


def test_encode_keeps_segments_and_empty_segment():
    data = SegmentedSeries((np.array([]), np.array([1.0, 7.0])), 2)
    seq = encode(data, PartitionSpec((3.0, 6.0), 3))
    segments = seq.segments()
    assert len(segments) == 2
    assert segments[0].size == 0
    assert segments[1].tolist() == [0, 2]


def test_encode_is_monotone(rng):
    values = np.sort(rng.standard_normal(500))
    seq = encode(one_segment(values), mep_partition(one_segment(values), 4))
    assert np.all(np.diff(seq.symbols) >= 0)


def test_partition_spec_validation():
    with pytest.raises(DegeneratePartition):
        PartitionSpec((1.0, 1.0), 3)
    with pytest.raises(ValueError):
        PartitionSpec((1.0,), 3)
    assert PartitionSpec.from_dict(PartitionSpec((-1.0, 2.0), 3).to_dict()) == PartitionSpec((-1.0, 2.0), 3)


def test_symbol_sequence_validation():
    with pytest.raises(InvalidSeries):
        SymbolSequence(np.array([0, 3]), 3)
    with pytest.raises(InvalidSeries):
        SymbolSequence(np.array([0, 1, 2]), 3, (5,))


def test_from_segments_roundtrip():
    seq = SymbolSequence.from_segments([[0, 1], [2], [1, 1, 0]], 3)
    assert seq.segment_boundaries == (2, 3)
    assert [s.tolist() for s in seq.segments()] == [[0, 1], [2], [1, 1, 0]]
    assert len(seq) == 6


def test_entropy_and_occupancy():
    seq = SymbolSequence(np.array([0, 1, 2, 0, 1, 2]), 3)
    assert cell_occupancy(seq).tolist() == [2, 2, 2]
    assert symbol_entropy(seq) == pytest.approx(np.log(3))
    assert symbol_entropy(SymbolSequence(np.zeros(5, dtype=int), 3)) == 0.0
