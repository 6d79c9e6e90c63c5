import json
import os

import numpy as np
import pandas as pd
import pytest

from app.exceptions import SchemaMismatch
from app.models.documents import DendrogramDocument, ModelDocument, Preprocessing, ReductionDocument
from app.reduce import ClusterMap, hierarchical_cluster, pairwise_kl_distance, reduce_model
from app.services.persist import (
    atomic_write_text,
    dendrogram_to_document,
    document_to_dendrogram,
    document_to_model,
    document_to_partition,
    document_to_reduced,
    load_document,
    make_provenance,
    model_to_document,
    read_csv,
    read_csv_provenance,
    reduced_to_document,
    write_csv,
    write_document,
)
from app.symbolize import PartitionSpec
from config.settings import PipelineConfig


@pytest.fixture
def provenance():
    return make_provenance(PipelineConfig(), {'x.csv': 'ab' * 32})


@pytest.fixture
def preprocessing():
    return Preprocessing(lag=4, lag_rule='local_minimum', mean=0.25, std=1.5, normalize_first=True, mep_on_downsampled=True)


@pytest.fixture
def model_file(tmp_path, rng, random_model, preprocessing, provenance):
    model = random_model(rng, 3, 2)
    doc = model_to_document(model, PartitionSpec((-0.43, 0.43), 3), preprocessing, provenance)
    path = write_document(str(tmp_path / 'x.model.json'), doc)
    return model, path


def test_model_document_roundtrip(model_file):
    model, path = model_file
    doc = load_document(path, ModelDocument)
    restored = document_to_model(doc)
    assert restored.fingerprint == model.fingerprint
    np.testing.assert_array_equal(restored.emission, model.emission)
    np.testing.assert_array_equal(restored.transition, model.transition)
    np.testing.assert_array_equal(restored.stationary, model.stationary)
    assert document_to_partition(doc) == PartitionSpec((-0.43, 0.43), 3)
    assert doc.states[:4] == ['00', '01', '02', '10']
    assert doc.provenance.config['alphabet_size'] == 3


def test_documents_are_deterministic(model_file, tmp_path):
    _, path = model_file
    again = write_document(str(tmp_path / 'again.json'), load_document(path, ModelDocument))
    with open(path, 'rb') as a, open(again, 'rb') as b:
        assert a.read() == b.read()


def test_tampered_parameters_are_rejected(model_file):
    _, path = model_file
    doc = load_document(path, ModelDocument)
    emission = [row[:] for row in doc.emission]
    emission[0] = [1 / 3, 1 / 3, 1 / 3]
    with pytest.raises(SchemaMismatch):
        document_to_model(doc.model_copy(update={'emission': emission}))
    with pytest.raises(SchemaMismatch):
        document_to_model(doc.model_copy(update={'emission': emission[:4]}))


def test_schema_version_and_shape_errors(model_file, tmp_path):
    _, path = model_file
    with open(path) as f:
        data = json.load(f)

    bad_version = tmp_path / 'v2.json'
    bad_version.write_text(json.dumps({**data, 'schema_version': 2}))
    with pytest.raises(SchemaMismatch):
        load_document(str(bad_version), ModelDocument)

    extra = tmp_path / 'extra.json'
    extra.write_text(json.dumps({**data, 'surprise': 1}))
    with pytest.raises(SchemaMismatch):
        load_document(str(extra), ModelDocument)

    missing = {k: v for k, v in data.items() if k != 'emission'}
    (tmp_path / 'missing.json').write_text(json.dumps(missing))
    with pytest.raises(SchemaMismatch):
        load_document(str(tmp_path / 'missing.json'), ModelDocument)

    (tmp_path / 'broken.json').write_text('{"schema_version": 1,')
    with pytest.raises(SchemaMismatch):
        load_document(str(tmp_path / 'broken.json'), ModelDocument)

    with pytest.raises(SchemaMismatch):
        load_document(path, DendrogramDocument)


def test_dendrogram_and_reduction_roundtrip(tmp_path, rng, random_model, provenance):
    model = random_model(rng, 2, 2)
    tree = hierarchical_cluster(pairwise_kl_distance(model))
    path = write_document(str(tmp_path / 'tree.json'), dendrogram_to_document(tree, model.fingerprint, provenance))
    doc = load_document(path, DendrogramDocument)
    assert document_to_dendrogram(doc) == tree
    assert doc.source_fingerprint == model.fingerprint

    reduced = reduce_model(model, ClusterMap(np.array([0, 0, 1, 1]), 2))
    path = write_document(str(tmp_path / 'reduced.json'), reduced_to_document(reduced, provenance, float('nan'), 0.2, 'bic'))
    doc = load_document(path, ReductionDocument)
    assert doc.kappa is None
    assert doc.bound == 0.2
    restored = document_to_reduced(doc)
    assert restored.cluster_map.assignment.tolist() == [0, 0, 1, 1]
    np.testing.assert_array_equal(restored.emission, reduced.emission)
    np.testing.assert_array_equal(restored.transition, reduced.transition)


def test_csv_carries_provenance(tmp_path, provenance):
    frame = pd.DataFrame({'N': [1, 2], 'L': [-10.5, -3.25]})
    path = write_csv(str(tmp_path / 'scores.csv'), frame, provenance)
    with open(path) as f:
        assert f.readline().startswith('# symdyn {')
    pd.testing.assert_frame_equal(read_csv(path), frame)
    header = read_csv_provenance(path)
    assert header['inputs'] == {'x.csv': 'ab' * 32}
    assert header['config']['epsilon'] == 0.05


def test_csv_without_header_is_rejected(tmp_path):
    path = tmp_path / 'plain.csv'
    path.write_text('N,L\n1,2\n')
    with pytest.raises(SchemaMismatch):
        read_csv_provenance(str(path))


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / 'out' / 'a.json'
    atomic_write_text(str(target), 'first\n')
    atomic_write_text(str(target), 'second\n')
    assert target.read_text() == 'second\n'
    assert os.listdir(tmp_path / 'out') == ['a.json']
