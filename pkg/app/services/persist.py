"""Atomic JSON/CSV output with provenance, and loaders for the JSON documents."""
import json
import os
import tempfile
from typing import Any, Dict, Optional, Type, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from config.logging_config import get_logger
from .. import __version__
from ..dmarkov import DMarkovModel, state_label, transition_from_emission
from ..exceptions import SchemaMismatch
from ..models.documents import (
    SCHEMA_VERSION,
    DendrogramDocument,
    ModelDocument,
    PartitionDoc,
    Preprocessing,
    Provenance,
    ReductionDocument,
)
from ..reduce import ClusterMap, Dendrogram, ReducedModel
from ..symbolize import PartitionSpec
from ..utils.helpers import canonical_json, to_builtin

logger = get_logger(__name__)

DocT = TypeVar('DocT', bound=BaseModel)
PROVENANCE_PREFIX = "# symdyn "


def make_provenance(config: BaseModel, inputs: Optional[Dict[str, str]] = None) -> Provenance:
    return Provenance(version=__version__, config=config.model_dump(mode='json'), inputs=dict(inputs or {}))


# --- Writing --- #

def atomic_write_text(path: str, text: str) -> str:
    """Writes to a temp file next to ``path`` then renames it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.debug(f"Wrote {path}.")
    return path


def write_document(path: str, document: BaseModel) -> str:
    return atomic_write_text(path, canonical_json(document.model_dump(mode='python')))


def provenance_line(provenance: Provenance) -> str:
    payload = json.dumps(to_builtin(provenance.model_dump()), sort_keys=True, separators=(',', ':'), allow_nan=False)
    return PROVENANCE_PREFIX + payload + "\n"


def write_csv(path: str, frame: pd.DataFrame, provenance: Provenance) -> str:
    """CSV whose first line is a ``#`` comment holding the provenance JSON."""
    body = frame.to_csv(index=False, lineterminator='\n')
    return atomic_write_text(path, provenance_line(provenance) + body)


# --- Reading --- #

def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment='#')


def read_csv_provenance(path: str) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as f:
        first = f.readline()
    if not first.startswith(PROVENANCE_PREFIX):
        raise SchemaMismatch(f"{path} has no provenance header.")
    return json.loads(first[len(PROVENANCE_PREFIX):])


def load_document(path: str, doc_type: Type[DocT]) -> DocT:
    """Parses and validates a JSON document; any shape problem raises SchemaMismatch."""
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        logger.error(f"{path} is not valid JSON: {e}")
        raise SchemaMismatch(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise SchemaMismatch(f"{path} does not hold a JSON object.")
    if data.get('schema_version') != SCHEMA_VERSION:
        raise SchemaMismatch(f"{path} has schema_version {data.get('schema_version')!r}, expected {SCHEMA_VERSION}.")
    try:
        return doc_type.model_validate(data)
    except ValidationError as e:
        logger.error(f"{path} does not match the {doc_type.__name__} schema: {e}")
        raise SchemaMismatch(f"{path} does not match the {doc_type.__name__} schema ({e.error_count()} errors).") from e


# --- Conversions --- #

def model_to_document(
    model: DMarkovModel,
    partition: PartitionSpec,
    preprocessing: Preprocessing,
    provenance: Provenance,
) -> ModelDocument:
    rows, cols = np.nonzero(model.transition)
    sparse_rows = [[int(r), int(c), float(model.transition[r, c])] for r, c in zip(rows, cols)]
    return ModelDocument(
        alphabet_size=model.alphabet_size,
        depth=model.depth,
        states=[state_label(q, model.alphabet_size, model.depth) for q in range(model.n_states)],
        preprocessing=preprocessing,
        partition=PartitionDoc(**partition.to_dict()),
        prior_weight=model.prior_weight,
        stationary_damping=model.stationary_damping,
        counts=np.asarray(model.counts, dtype=np.int64).tolist(),
        emission=np.asarray(model.emission).tolist(),
        transition_sparse=sparse_rows,
        stationary=np.asarray(model.stationary).tolist(),
        fingerprint=model.fingerprint,
        provenance=provenance,
    )


def document_to_model(doc: ModelDocument) -> DMarkovModel:
    emission = np.asarray(doc.emission, dtype=np.float64)
    counts = np.asarray(doc.counts, dtype=np.int64)
    n_states = doc.alphabet_size ** doc.depth
    if emission.shape != (n_states, doc.alphabet_size) or counts.shape != emission.shape:
        raise SchemaMismatch(f"Model matrices do not have shape ({n_states}, {doc.alphabet_size}).")
    if len(doc.stationary) != n_states:
        raise SchemaMismatch(f"Stationary vector has {len(doc.stationary)} entries, expected {n_states}.")
    model = DMarkovModel(
        alphabet_size=doc.alphabet_size,
        depth=doc.depth,
        counts=counts,
        emission=emission,
        transition=transition_from_emission(emission, doc.depth),
        stationary=np.asarray(doc.stationary, dtype=np.float64),
        prior_weight=doc.prior_weight,
        stationary_damping=doc.stationary_damping,
    )
    if model.fingerprint != doc.fingerprint:
        raise SchemaMismatch("Model fingerprint does not match its parameters; the file was modified.")
    return model


def document_to_partition(doc: ModelDocument) -> PartitionSpec:
    return PartitionSpec.from_dict(doc.partition.model_dump())


def dendrogram_to_document(dendrogram: Dendrogram, source_fingerprint: str, provenance: Provenance) -> DendrogramDocument:
    data = dendrogram.to_dict()
    return DendrogramDocument(
        n_leaves=data['n_leaves'],
        merges=data['merges'],
        linkage=data['linkage'],
        source_fingerprint=source_fingerprint,
        provenance=provenance,
    )


def document_to_dendrogram(doc: DendrogramDocument) -> Dendrogram:
    return Dendrogram.from_dict({'n_leaves': doc.n_leaves, 'merges': doc.merges})


def reduced_to_document(
    reduced: ReducedModel,
    provenance: Provenance,
    kappa: Optional[float] = None,
    bound: Optional[float] = None,
    selected_by: Optional[str] = None,
) -> ReductionDocument:
    return ReductionDocument(
        n_clusters=reduced.n_states,
        alphabet_size=reduced.alphabet_size,
        depth=reduced.depth,
        weighting=reduced.weighting,
        cluster_map=reduced.cluster_map.assignment.tolist(),
        transition=np.asarray(reduced.transition).tolist(),
        emission=np.asarray(reduced.emission).tolist(),
        stationary=np.asarray(reduced.stationary).tolist(),
        zero_mass_clusters=list(reduced.zero_mass_clusters),
        source_fingerprint=reduced.source_fingerprint,
        kappa=to_builtin(kappa),
        bound=to_builtin(bound),
        selected_by=selected_by,
        provenance=provenance,
    )


def document_to_reduced(doc: ReductionDocument) -> ReducedModel:
    cluster_map = ClusterMap(np.asarray(doc.cluster_map, dtype=np.int64), doc.n_clusters)
    return ReducedModel(
        cluster_map=cluster_map,
        transition=np.asarray(doc.transition, dtype=np.float64),
        emission=np.asarray(doc.emission, dtype=np.float64),
        stationary=np.asarray(doc.stationary, dtype=np.float64),
        alphabet_size=doc.alphabet_size,
        depth=doc.depth,
        weighting=doc.weighting,
        source_fingerprint=doc.source_fingerprint,
        zero_mass_clusters=tuple(doc.zero_mass_clusters),
    )
