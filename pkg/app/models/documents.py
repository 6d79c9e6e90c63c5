"""Pydantic models for every JSON artifact the CLI writes and reads back."""
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

SCHEMA_VERSION = 1


class Provenance(BaseModel):
    model_config = ConfigDict(extra='forbid')

    tool: str = "symdyn"
    version: str
    config: Dict[str, Any]
    inputs: Dict[str, str] = Field(default_factory=dict)  # name -> sha256


class Preprocessing(BaseModel):
    model_config = ConfigDict(extra='forbid')

    lag: int = Field(ge=1)
    lag_rule: Literal['local_minimum', 'zero_crossing', 'max_lag', 'given']
    mean: float
    std: float
    normalize_first: bool
    mep_on_downsampled: bool
    std_convention: Literal['population'] = 'population'


class PartitionDoc(BaseModel):
    model_config = ConfigDict(extra='forbid')

    edges: List[float]
    alphabet_size: int = Field(ge=2)


class _Document(BaseModel):
    model_config = ConfigDict(extra='forbid')

    schema_version: int = SCHEMA_VERSION
    provenance: Provenance


class ModelDocument(_Document):
    kind: Literal['dmarkov_model'] = 'dmarkov_model'
    alphabet_size: int = Field(ge=1)
    depth: int = Field(ge=1)
    states: List[str]
    preprocessing: Preprocessing
    partition: PartitionDoc
    prior_weight: float = Field(ge=0.0)
    stationary_damping: float = Field(ge=0.0)
    counts: List[List[int]]
    emission: List[List[float]]
    transition_sparse: List[List[float]]  # [from, to, probability] for non-zero entries
    stationary: List[float]
    fingerprint: str


class DepthDoc(BaseModel):
    depth: int
    epsilon: float
    eigen_magnitudes: List[float]
    capped: bool
    repeated_eigenvalues: bool


class DiagnosticsDocument(_Document):
    kind: Literal['fit_diagnostics'] = 'fit_diagnostics'
    lag: int
    lag_rule: str
    acf_head: List[float]
    partition: PartitionDoc
    occupancy: List[int]
    max_occupancy_deviation: float
    symbol_entropy: float
    max_entropy: float
    depth: DepthDoc
    n_symbols: int
    n_segments: int
    n_scored_emissions: int
    stationary_damping: float
    # max |π·Ã − empirical symbol frequency|
    marginal_difference: float


class DendrogramDocument(_Document):
    kind: Literal['dendrogram'] = 'dendrogram'
    n_leaves: int = Field(ge=1)
    merges: List[List[float]]  # [id_a, id_b, new_id, height]
    linkage: List[List[float]]
    source_fingerprint: str


class ReductionDocument(_Document):
    kind: Literal['reduced_model'] = 'reduced_model'
    n_clusters: int = Field(ge=1)
    alphabet_size: int
    depth: int
    weighting: str
    cluster_map: List[int]
    transition: List[List[float]]
    emission: List[List[float]]
    stationary: List[float]
    zero_mass_clusters: List[int] = Field(default_factory=list)
    source_fingerprint: str
    kappa: Optional[float] = None
    bound: Optional[float] = None
    selected_by: Optional[str] = None


class DistortionDocument(_Document):
    kind: Literal['distortion_report'] = 'distortion_report'
    n_clusters: int
    kappa: float
    bound: float
    vacuous: bool
    n: int
    trials: int
    seed: int
    coupling: str
    empirical: Dict[str, float]
    distances: List[float]
