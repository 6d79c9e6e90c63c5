"""End-to-end orchestration: fit, reduce, simulate and the batch commands."""
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config.logging_config import get_logger
from config.settings import PipelineConfig
from ..depth import DepthEstimate, estimate_depth
from ..distort import CoupledTrial, report_from_trials, run_coupled_trials
from ..dmarkov import DMarkovModel, estimate_model, n_scored_emissions, solve_stationary
from ..ingest import (
    LagSelection,
    RawSeries,
    SegmentedSeries,
    autocorrelation,
    default_max_lag,
    downsample_all_phases,
    load_series,
    normalize,
    normalize_segments,
    select_downsampling_lag,
)
from ..metrics import AnomalyRecord, anomaly_record, feature_vector, simplex_coordinates
from ..models.documents import DepthDoc, DiagnosticsDocument, PartitionDoc, Preprocessing, Provenance
from ..reduce import (
    Dendrogram,
    ReducedModel,
    cut,
    hierarchical_cluster,
    pairwise_kl_distance,
    reduce_model,
    reestimate_emission,
    reestimate_transition,
)
from ..selection import ScoreTable, score_all_cuts, selected_clusters
from ..symbolize import PartitionSpec, SymbolSequence, cell_occupancy, encode, mep_partition, symbol_entropy
from ..utils.helpers import sha256_file

logger = get_logger(__name__)

ACF_HEAD = 50


@dataclass
class FitResult:
    model: DMarkovModel
    partition: PartitionSpec
    sequence: SymbolSequence
    lag: LagSelection
    acf: np.ndarray
    depth: DepthEstimate
    preprocessing: Preprocessing


@dataclass
class ReductionResult:
    dendrogram: Dendrogram
    table: ScoreTable
    selected_n: int
    reduced: ReducedModel
    reestimated: bool = False


@dataclass
class BatchItem:
    sample_id: str
    path: str
    input_sha256: Optional[str] = None
    status: str = 'Success'
    error_code: Optional[str] = None
    message: Optional[str] = None
    record: Optional[AnomalyRecord] = None
    features: Optional[np.ndarray] = None
    simplex: Optional[pd.DataFrame] = None


# --- Fit --- #

def _preprocess(raw: RawSeries, lag: Optional[int], config: PipelineConfig):
    """Normalization, lag choice and phase-preserving downsampling."""
    mean, std = float(raw.samples.mean()), float(raw.samples.std())
    x = normalize(raw) if config.normalize_first else raw
    acf = np.empty(0)
    if lag is None:
        max_lag = config.max_lag or default_max_lag(len(raw))
        max_lag = min(max_lag, len(raw) - 1)
        acf = autocorrelation(x, max_lag)
        selection = select_downsampling_lag(acf)
        logger.info(f"Downsampling lag {selection.lag} ({selection.rule}).")
    else:
        selection = LagSelection(lag, 'local_minimum')
    segmented = downsample_all_phases(x, selection.lag)
    if not config.normalize_first:
        segmented = normalize_segments(segmented)
    return segmented, selection, acf, mean, std


def fit_series(raw: RawSeries, config: PipelineConfig) -> FitResult:
    """normalize → ACF lag → downsample → MEP → depth → D-Markov model."""
    segmented, selection, acf, mean, std = _preprocess(raw, None, config)
    if config.mep_on_downsampled:
        partition = mep_partition(segmented, config.alphabet_size)
    else:
        # full-resolution samples in time order, normalized the same way
        full = normalize(raw).samples if config.normalize_first else (raw.samples - mean) / std
        partition = mep_partition(SegmentedSeries((full,), 1), config.alphabet_size)
    sequence = encode(segmented, partition)

    one_step = estimate_model(sequence, 1, config.prior_weight)
    depth = estimate_depth(one_step.emission, config.epsilon, config.d_max, config.depth_floor)
    model = estimate_model(sequence, depth.depth, config.prior_weight)
    preprocessing = Preprocessing(
        lag=selection.lag,
        lag_rule=selection.rule,
        mean=mean,
        std=std,
        normalize_first=config.normalize_first,
        mep_on_downsampled=config.mep_on_downsampled,
    )
    logger.info(f"Fitted D={model.depth} model with {model.n_states} states from {len(sequence)} symbols.")
    return FitResult(model, partition, sequence, selection, acf, depth, preprocessing)


def encode_with(raw: RawSeries, preprocessing: Preprocessing, partition: PartitionSpec, config: PipelineConfig) -> SymbolSequence:
    """Symbolizes a series with a trained lag and partition; each series is normalized with its own statistics."""
    run_config = config.model_copy(update={'normalize_first': preprocessing.normalize_first})
    segmented, _, _, _, _ = _preprocess(raw, preprocessing.lag, run_config)
    return encode(segmented, partition)


def fit_diagnostics(fit: FitResult, provenance: Provenance) -> DiagnosticsDocument:
    seq = fit.sequence
    occupancy = cell_occupancy(seq)
    expected = len(seq) / seq.alphabet_size
    empirical = occupancy / max(len(seq), 1)
    marginal = fit.model.stationary @ fit.model.emission
    return DiagnosticsDocument(
        lag=fit.lag.lag,
        lag_rule=fit.lag.rule,
        acf_head=fit.acf[:ACF_HEAD + 1].tolist(),
        partition=PartitionDoc(**fit.partition.to_dict()),
        occupancy=occupancy.tolist(),
        max_occupancy_deviation=float(np.max(np.abs(occupancy - expected))),
        symbol_entropy=symbol_entropy(seq),
        max_entropy=float(np.log(seq.alphabet_size)),
        depth=DepthDoc(**fit.depth.to_dict()),
        n_symbols=len(seq),
        n_segments=len(seq.segment_boundaries) + 1,
        n_scored_emissions=n_scored_emissions(seq, fit.model.depth),
        stationary_damping=fit.model.stationary_damping,
        marginal_difference=float(np.max(np.abs(marginal - empirical))),
        provenance=provenance,
    )


# --- Reduce --- #

def reduce_fitted(
    model: DMarkovModel,
    sequence: SymbolSequence,
    config: PipelineConfig,
    reestimate: bool = False,
) -> ReductionResult:
    """Clusters the states, scores every cut and builds the selected reduced model.

    With ``reestimate`` the selected model's parameters are counted directly on
    ``sequence`` through the trained cluster map.
    """
    dendrogram = hierarchical_cluster(pairwise_kl_distance(model))
    table = score_all_cuts(
        model, dendrogram, sequence,
        weighting=config.weighting,
        n_min=config.n_min,
        n_max=config.n_max,
        bound_length=config.bound_length,
        bound_threshold=config.bound_threshold,
    )
    n_selected = selected_clusters(table, config.criterion)
    reduced = reduce_model(model, cut(dendrogram, n_selected), config.weighting)
    if reestimate:
        reduced = reestimated_model(reduced, sequence, config.prior_weight)
    return ReductionResult(dendrogram, table, n_selected, reduced, reestimate)


def reestimated_model(reduced: ReducedModel, sequence: SymbolSequence, prior_weight: float) -> ReducedModel:
    cluster_map = reduced.cluster_map
    emission = reestimate_emission(sequence, reduced.depth, cluster_map, prior_weight)
    transition = reestimate_transition(sequence, reduced.depth, cluster_map, prior_weight)
    stationary, _ = solve_stationary(transition)
    logger.info(f"Re-estimated {cluster_map.n_clusters}-state parameters from {len(sequence)} new symbols.")
    return ReducedModel(
        cluster_map=cluster_map,
        transition=transition,
        emission=emission,
        stationary=stationary,
        alphabet_size=reduced.alphabet_size,
        depth=reduced.depth,
        weighting='reestimated',
        source_fingerprint=reduced.source_fingerprint,
        zero_mass_clusters=(),
    )


def reduce_at(model: DMarkovModel, n_clusters: int, weighting: str, dendrogram: Optional[Dendrogram] = None) -> ReducedModel:
    """Reduction at a fixed N, clamped to |Q|; reuses ``dendrogram`` when given."""
    if dendrogram is None:
        dendrogram = hierarchical_cluster(pairwise_kl_distance(model))
    n = min(n_clusters, model.n_states)
    if n < n_clusters:
        logger.info(f"Requested {n_clusters} clusters but the model has {model.n_states} states; using {n}.")
    return reduce_model(model, cut(dendrogram, n), weighting)


# --- Simulate --- #

def simulate(
    model: DMarkovModel,
    reduced: ReducedModel,
    config: PipelineConfig,
    n_jobs: int = 1,
    length: Optional[int] = None,
    trials: Optional[int] = None,
):
    n = length or config.simulate_length
    n_trials = trials or config.trials
    results = run_coupled_trials(model, reduced, n=n, trials=n_trials, seed=config.seed, n_jobs=n_jobs)
    report = report_from_trials(model, reduced, None, results, n, config.seed)
    return results, report


def trials_frame(results: Sequence[CoupledTrial], alphabet_size: int) -> pd.DataFrame:
    sep = '' if alphabet_size <= 10 else '-'
    return pd.DataFrame({
        'trial': [r.trial for r in results],
        'initial_state': [r.initial_state for r in results],
        'hamming': [r.hamming for r in results],
        'full': [sep.join(map(str, r.full.tolist())) for r in results],
        'reduced': [sep.join(map(str, r.reduced.tolist())) for r in results],
    })


# --- Batch --- #

def list_batch(batch_dir: str) -> List[str]:
    """Regular, non-hidden files in name order."""
    if not os.path.isdir(batch_dir):
        raise NotADirectoryError(f"Batch directory {batch_dir} does not exist.")
    names = sorted(n for n in os.listdir(batch_dir) if not n.startswith('.'))
    return [os.path.join(batch_dir, n) for n in names if os.path.isfile(os.path.join(batch_dir, n))]


def sample_id_of(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _analyze_one(path: str, config: PipelineConfig) -> BatchItem:
    item = BatchItem(sample_id_of(path), path)
    try:
        item.input_sha256 = sha256_file(path)
        raw = load_series(path, config.input_format, config.column, config.skip_header)
        fit = fit_series(raw, config)
        result = reduce_fitted(fit.model, fit.sequence, config)
        fixed = reduce_at(fit.model, config.metric_clusters, config.weighting, result.dendrogram)
        item.record = anomaly_record(item.sample_id, fit.model, result.selected_n, fixed, config.one_sided_discrepancy)
    except Exception as e:
        _mark_failed(item, e)
    return item


def _features_one(path: str, config: PipelineConfig, n_clusters: int) -> BatchItem:
    item = BatchItem(sample_id_of(path), path)
    try:
        item.input_sha256 = sha256_file(path)
        raw = load_series(path, config.input_format, config.column, config.skip_header)
        fit = fit_series(raw, config)
        reduced = reduce_at(fit.model, n_clusters, config.weighting)
        item.features = feature_vector(reduced)
        item.simplex = simplex_coordinates(reduced, item.sample_id)
    except Exception as e:
        _mark_failed(item, e)
    return item


def _mark_failed(item: BatchItem, error: Exception) -> None:
    item.status = 'Failed'
    item.error_code = getattr(error, 'code', type(error).__name__)
    item.message = str(error)
    logger.error(f"Batch item {item.path} failed: {error}", exc_info=True)


def run_batch(paths: Sequence[str], worker, config: PipelineConfig, n_jobs: int = 1, **kwargs) -> List[BatchItem]:
    """Per-file isolation; results are returned in input order."""
    logger.info(f"Processing {len(paths)} batch items with n_jobs={n_jobs}.")
    items = Parallel(n_jobs=n_jobs)(delayed(worker)(p, config, **kwargs) for p in paths)
    failed = sum(1 for i in items if i.status != 'Success')
    if failed:
        logger.warning(f"{failed} of {len(items)} batch items failed; see the batch summary.")
    return items


def analyze_batch(paths: Sequence[str], config: PipelineConfig, n_jobs: int = 1) -> List[BatchItem]:
    return run_batch(paths, _analyze_one, config, n_jobs)


def features_batch(paths: Sequence[str], config: PipelineConfig, n_clusters: int, n_jobs: int = 1) -> List[BatchItem]:
    return run_batch(paths, _features_one, config, n_jobs, n_clusters=n_clusters)


def summary_frame(items: Sequence[BatchItem]) -> pd.DataFrame:
    return pd.DataFrame({
        'sample_id': [i.sample_id for i in items],
        'status': [i.status for i in items],
        'error_code': [i.error_code or '' for i in items],
        'message': [i.message or '' for i in items],
    })


def anomaly_frame(items: Sequence[BatchItem]) -> pd.DataFrame:
    columns = ['sample_id', 'delta_m', 'h_m', 'depth', 'selected_n', 'delta_m_reduced']
    return pd.DataFrame([i.record.to_dict() for i in items if i.record is not None], columns=columns)


