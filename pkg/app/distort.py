"""Distortion between a full model and its reduction: κ, the Hamming bound and coupled simulation."""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config.logging_config import get_logger
from .dmarkov import DMarkovModel, emission_cdf, emit_path
from .exceptions import BadLength, ZeroProbability
from .reduce import ClusterMap, Dendrogram, ReducedModel, Weighting, cut, reduce_model

logger = get_logger(__name__)

COUPLING = "common_random_numbers"
SUMMARY_KEYS = ('mean', 'min', 'q1', 'median', 'q3', 'max')


@dataclass(frozen=True)
class CoupledTrial:
    trial: int
    initial_state: int
    full: np.ndarray
    reduced: np.ndarray

    @property
    def hamming(self) -> float:
        return float(np.count_nonzero(self.full != self.reduced)) / self.full.size


@dataclass
class DistortionReport:
    kappa: float
    bound: float
    n: int
    trials: int
    seed: int
    empirical: Dict[str, float]
    distances: List[float] = field(default_factory=list)
    coupling: str = COUPLING

    @property
    def vacuous(self) -> bool:
        return self.bound > 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kappa": self.kappa,
            "bound": self.bound,
            "vacuous": self.vacuous,
            "n": self.n,
            "trials": self.trials,
            "seed": self.seed,
            "coupling": self.coupling,
            "empirical": dict(self.empirical),
            "distances": list(self.distances),
        }


def _resolve(reduced: Union[ReducedModel, np.ndarray], cluster_map: Optional[ClusterMap]) -> Tuple[np.ndarray, ClusterMap]:
    if isinstance(reduced, ReducedModel):
        return np.asarray(reduced.emission, dtype=np.float64), cluster_map or reduced.cluster_map
    if cluster_map is None:
        raise ValueError("A cluster map is required when passing a bare reduced emission matrix.")
    return np.asarray(reduced, dtype=np.float64), cluster_map


def kappa(model: DMarkovModel, reduced: Union[ReducedModel, np.ndarray], cluster_map: Optional[ClusterMap] = None) -> float:
    """max over q, s of (Ã[q][s] − Ẽ[f(q)][s]) / Ã[q][s]."""
    emission = np.asarray(model.emission, dtype=np.float64)
    if np.any(emission <= 0.0):
        raise ZeroProbability("κ is undefined when the full emission matrix has zero entries.")
    reduced_emission, cluster_map = _resolve(reduced, cluster_map)
    mapped = reduced_emission[cluster_map.assignment]
    value = float(np.max((emission - mapped) / emission))
    # rows sum to one, so some entry never decreases
    return max(value, 0.0)


def hamming_bound(kappa_value: float, n: int, depth: int) -> float:
    """sqrt((n − D − 1)·κ / 2n); values above 1 are returned as computed."""
    if n <= depth + 1:
        raise BadLength(f"Sequence length {n} must exceed D+1 = {depth + 1}.")
    if kappa_value < 0:
        raise ValueError(f"κ must be non-negative, got {kappa_value}.")
    bound = math.sqrt((n - depth - 1) * kappa_value / (2.0 * n))
    if bound > 1.0:
        logger.debug(f"Hamming bound {bound:.4f} exceeds 1 and is vacuous (κ={kappa_value:.4f}).")
    return bound


def summarize(distances: List[float]) -> Dict[str, float]:
    values = np.asarray(distances, dtype=np.float64)
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return {
        'mean': float(values.mean()),
        'min': float(values.min()),
        'q1': float(q1),
        'median': float(median),
        'q3': float(q3),
        'max': float(values.max()),
    }


def trial_seeds(seed: int, trials: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(trials)


def coupled_trial(
    trial: int,
    seed_seq: np.random.SeedSequence,
    full_cdf: List[List[float]],
    reduced_cdf: List[List[float]],
    assignment: np.ndarray,
    alphabet_size: int,
    depth: int,
    n: int,
) -> CoupledTrial:
    """One paired realization; both samplers consume the same uniform at every step."""
    n_states = alphabet_size ** depth
    q0 = trial % n_states
    uniforms = np.random.default_rng(seed_seq).random(n)
    full = emit_path(full_cdf, q0, uniforms, alphabet_size, depth)
    reduced = emit_path(reduced_cdf, q0, uniforms, alphabet_size, depth, row_of=assignment)
    return CoupledTrial(trial, q0, full, reduced)


def run_coupled_trials(
    model: DMarkovModel,
    reduced: Union[ReducedModel, np.ndarray],
    cluster_map: Optional[ClusterMap] = None,
    n: int = 1000,
    trials: int = 100,
    seed: int = 0,
    n_jobs: int = 1,
) -> List[CoupledTrial]:
    """Initial states run round-robin over Q; results come back in trial order."""
    if n <= model.depth + 1:
        raise BadLength(f"Sequence length {n} must exceed D+1 = {model.depth + 1}.")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}.")
    reduced_emission, cluster_map = _resolve(reduced, cluster_map)
    full_cdf = emission_cdf(model.emission)
    reduced_cdf = emission_cdf(reduced_emission)
    seeds = trial_seeds(seed, trials)
    return Parallel(n_jobs=n_jobs)(
        delayed(coupled_trial)(t, seeds[t], full_cdf, reduced_cdf, cluster_map.assignment, model.alphabet_size, model.depth, n)
        for t in range(trials)
    )


def monte_carlo_hamming(
    model: DMarkovModel,
    reduced: Union[ReducedModel, np.ndarray],
    cluster_map: Optional[ClusterMap] = None,
    n: int = 1000,
    trials: int = 100,
    seed: int = 0,
    n_jobs: int = 1,
) -> DistortionReport:
    results = run_coupled_trials(model, reduced, cluster_map, n, trials, seed, n_jobs)
    return report_from_trials(model, reduced, cluster_map, results, n, seed)


def report_from_trials(
    model: DMarkovModel,
    reduced: Union[ReducedModel, np.ndarray],
    cluster_map: Optional[ClusterMap],
    results: List[CoupledTrial],
    n: int,
    seed: int,
) -> DistortionReport:
    distances = [r.hamming for r in results]
    kap = kappa(model, reduced, cluster_map)
    bound = hamming_bound(kap, n, model.depth)
    report = DistortionReport(kap, bound, n, len(results), seed, summarize(distances), distances)
    logger.info(f"Coupled Hamming over {len(results)} trials: mean={report.empirical['mean']:.4f}, bound={bound:.4f}.")
    if report.vacuous:
        logger.warning(f"Hamming bound {bound:.4f} exceeds 1 and is vacuous (κ={kap:.4f}).")
    return report


def distortion_by_cut(
    model: DMarkovModel,
    dendrogram: Dendrogram,
    weighting: Weighting = 'stationary',
    n: int = 1000,
    trials: int = 100,
    seed: int = 0,
    n_jobs: int = 1,
    n_min: Optional[int] = None,
    n_max: Optional[int] = None,
) -> pd.DataFrame:
    """Five-number summary of coupled distances, κ and bound for every cut level in [n_min, n_max]."""
    lo = n_min or 1
    hi = dendrogram.n_leaves if n_max is None else min(n_max, dendrogram.n_leaves)
    records = []
    for n_clusters in range(lo, hi + 1):
        reduced = reduce_model(model, cut(dendrogram, n_clusters), weighting)
        report = monte_carlo_hamming(model, reduced, n=n, trials=trials, seed=seed, n_jobs=n_jobs)
        records.append({"N": n_clusters, "kappa": report.kappa, "bound": report.bound,
                        **{k: report.empirical[k] for k in SUMMARY_KEYS}})
    return pd.DataFrame(records, columns=["N", "kappa", "bound", *SUMMARY_KEYS])
