"""Penalized-likelihood scoring of dendrogram cuts and model selection."""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd

from config.logging_config import get_logger
from .distort import hamming_bound, kappa
from .dmarkov import DMarkovModel, log_likelihood_of_words, word_targets
from .exceptions import BadCut, ZeroProbability
from .reduce import Dendrogram, Weighting, cut, reduce_emission, reduced_log_likelihood
from .symbolize import SymbolSequence

logger = get_logger(__name__)

Criterion = Literal['aic', 'bic', 'bound']
SCORE_COLUMNS = ['N', 'L', 'K', 'AIC', 'BIC', 'kappa', 'bound']


def aic(log_likelihood: float, n_params: int) -> float:
    return -2.0 * log_likelihood + 2.0 * n_params


def bic(log_likelihood: float, n_params: int, n_obs: int) -> float:
    if n_obs < 1:
        raise ValueError(f"n_obs must be >= 1, got {n_obs}.")
    return -2.0 * log_likelihood + n_params * math.log(n_obs)


@dataclass(frozen=True)
class ScoreRow:
    n_clusters: int
    log_likelihood: float
    n_params: int
    aic: float
    bic: float
    kappa: float
    bound: float


@dataclass
class ScoreTable:
    rows: List[ScoreRow]
    n_obs: int
    selected: Dict[str, int] = field(default_factory=dict)

    def row(self, n_clusters: int) -> ScoreRow:
        for r in self.rows:
            if r.n_clusters == n_clusters:
                return r
        raise KeyError(n_clusters)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[r.n_clusters, r.log_likelihood, r.n_params, r.aic, r.bic, r.kappa, r.bound] for r in self.rows],
            columns=SCORE_COLUMNS,
        )


def argmin_smallest(values: Dict[int, float]) -> int:
    """Key with the minimum value; ties go to the smallest key. NaN never wins."""
    best_n, best = None, math.inf
    for n in sorted(values):
        v = values[n]
        if best_n is None or v < best:
            if not math.isnan(v):
                best_n, best = n, v
    if best_n is None:
        best_n = min(values)
    return best_n


def select_by_bound(table: ScoreTable, threshold: float) -> int:
    """Smallest N whose Hamming bound is within ``threshold``; the largest N if none is."""
    for r in sorted(table.rows, key=lambda r: r.n_clusters):
        if not math.isnan(r.bound) and r.bound <= threshold:
            return r.n_clusters
    fallback = max(r.n_clusters for r in table.rows)
    logger.warning(f"No cut has a Hamming bound <= {threshold}; selecting N={fallback}.")
    return fallback


def score_cut(
    model: DMarkovModel,
    dendrogram: Dendrogram,
    seq: SymbolSequence,
    n_clusters: int,
    n_obs: int,
    weighting: Weighting = 'stationary',
    bound_length: int = 1000,
    scored: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> ScoreRow:
    """One score row; ``scored`` holds precomputed (word, next symbol) pairs of ``seq``."""
    cluster_map = cut(dendrogram, n_clusters)
    emission = reduce_emission(model, cluster_map, weighting)
    if scored is None:
        ll = reduced_log_likelihood(model, cluster_map, seq, weighting, emission=emission)
    else:
        ll = log_likelihood_of_words(emission, cluster_map.assignment, *scored)
    k = model.alphabet_size * n_clusters
    try:
        kap = kappa(model, emission, cluster_map)
        bound = hamming_bound(kap, bound_length, model.depth)
    except ZeroProbability:
        kap = bound = math.nan
    return ScoreRow(n_clusters, ll, k, aic(ll, k), bic(ll, k, n_obs), kap, bound)


def score_all_cuts(
    model: DMarkovModel,
    dendrogram: Dendrogram,
    seq: SymbolSequence,
    weighting: Weighting = 'stationary',
    n_min: Optional[int] = None,
    n_max: Optional[int] = None,
    bound_length: int = 1000,
    bound_threshold: float = 0.1,
) -> ScoreTable:
    """Scores every cut N in [n_min, n_max] and records the argmin of each criterion."""
    n_states = dendrogram.n_leaves
    lo = 1 if n_min is None else n_min
    hi = n_states if n_max is None else min(n_max, n_states)
    if not 1 <= lo <= hi:
        raise BadCut(f"Cut range [{lo}, {hi}] is empty or outside [1, {n_states}].")
    if seq.alphabet_size != model.alphabet_size:
        raise ValueError(f"Sequence alphabet {seq.alphabet_size} does not match model alphabet {model.alphabet_size}.")
    scored = word_targets(seq, model.depth)
    n_obs = int(scored[1].size)
    logger.info(f"Scoring cuts N={lo}..{hi} over {n_obs} scored emissions.")

    rows = [score_cut(model, dendrogram, seq, n, n_obs, weighting, bound_length, scored) for n in range(lo, hi + 1)]
    table = ScoreTable(rows, n_obs)
    table.selected = {
        'aic': argmin_smallest({r.n_clusters: r.aic for r in rows}),
        'bic': argmin_smallest({r.n_clusters: r.bic for r in rows}),
        'bound': select_by_bound(table, bound_threshold),
    }
    logger.info(f"Selected N: AIC={table.selected['aic']}, BIC={table.selected['bic']}, bound={table.selected['bound']}.")
    return table


def selected_clusters(table: ScoreTable, criterion: Criterion = 'bic') -> int:
    if criterion not in table.selected:
        raise ValueError(f"Unknown criterion '{criterion}'. Use aic, bic or bound.")
    return table.selected[criterion]
