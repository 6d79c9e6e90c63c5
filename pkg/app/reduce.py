"""State aggregation: symmetric K-L distances, complete-linkage clustering and reduced-model estimation."""
import heapq
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from config.logging_config import get_logger
from .dmarkov import DMarkovModel, emission_from_counts, log_likelihood_of_rows, word_targets
from .exceptions import BadCut, EmptyCluster, ZeroProbability
from .symbolize import SymbolSequence

logger = get_logger(__name__)

Weighting = Union[Literal['stationary', 'empirical'], np.ndarray]

# Row block size for passes over dense |Q|×|Q| matrices
_DISTANCE_BLOCK = 256


@dataclass(frozen=True)
class Merge:
    cluster_a: int
    cluster_b: int
    new_cluster: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Agglomerative merge history; leaves are 0..n_leaves-1, merge i creates cluster n_leaves+i."""
    merges: Tuple[Merge, ...]
    n_leaves: int

    def __post_init__(self):
        if len(self.merges) != self.n_leaves - 1:
            raise ValueError(f"A dendrogram over {self.n_leaves} leaves needs {self.n_leaves - 1} merges, got {len(self.merges)}.")

    @cached_property
    def merge_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(cluster_a, cluster_b, new_cluster) as int arrays in merge order."""
        if not self.merges:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty, empty
        table = np.array([[m.cluster_a, m.cluster_b, m.new_cluster] for m in self.merges], dtype=np.int64)
        return table[:, 0], table[:, 1], table[:, 2]

    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges], dtype=np.float64)

    def to_linkage(self) -> np.ndarray:
        """scipy.cluster.hierarchy linkage matrix rows: [id_a, id_b, height, size]."""
        if not self.merges:
            return np.empty((0, 4))
        return np.array([[m.cluster_a, m.cluster_b, m.height, m.size] for m in self.merges], dtype=np.float64)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_leaves": self.n_leaves,
            "merges": [[m.cluster_a, m.cluster_b, m.new_cluster, m.height] for m in self.merges],
            "linkage": self.to_linkage().tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Dendrogram':
        n = int(data["n_leaves"])
        sizes: Dict[int, int] = {i: 1 for i in range(n)}
        merges = []
        for a, b, new, height in data["merges"]:
            sizes[int(new)] = sizes[int(a)] + sizes[int(b)]
            merges.append(Merge(int(a), int(b), int(new), float(height), sizes[int(new)]))
        return cls(tuple(merges), n)


@dataclass(frozen=True)
class ClusterMap:
    """Deterministic assignment f: state -> cluster; clusters are ordered by their smallest member."""
    assignment: np.ndarray
    n_clusters: int

    def __post_init__(self):
        assignment = np.asarray(self.assignment, dtype=np.int64).ravel()
        object.__setattr__(self, 'assignment', assignment)
        if assignment.size and (assignment.min() < 0 or assignment.max() >= self.n_clusters):
            raise EmptyCluster(f"Assignment labels must lie in [0, {self.n_clusters}).")
        present = np.bincount(assignment, minlength=self.n_clusters)
        if np.any(present == 0):
            empty = np.flatnonzero(present == 0).tolist()
            raise EmptyCluster(f"Clusters {empty} have no member states.")

    @classmethod
    def identity(cls, n_states: int) -> 'ClusterMap':
        return cls(np.arange(n_states), n_states)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> 'ClusterMap':
        """Relabels arbitrary group labels into canonical (smallest-member) order."""
        labels = np.asarray(labels).ravel()
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first)] = np.arange(first.size)
        return cls(rank[inverse.ravel()], int(first.size))

    @property
    def n_states(self) -> int:
        return self.assignment.size

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)


@dataclass(frozen=True)
class ReducedModel:
    cluster_map: ClusterMap
    transition: np.ndarray
    emission: np.ndarray
    stationary: np.ndarray
    alphabet_size: int
    depth: int
    weighting: str
    source_fingerprint: str
    zero_mass_clusters: Tuple[int, ...] = field(default=())

    @property
    def n_states(self) -> int:
        return self.cluster_map.n_clusters


# --- Distances --- #

def _check_positive(emission: np.ndarray) -> None:
    if np.any(emission <= 0.0):
        bad = int(np.count_nonzero(emission <= 0.0))
        raise ZeroProbability(f"{bad} emission entries are zero; K-L distances need a positive prior (prior_weight > 0).")


def symmetric_kl(p: np.ndarray, q: np.ndarray) -> float:
    """D_KL(p||q) + D_KL(q||p) in nats."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float(np.sum((p - q) * (np.log(p) - np.log(q))))


def pairwise_kl_distance(model: Union[DMarkovModel, np.ndarray]) -> np.ndarray:
    """Symmetric K-L distance between every pair of emission rows."""
    emission = np.asarray(getattr(model, 'emission', model), dtype=np.float64)
    _check_positive(emission)
    logs = np.log(emission)
    n = emission.shape[0]
    dist = np.empty((n, n))
    for start in range(0, n, _DISTANCE_BLOCK):
        stop = min(start + _DISTANCE_BLOCK, n)
        dp = emission[start:stop, None, :] - emission[None, :, :]
        dl = logs[start:stop, None, :] - logs[None, :, :]
        dist[start:stop] = np.sum(dp * dl, axis=2)
    np.fill_diagonal(dist, 0.0)
    return dist


# --- Clustering --- #

def _symmetrize(d: np.ndarray) -> None:
    """In-place max(d, dᵀ) with signed zeros cleared; rejects asymmetric, negative or non-finite input."""
    n = d.shape[0]
    for start in range(0, n, _DISTANCE_BLOCK):
        stop = min(start + _DISTANCE_BLOCK, n)
        rows = d[start:stop]
        cols = d[:, start:stop].T
        if not np.all(np.isfinite(rows)) or rows.min() < -1e-12 or np.abs(rows - cols).max() > 1e-12:
            raise ValueError("Distance matrix must be finite, symmetric and non-negative.")
        block = np.maximum(rows, cols) + 0.0
        d[start:stop] = block
        d[:, start:stop] = block.T


def _duplicate_groups(d: np.ndarray) -> List[List[int]]:
    """Leaves with identical distance rows, in order of their first member."""
    groups: List[List[int]] = []
    by_hash: Dict[int, List[int]] = {}
    for q in range(d.shape[0]):
        candidates = by_hash.setdefault(hash(d[q].tobytes()), [])
        for g in candidates:
            if np.array_equal(d[groups[g][0]], d[q]):
                groups[g].append(q)
                break
        else:
            candidates.append(len(groups))
            groups.append([q])
    return groups


def _merge_duplicates(groups: List[List[int]], n: int, merges: List[Merge]) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-height merges inside each group of identical leaves.

    Replays the global rule: the smallest active id that still has a partner
    is merged with the smallest partner. Returns the surviving id and size of
    every group.
    """
    queues = [deque(g) for g in groups]
    sizes = {q: 1 for q in range(n)}
    heap = [(q[0], g) for g, q in enumerate(queues) if len(q) > 1]
    heapq.heapify(heap)
    next_id = n
    while heap:
        _, g = heapq.heappop(heap)
        q = queues[g]
        a, b = q.popleft(), q.popleft()
        sizes[next_id] = sizes[a] + sizes[b]
        merges.append(Merge(a, b, next_id, 0.0, sizes[next_id]))
        q.append(next_id)
        next_id += 1
        if len(q) > 1:
            heapq.heappush(heap, (q[0], g))
    ids = np.array([q[0] for q in queues], dtype=np.int64)
    return ids, np.array([sizes[i] for i in ids], dtype=np.int64)


def _nearest(d: np.ndarray, rows: np.ndarray, ids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Row minima and, among tied columns, the one holding the smallest cluster id."""
    sub = d[rows]
    mins = sub.min(axis=1)
    key = np.where(sub == mins[:, None], ids[None, :], np.iinfo(np.int64).max)
    return mins, np.argmin(key, axis=1)


def _complete_linkage(d: np.ndarray, ids: np.ndarray, sizes: np.ndarray, next_id: int, merges: List[Merge]) -> None:
    """Greedy complete linkage with a cached nearest neighbour per slot.

    ``d`` is overwritten. A merge only raises distances, and the new cluster
    carries the largest id, so only rows whose neighbour was one of the two
    merged slots need a rescan.
    """
    r = d.shape[0]
    np.fill_diagonal(d, np.inf)
    mind = np.empty(r)
    nn = np.empty(r, dtype=np.int64)
    for start in range(0, r, _DISTANCE_BLOCK):
        rows = np.arange(start, min(start + _DISTANCE_BLOCK, r))
        mind[rows], nn[rows] = _nearest(d, rows, ids)
    active = np.ones(r, dtype=bool)

    for remaining in range(r, 1, -1):
        live = np.flatnonzero(active)
        height = mind[live].min()
        cand = live[mind[live] == height]
        partner = nn[cand]
        id_lo = np.minimum(ids[cand], ids[partner])
        id_hi = np.maximum(ids[cand], ids[partner])
        pick = np.lexsort((id_hi, id_lo))[0]
        i, j = sorted((int(cand[pick]), int(partner[pick])))
        merges.append(Merge(int(id_lo[pick]), int(id_hi[pick]), next_id, float(height), int(sizes[i] + sizes[j])))

        # diameter of the union is the max of the two
        merged = np.maximum(d[i], d[j])
        d[i, :] = merged
        d[:, i] = merged
        d[i, i] = np.inf
        d[j, :] = np.inf
        d[:, j] = np.inf
        active[j] = False
        mind[j] = np.inf
        ids[i] = next_id
        sizes[i] += sizes[j]
        next_id += 1

        if remaining > 2:
            stale = np.flatnonzero(active & ((nn == i) | (nn == j)))
            stale = np.union1d(stale, [i])
            mind[stale], nn[stale] = _nearest(d, stale, ids)


def hierarchical_cluster(distances: np.ndarray) -> Dendrogram:
    """Complete linkage on fixed leaf distances.

    At every step the pair of active clusters with the smallest union diameter
    is merged; ties go to the lexicographically smallest (min id, max id) pair.
    Leaves with identical distance rows are merged first at height 0 when no
    other pair is at distance 0, and the rest runs on one row per group.
    """
    d = np.array(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"Distance matrix must be square, got shape {d.shape}.")
    n = d.shape[0]
    if n == 0:
        raise ValueError("Cannot cluster an empty state set.")
    _symmetrize(d)
    np.fill_diagonal(d, 0.0)

    merges: List[Merge] = []
    ids = np.arange(n, dtype=np.int64)
    sizes = np.ones(n, dtype=np.int64)
    groups = _duplicate_groups(d)
    if len(groups) < n:
        reps = np.array([g[0] for g in groups], dtype=np.int64)
        condensed = d[np.ix_(reps, reps)]
        np.fill_diagonal(condensed, np.inf)
        if condensed.min() > 0.0:
            ids, sizes = _merge_duplicates(groups, n, merges)
            d = condensed
            logger.debug(f"Collapsed {n} states into {len(groups)} distinct distance rows.")
    _complete_linkage(d, ids, sizes, n + len(merges), merges)

    logger.debug(f"Clustered {n} states; final height {merges[-1].height if merges else 0.0}.")
    return Dendrogram(tuple(merges), n)


def cut(dendrogram: Dendrogram, n_clusters: int) -> ClusterMap:
    """Partition after the first |Q|−N merges."""
    n = dendrogram.n_leaves
    if not 1 <= n_clusters <= n:
        raise BadCut(f"Cannot cut a dendrogram over {n} states into {n_clusters} clusters.")
    a, b, new = dendrogram.merge_arrays
    k = n - n_clusters
    parent = np.arange(2 * n - 1, dtype=np.int64)
    parent[a[:k]] = new[:k]
    parent[b[:k]] = new[:k]
    # pointer jumping; parents always carry larger ids
    while True:
        up = parent[parent]
        if np.array_equal(up, parent):
            break
        parent = up
    return ClusterMap.from_labels(parent[:n])


# --- Reduced parameters --- #

def cluster_weights(model: DMarkovModel, cluster_map: ClusterMap, weighting: Weighting = 'stationary') -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Per-state weights normalized within each cluster, and the multi-state clusters with zero total mass.

    A singleton cluster keeps its own row whatever its weight.
    """
    if cluster_map.n_states != model.n_states:
        raise ValueError(f"Cluster map covers {cluster_map.n_states} states, model has {model.n_states}.")
    if isinstance(weighting, str):
        if weighting == 'stationary':
            raw = np.asarray(model.stationary, dtype=np.float64)
        elif weighting == 'empirical':
            raw = np.asarray(model.counts, dtype=np.float64).sum(axis=1)
        else:
            raise ValueError(f"Unknown weighting '{weighting}'. Use 'stationary' or 'empirical'.")
    else:
        raw = np.asarray(weighting, dtype=np.float64).ravel()
        if raw.size != model.n_states or np.any(raw < 0):
            raise ValueError("Custom weights need one non-negative value per state.")
    sizes = np.bincount(cluster_map.assignment, minlength=cluster_map.n_clusters)
    mass = np.bincount(cluster_map.assignment, weights=raw, minlength=cluster_map.n_clusters)
    zero_mass = tuple(int(c) for c in np.flatnonzero((mass <= 0.0) & (sizes > 1)))
    if zero_mass:
        logger.debug(f"Clusters {list(zero_mass)} carry zero weight.")
    denom = mass[cluster_map.assignment]
    weights = np.divide(raw, denom, out=np.zeros_like(raw), where=denom > 0)
    weights[sizes[cluster_map.assignment] == 1] = 1.0
    return weights, zero_mass


def _mixer(weights: np.ndarray, cluster_map: ClusterMap) -> sparse.csr_matrix:
    """N×|Q| matrix with weights[q] at (f(q), q)."""
    n = cluster_map.n_states
    return sparse.csr_matrix((weights, (cluster_map.assignment, np.arange(n))), shape=(cluster_map.n_clusters, n))


def _sparse_indicator(cluster_map: ClusterMap) -> sparse.csr_matrix:
    return _mixer(np.ones(cluster_map.n_states), cluster_map).T.tocsr()


def _aggregate_rows(rows, weights: np.ndarray, cluster_map: ClusterMap, zero_mass: Sequence[int]) -> np.ndarray:
    """Σ_{q∈c} w_q·rows[q] per cluster; ``rows`` may be dense or sparse."""
    if sparse.issparse(rows):
        out = (_mixer(weights, cluster_map) @ rows).toarray()
    else:
        rows = np.asarray(rows, dtype=np.float64)
        out = np.column_stack([
            np.bincount(cluster_map.assignment, weights=weights * rows[:, s], minlength=cluster_map.n_clusters)
            for s in range(rows.shape[1])
        ])
    if zero_mass:
        out[list(zero_mass)] = 1.0 / rows.shape[1]
    return out


def _reduce_transition_closed_form(model: DMarkovModel, cluster_map: ClusterMap) -> Tuple[np.ndarray, Tuple[int, ...]]:
    weights, zero_mass = cluster_weights(model, cluster_map, 'stationary')
    to_cluster = sparse.csr_matrix(model.transition) @ _sparse_indicator(cluster_map)
    return _aggregate_rows(to_cluster, weights, cluster_map, zero_mass), zero_mass


def _safe_reciprocal(x: np.ndarray) -> np.ndarray:
    return np.divide(1.0, x, out=np.zeros_like(x), where=x > 0)


def _reduce_transition_bayes(model: DMarkovModel, cluster_map: ClusterMap) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Chained Bayes derivation through Pr(Q_k | Q_{k+1}), Pr(Q̃_k | Q_{k+1}) and Pr(Q_{k+1} | Q̃_k)."""
    pi = np.asarray(model.stationary, dtype=np.float64)
    P = sparse.csr_matrix(model.transition)
    ind = _sparse_indicator(cluster_map)
    # marginal of Q_{k+1} when Q_k ~ π; equals π at stationarity
    next_marginal = P.T @ pi

    # Pr(Q_k = q | Q_{k+1} = q')
    backward = sparse.diags(pi) @ P @ sparse.diags(_safe_reciprocal(next_marginal))
    # Pr(Q̃_k = c | Q_{k+1} = q'), indicator-weighted sum over q ∈ c
    cluster_given_next = ind.T @ backward
    # Pr(Q_{k+1} = q' | Q̃_k = c) by Bayes' rule
    numer = cluster_given_next @ sparse.diags(next_marginal)
    denom = np.asarray(numer.sum(axis=1)).ravel()
    next_given_cluster = sparse.diags(_safe_reciprocal(denom)) @ numer
    # Pr(Q̃_{k+1} = c' | Q̃_k = c), summing q' over c'
    reduced = (next_given_cluster @ ind).toarray()

    zero_mass = []
    for c in np.flatnonzero(denom <= 0.0):
        members = cluster_map.members(c)
        if members.size == 1:
            reduced[c] = (P[members[0]] @ ind).toarray().ravel()
        else:
            reduced[c] = 1.0 / cluster_map.n_clusters
            zero_mass.append(int(c))
    return reduced, tuple(zero_mass)


def reduce_transition(model: DMarkovModel, cluster_map: ClusterMap, method: Literal['closed_form', 'bayes'] = 'closed_form') -> np.ndarray:
    """Reduced transition matrix Π̃ for the partition ``cluster_map``.

    ``closed_form`` computes Σ_{q∈c} π(q) Σ_{q'∈c'} Π(q,q') / Σ_{q∈c} π(q) and is
    exact on singleton clusters; ``bayes`` follows the chained Bayes-rule
    derivation. Both agree to rounding. Clusters of several states with zero
    stationary mass get uniform rows.
    """
    if method == 'closed_form':
        reduced, _ = _reduce_transition_closed_form(model, cluster_map)
    elif method == 'bayes':
        reduced, _ = _reduce_transition_bayes(model, cluster_map)
    else:
        raise ValueError(f"Unknown method '{method}'. Use 'closed_form' or 'bayes'.")
    return reduced


def reduce_emission(model: DMarkovModel, cluster_map: ClusterMap, weighting: Weighting = 'stationary') -> np.ndarray:
    """Ẽ[c] = weighted mixture of the member emission rows."""
    weights, zero_mass = cluster_weights(model, cluster_map, weighting)
    return _aggregate_rows(np.asarray(model.emission, dtype=np.float64), weights, cluster_map, zero_mass)


def reduce_model(model: DMarkovModel, cluster_map: ClusterMap, weighting: Weighting = 'stationary') -> ReducedModel:
    transition = reduce_transition(model, cluster_map)
    _, zero_transition = cluster_weights(model, cluster_map, 'stationary')
    _, zero_emission = cluster_weights(model, cluster_map, weighting)
    zero_mass = tuple(sorted(set(zero_transition) | set(zero_emission)))
    if zero_mass:
        logger.warning(f"Clusters {list(zero_mass)} carry zero weight; their rows are set uniform.")
    emission = reduce_emission(model, cluster_map, weighting)
    stationary = np.bincount(cluster_map.assignment, weights=model.stationary, minlength=cluster_map.n_clusters)
    return ReducedModel(
        cluster_map=cluster_map,
        transition=transition,
        emission=emission,
        stationary=stationary,
        alphabet_size=model.alphabet_size,
        depth=model.depth,
        weighting=weighting if isinstance(weighting, str) else 'custom',
        source_fingerprint=model.fingerprint,
        zero_mass_clusters=zero_mass,
    )


def reduced_log_likelihood(
    model: DMarkovModel,
    cluster_map: ClusterMap,
    seq: SymbolSequence,
    weighting: Weighting = 'stationary',
    emission: Optional[np.ndarray] = None,
) -> float:
    """Σ log Ẽ[f(word_k)][s_k]; the full D-word still indexes the state."""
    if seq.alphabet_size != model.alphabet_size:
        raise ValueError(f"Sequence alphabet {seq.alphabet_size} does not match model alphabet {model.alphabet_size}.")
    rows = reduce_emission(model, cluster_map, weighting) if emission is None else emission
    return log_likelihood_of_rows(rows, cluster_map.assignment, seq, model.depth)


# --- Re-estimation on new data through a trained map --- #

def reestimate_emission(seq: SymbolSequence, depth: int, cluster_map: ClusterMap, prior_weight: float = 1.0) -> np.ndarray:
    """Reduced emission counted directly on ``seq`` with states mapped through f."""
    words, targets = word_targets(seq, depth)
    labels = cluster_map.assignment[words]
    a = seq.alphabet_size
    counts = np.bincount(labels * a + targets, minlength=cluster_map.n_clusters * a).reshape(cluster_map.n_clusters, a)
    return emission_from_counts(counts, prior_weight)


def reestimate_transition(seq: SymbolSequence, depth: int, cluster_map: ClusterMap, prior_weight: float = 0.0) -> np.ndarray:
    """Cluster-to-cluster transition frequencies of consecutive word states within segments."""
    n = cluster_map.n_clusters
    counts = np.zeros((n, n))
    a = seq.alphabet_size
    n_states = a ** depth
    for seg in seq.segments():
        if seg.size <= depth:
            continue
        one = SymbolSequence(seg, a)
        words, targets = word_targets(one, depth)
        nxt = (words * a) % n_states + targets
        np.add.at(counts, (cluster_map.assignment[words], cluster_map.assignment[nxt]), 1.0)
    return emission_from_counts(counts, prior_weight)
