"""Maximum-entropy (equal-frequency) partitioning and symbol encoding."""
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from config.logging_config import get_logger
from .exceptions import DegeneratePartition, InvalidSeries
from .ingest import SegmentedSeries

logger = get_logger(__name__)


@dataclass(frozen=True)
class PartitionSpec:
    edges: Tuple[float, ...]
    alphabet_size: int

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, 'edges', edges)
        if self.alphabet_size < 2:
            raise ValueError(f"alphabet_size must be >= 2, got {self.alphabet_size}.")
        if len(edges) != self.alphabet_size - 1:
            raise ValueError(f"alphabet_size {self.alphabet_size} needs {self.alphabet_size - 1} edges, got {len(edges)}.")
        if not all(np.isfinite(edges)):
            raise ValueError("Partition edges must be finite.")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise DegeneratePartition(f"Partition edges are not strictly ascending: {list(edges)}.")

    def to_dict(self) -> Dict[str, Any]:
        return {"edges": list(self.edges), "alphabet_size": self.alphabet_size}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PartitionSpec':
        return cls(tuple(data["edges"]), int(data["alphabet_size"]))


@dataclass(frozen=True)
class SymbolSequence:
    """Concatenated symbols; ``segment_boundaries`` are the split offsets between segments."""
    symbols: np.ndarray
    alphabet_size: int
    segment_boundaries: Tuple[int, ...] = ()

    def __post_init__(self):
        symbols = np.asarray(self.symbols, dtype=np.int64).ravel()
        if self.alphabet_size < 1:
            raise ValueError(f"alphabet_size must be >= 1, got {self.alphabet_size}.")
        if symbols.size and (symbols.min() < 0 or symbols.max() >= self.alphabet_size):
            raise InvalidSeries(f"Symbols must lie in [0, {self.alphabet_size}).")
        bounds = tuple(int(b) for b in self.segment_boundaries)
        if any(b < 0 or b > symbols.size for b in bounds) or list(bounds) != sorted(bounds):
            raise InvalidSeries(f"Segment boundaries {list(bounds)} are not sorted offsets within [0, {symbols.size}].")
        object.__setattr__(self, 'symbols', symbols)
        object.__setattr__(self, 'segment_boundaries', bounds)

    @classmethod
    def from_segments(cls, segments: Sequence[Sequence[int]], alphabet_size: int) -> 'SymbolSequence':
        arrays = [np.asarray(s, dtype=np.int64).ravel() for s in segments]
        if not arrays:
            return cls(np.empty(0, dtype=np.int64), alphabet_size, ())
        lengths = np.cumsum([a.size for a in arrays])[:-1]
        return cls(np.concatenate(arrays), alphabet_size, tuple(int(b) for b in lengths))

    def segments(self) -> List[np.ndarray]:
        return np.split(self.symbols, list(self.segment_boundaries))

    def __len__(self) -> int:
        return self.symbols.size


def mep_partition(series: SegmentedSeries, alphabet_size: int) -> PartitionSpec:
    """Edge i is the ceil(i·N/|A|)-th order statistic of the pooled samples."""
    if alphabet_size < 2:
        raise ValueError(f"alphabet_size must be >= 2, got {alphabet_size}.")
    data = np.sort(series.concatenated())
    n = data.size
    if n < alphabet_size:
        raise DegeneratePartition(f"{n} samples cannot fill {alphabet_size} partition cells.")
    ranks = [-(-i * n // alphabet_size) for i in range(1, alphabet_size)]
    edges = [float(data[r - 1]) for r in ranks]
    for i, (a, b) in enumerate(zip(edges, edges[1:]), start=1):
        if b <= a:
            logger.error(f"MEP edges {i} and {i + 1} coincide at {a!r}; data are heavily tied.")
            raise DegeneratePartition(f"Partition edges {i} and {i + 1} coincide at {a!r}; the data are too heavily tied for {alphabet_size} cells.")
    logger.debug(f"MEP partition over {n} samples: edges {edges}.")
    return PartitionSpec(tuple(edges), alphabet_size)


def encode(series: SegmentedSeries, spec: PartitionSpec) -> SymbolSequence:
    """Right-closed binning: symbol j iff edge_{j-1} < x <= edge_j."""
    edges = np.asarray(spec.edges, dtype=np.float64)
    segments = [np.searchsorted(edges, seg, side='left').astype(np.int64) for seg in series.segments]
    return SymbolSequence.from_segments(segments, spec.alphabet_size)


def cell_occupancy(seq: SymbolSequence) -> np.ndarray:
    return np.bincount(seq.symbols, minlength=seq.alphabet_size)


def symbol_entropy(seq: SymbolSequence) -> float:
    """Shannon entropy (nats) of the empirical symbol distribution."""
    counts = cell_occupancy(seq).astype(np.float64)
    if counts.sum() == 0:
        return 0.0
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())
