"""
Counterfactual quality metrics. Distances are taken on the normalized
representation of the training data; kNN-based metrics share one KnnIndex.

Sparsity counts *changed* features (identity -> 0).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence
import numpy as np

from config.mcce_consts import METRIC_COLUMNS
from data_class.feature_schema import TableSchema
from model.predictor import Predictor
from tabular.dataset import Dataset, Instance
from pipelines.knn_index import KnnIndex

logger = logging.getLogger(__name__)


def _check_aligned(x: np.ndarray, rows: np.ndarray) -> None:
    if rows.shape[1] != x.shape[0]:
        raise ValueError(f"Schema mismatch: instance has {x.shape[0]} cells, rows have {rows.shape[1]}.")


# ==========================================
# DISTANCE-TYPE METRICS
# ==========================================

def sparsity_batch(x: Instance, rows: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    rows = np.atleast_2d(rows)
    _check_aligned(x, rows)
    return (rows != x).sum(axis=1)


def sparsity(x: Instance, e: Instance) -> int:
    return int(sparsity_batch(x, e)[0])


def gower_batch(ds: Dataset, x: Instance, rows: np.ndarray) -> np.ndarray:
    """
    Mean over features of |e_j - x_j| / R_j for range-scaled columns and
    1[e_j != x_j] otherwise. A zero range falls back to the indicator.
    """
    x = np.asarray(x, dtype=np.float64)
    rows = np.atleast_2d(rows)
    _check_aligned(x, rows)
    numeric = ds.gower_numeric_mask
    widths = ds.range_widths
    scaled = numeric & (widths > 0)

    per_feature = (rows != x).astype(np.float64)
    per_feature[:, scaled] = np.abs(rows[:, scaled] - x[scaled]) / widths[scaled]
    return per_feature.mean(axis=1)


def gower(ds: Dataset, x: Instance, e: Instance) -> float:
    return float(gower_batch(ds, x, e)[0])


def violation_batch(schema: TableSchema, x: Instance, rows: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    rows = np.atleast_2d(rows)
    _check_aligned(x, rows)
    fixed = schema.fixed_columns
    if not fixed:
        return np.zeros(rows.shape[0], dtype=np.int64)
    return (rows[:, fixed] != x[fixed]).sum(axis=1)


def violation(schema: TableSchema, x: Instance, e: Instance) -> int:
    return int(violation_batch(schema, x, e)[0])


def diversity(ds: Dataset, es: Sequence[Instance]) -> float:
    """Sum of Gower distances over ordered pairs (i, j), i != j. One CE -> 0."""
    es = np.atleast_2d(np.asarray(es, dtype=np.float64))
    total = 0.0
    for j in range(es.shape[0]):
        others = np.delete(es, j, axis=0)
        if others.shape[0]:
            total += float(gower_batch(ds, es[j], others).sum())
    return total


# ==========================================
# MODEL / DATA-DENSITY METRICS
# ==========================================

def ynn_batch(idx: KnnIndex, pred: Predictor, rows: np.ndarray) -> np.ndarray:
    """1 - mean |f_b(e) - f_b(x_j)| over the k nearest training rows, f_b = 1[f > c]."""
    rows = np.atleast_2d(rows)
    if rows.shape[0] == 0:
        return np.zeros(0)
    own = pred.valid_mask(idx.ds, rows)
    neighbors, _ = idx.search(rows)
    neighbor_classes = pred.valid_mask(idx.ds, idx.ds.values[neighbors.ravel()]).reshape(neighbors.shape)
    disagreement = np.abs(own[:, None].astype(np.float64) - neighbor_classes.astype(np.float64))
    return 1.0 - disagreement.mean(axis=1)


def ynn(idx: KnnIndex, pred: Predictor, e: Instance) -> float:
    return float(ynn_batch(idx, pred, e)[0])


def feasibility_batch(idx: KnnIndex, rows: np.ndarray) -> np.ndarray:
    """Equal-weight (1/k) mean Euclidean distance to the k nearest training rows."""
    rows = np.atleast_2d(rows)
    if rows.shape[0] == 0:
        return np.zeros(0)
    _, distances = idx.search(rows)
    return distances.mean(axis=1)


def feasibility(idx: KnnIndex, ds: Dataset, e: Instance) -> float:
    if ds is not idx.ds:
        raise ValueError("Feasibility must be computed against the dataset the index was built from.")
    return float(feasibility_batch(idx, e)[0])


def redundancy_batch(pred: Predictor, ds: Dataset, x: Instance, rows: np.ndarray) -> np.ndarray:
    """
    For each row: how many changed features can be reset to x one at a time
    (never jointly) while f(.) > c still holds.
    """
    x = np.asarray(x, dtype=np.float64)
    rows = np.atleast_2d(rows)
    _check_aligned(x, rows)
    counts = np.zeros(rows.shape[0], dtype=np.int64)
    for j in range(rows.shape[1]):
        changed = rows[:, j] != x[j]
        if not changed.any():
            continue
        reverted = rows[changed].copy()
        reverted[:, j] = x[j]
        counts[changed] += pred.valid_mask(ds, reverted)
    return counts


def redundancy(pred: Predictor, ds: Dataset, x: Instance, e: Instance) -> int:
    return int(redundancy_batch(pred, ds, x, e)[0])


# ==========================================
# REPORT
# ==========================================

@dataclass
class IndividualRecord:
    """Metrics of one individual's counterfactual. Distance metrics are None when no CE was found."""
    index: int
    success: bool
    L0: Optional[float] = None
    L1: Optional[float] = None
    yNN: Optional[float] = None
    feasibility: Optional[float] = None
    redundancy: Optional[float] = None
    violation: Optional[float] = None
    time_seconds: float = 0.0
    error: Optional[str] = None


@dataclass
class MetricsReport:
    records: List[IndividualRecord] = field(default_factory=list)

    @property
    def n_individuals(self) -> int:
        return len(self.records)

    def aggregate(self) -> Dict[str, float]:
        """
        Column means. Success is averaged over every individual; the other
        metrics only over individuals that received a counterfactual.
        """
        found = [r for r in self.records if r.success]
        result = {}
        for column in METRIC_COLUMNS:
            if column == "success":
                result[column] = float(np.mean([r.success for r in self.records])) if self.records else 0.0
            else:
                values = [getattr(r, column) for r in found]
                result[column] = float(np.mean(values)) if values else float("nan")
        result["time_seconds"] = float(np.mean([r.time_seconds for r in self.records])) if self.records else 0.0
        return result


def evaluate_counterfactual(
    idx: KnnIndex,
    pred: Predictor,
    ds: Dataset,
    x: Instance,
    e: Instance,
    index: int = 0,
    time_seconds: float = 0.0,
) -> IndividualRecord:
    e = np.asarray(e, dtype=np.float64)
    return IndividualRecord(
        index=index,
        success=bool(pred.valid_mask(ds, e)[0]),
        L0=float(sparsity(x, e)),
        L1=gower(ds, x, e),
        yNN=ynn(idx, pred, e),
        feasibility=float(feasibility_batch(idx, e)[0]),
        redundancy=float(redundancy(pred, ds, x, e)),
        violation=float(violation(ds.schema, x, e)),
        time_seconds=time_seconds,
    )
