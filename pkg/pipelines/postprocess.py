"""
Step 2 (post-processing): reduce a candidate set to counterfactuals.

Validity f(e) > c is an absolute requirement in every mode. The default mode
filters lexicographically: success, then minimal sparsity, then minimal
Gower distance, then candidate row index.
"""

import logging
import time
from dataclasses import dataclass
from typing import List, NamedTuple, Optional
import numpy as np
import pandas as pd

from config.mcce_consts import WEIGHTED_SUM_ORIENTATION
from data_class.experiment_params import FilterWeights
from model.predictor import Predictor
from tabular.dataset import Dataset, Instance
from pipelines.generator import CandidateSet
from pipelines.knn_index import KnnIndex
from pipelines.metrics import (
    feasibility_batch, gower_batch, redundancy_batch, sparsity_batch, ynn_batch,
)

logger = logging.getLogger(__name__)


@dataclass
class CounterfactualResult:
    individual: Instance
    counterfactual: Optional[Instance]
    n_valid: int
    elapsed_seconds: float
    row_index: Optional[int] = None

    @property
    def found(self) -> bool:
        return self.counterfactual is not None


class ValidRow(NamedTuple):
    row_id: int
    instance: Instance
    sparsity: int
    gower: float
    feasibility: float


def _valid_rows(cand: CandidateSet, pred: Predictor) -> np.ndarray:
    return np.flatnonzero(cand.predictions > pred.cutoff)


def _lexicographic_order(cand: CandidateSet, ds: Dataset, valid: np.ndarray) -> np.ndarray:
    """Valid row ids sorted by (sparsity, Gower, row id)."""
    rows = cand.rows[valid]
    sparsities = sparsity_batch(cand.individual, rows)
    distances = gower_batch(ds, cand.individual, rows)
    return valid[np.lexsort((valid, distances, sparsities))]


def select_ideal(cand: CandidateSet, ds: Dataset, pred: Predictor) -> CounterfactualResult:
    started = time.perf_counter()
    valid = _valid_rows(cand, pred)
    if valid.size == 0:
        return CounterfactualResult(cand.individual, None, 0, time.perf_counter() - started)

    rows = cand.rows[valid]
    sparsities = sparsity_batch(cand.individual, rows)
    sparsest = valid[sparsities == sparsities.min()]
    distances = gower_batch(ds, cand.individual, cand.rows[sparsest])
    # argmin returns the first minimum, i.e. the smallest row index
    winner = int(sparsest[int(np.argmin(distances))])
    return CounterfactualResult(
        individual=cand.individual,
        counterfactual=cand.rows[winner].copy(),
        n_valid=int(valid.size),
        elapsed_seconds=time.perf_counter() - started,
        row_index=winner,
    )


def weighted_scores(
    cand: CandidateSet,
    ds: Dataset,
    pred: Predictor,
    w: FilterWeights,
    idx: KnnIndex,
    x: Instance,
    rows: np.ndarray,
) -> np.ndarray:
    """w1*gower + w2*sparsity + w3*feasibility - w4*yNN + w5*redundancy for each row (lower is better)."""
    terms = np.column_stack([
        gower_batch(ds, x, rows),
        sparsity_batch(x, rows).astype(np.float64),
        feasibility_batch(idx, rows),
        -ynn_batch(idx, pred, rows),
        redundancy_batch(pred, ds, x, rows).astype(np.float64),
    ])
    return terms @ np.asarray(w.as_vector())


def select_weighted(
    cand: CandidateSet,
    ds: Dataset,
    pred: Predictor,
    w: FilterWeights,
    idx: KnnIndex,
    x: Instance,
) -> CounterfactualResult:
    if WEIGHTED_SUM_ORIENTATION != "minimize":
        raise ValueError(f"Unsupported weighted-sum orientation '{WEIGHTED_SUM_ORIENTATION}'.")
    started = time.perf_counter()
    valid = _valid_rows(cand, pred)
    if valid.size == 0:
        return CounterfactualResult(x, None, 0, time.perf_counter() - started)

    scores = weighted_scores(cand, ds, pred, w, idx, x, cand.rows[valid])
    winner = int(valid[int(np.argmin(scores))])
    return CounterfactualResult(
        individual=x,
        counterfactual=cand.rows[winner].copy(),
        n_valid=int(valid.size),
        elapsed_seconds=time.perf_counter() - started,
        row_index=winner,
    )


def rank_valid(cand: CandidateSet, ds: Dataset, pred: Predictor, n: int) -> List[Instance]:
    """The n best valid rows in (sparsity, Gower, row index) order."""
    valid = _valid_rows(cand, pred)
    if valid.size == 0:
        return []
    ordered = _lexicographic_order(cand, ds, valid)[:n]
    return [cand.rows[i].copy() for i in ordered]


def valid_set(cand: CandidateSet, ds: Dataset, pred: Predictor, idx: KnnIndex) -> List[ValidRow]:
    """Every valid row with its sparsity, Gower distance and feasibility."""
    valid = _valid_rows(cand, pred)
    if valid.size == 0:
        return []
    rows = cand.rows[valid]
    sparsities = sparsity_batch(cand.individual, rows)
    distances = gower_batch(ds, cand.individual, rows)
    feasibilities = feasibility_batch(idx, rows)
    return [
        ValidRow(int(i), rows[r].copy(), int(sparsities[r]), float(distances[r]), float(feasibilities[r]))
        for r, i in enumerate(valid)
    ]


def write_valid_set_csv(entries: List[ValidRow], path: str) -> None:
    frame = pd.DataFrame(
        [(v.row_id, v.sparsity, v.gower, v.feasibility) for v in entries],
        columns=["row_id", "sparsity", "gower", "feasibility"],
    )
    frame.to_csv(path, index=False)
    logger.info("Wrote %d valid candidates to %s", len(entries), path)
