"""
Step 1 (generation): one conditional inference tree per mutable feature,
chained so that tree t models feature_order[t] given the fixed features and
every earlier mutable feature. Sampling fills the columns in that order.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence
import numpy as np
from joblib import Parallel, delayed

from data_class.experiment_params import CTreeConfig
from model.predictor import Predictor
from tabular.dataset import Dataset, Instance
from tabular.preprocess import write_rows_csv
from ctree.tree import CTreeModel, fit, route_batch, sample_leaves

logger = logging.getLogger(__name__)


@dataclass
class ChainModel:
    feature_order: List[int]
    fixed_columns: List[int]
    trees: List[CTreeModel]

    @property
    def q(self) -> int:
        return len(self.feature_order)

    def to_dict(self) -> dict:
        return {
            "feature_order": list(self.feature_order),
            "fixed_columns": list(self.fixed_columns),
            "trees": [tree.to_dict() for tree in self.trees],
        }


@dataclass
class CandidateSet:
    """
    D_i: K rows for one individual, each sharing the individual's fixed cells.
    `source_rows` holds training row ids for baseline sets (None for sampled sets).
    """
    individual: Instance
    rows: np.ndarray
    predictions: np.ndarray
    source_rows: Optional[np.ndarray] = None

    @property
    def K(self) -> int:
        return self.rows.shape[0]

    def head(self, n: int) -> "CandidateSet":
        """The first n rows, so nested sets can be compared."""
        return CandidateSet(
            individual=self.individual,
            rows=self.rows[:n],
            predictions=self.predictions[:n],
            source_rows=None if self.source_rows is None else self.source_rows[:n],
        )


def _conditioning_set(fixed_columns: Sequence[int], feature_order: Sequence[int], t: int) -> List[int]:
    return list(fixed_columns) + list(feature_order[:t])


def fit_chain(
    ds: Dataset,
    cfg: CTreeConfig = CTreeConfig(),
    order: Optional[Sequence[int]] = None,
    n_jobs: int = 1,
) -> ChainModel:
    """
    Fits the q trees of the chain. Default order is schema order of the
    mutable columns. Fitted once and reused for every individual.

    Raises:
        ValueError: no mutable feature, empty dataset, or `order` is not a
            permutation of the mutable columns.
    """
    mutable = ds.schema.mutable_columns
    if not mutable:
        raise ValueError("Nothing to explain: the schema has no mutable features.")
    if ds.n_rows == 0:
        raise ValueError("Cannot fit the chain on an empty dataset.")

    feature_order = list(mutable) if order is None else [int(c) for c in order]
    if sorted(feature_order) != sorted(mutable):
        raise ValueError(
            f"Feature order {feature_order} must be a permutation of the mutable columns {mutable}."
        )
    fixed = ds.schema.fixed_columns

    # Each tree depends only on the data, so they can be fitted in parallel.
    trees = Parallel(n_jobs=n_jobs)(
        delayed(fit)(ds, column, _conditioning_set(fixed, feature_order, t), cfg)
        for t, column in enumerate(feature_order)
    )
    chain = ChainModel(feature_order=feature_order, fixed_columns=list(fixed), trees=list(trees))
    logger.info(
        "Fitted chain of %d trees on %d rows (leaves per tree: %s)",
        chain.q, ds.n_rows, [tree.n_leaves for tree in chain.trees],
    )
    return chain


def generate(
    chain: ChainModel,
    ds: Dataset,
    pred: Predictor,
    x: Instance,
    K: int,
    seed: int,
) -> CandidateSet:
    """Monte Carlo samples K rows conditioned on x's fixed cells. Deterministic given seed."""
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    x = np.asarray(x, dtype=np.float64)
    ds.normalize_matrix(x)

    rng = np.random.default_rng(seed)
    # Start from x repeated K times; every mutable column is overwritten below.
    rows = np.tile(x, (K, 1))
    for column, tree in zip(chain.feature_order, chain.trees):
        leaf_ids = route_batch(tree, rows)
        rows[:, column] = sample_leaves(tree, leaf_ids, ds, rng)

    return CandidateSet(individual=x, rows=rows, predictions=pred.predict_batch(ds, rows))


def generate_baseline(ds: Dataset, pred: Predictor, x: Instance) -> CandidateSet:
    """Candidates are the training rows whose fixed cells equal x's exactly."""
    x = np.asarray(x, dtype=np.float64)
    fixed = ds.schema.fixed_columns
    if fixed:
        matches = np.all(ds.values[:, fixed] == x[fixed], axis=1)
    else:
        matches = np.ones(ds.n_rows, dtype=bool)
    rows = ds.values[matches].copy()
    if rows.shape[0] == 0:
        logger.debug("Baseline: no training row matches the fixed features of this individual")
    return CandidateSet(
        individual=x,
        rows=rows,
        predictions=pred.predict_batch(ds, rows),
        source_rows=ds.row_ids[matches],
    )


def write_candidates_csv(ds: Dataset, cand: CandidateSet, path: str) -> None:
    write_rows_csv(ds, cand.rows, path, extra={"prediction": cand.predictions})
