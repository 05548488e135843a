import logging
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence
import numpy as np

from data_class.experiment_params import CTreeConfig
from tabular.dataset import Dataset, Instance
from ctree.independence_test import independence_test, two_sample_scan

logger = logging.getLogger(__name__)

# INVARIANT:
# The row-index lists of the leaves partition the rows used for fitting, and
# every leaf holds at least one row, so sampling from a routed leaf never fails.


@dataclass(frozen=True)
class SplitRule:
    """
    Numeric rule: value <= threshold goes left.
    Categorical rule: level codes in left_levels go left, in right_levels go
    right, anything unseen at fit time goes to `unseen_goes_left`'s side (the
    child that received more rows).
    """
    column: int
    threshold: Optional[float] = None
    left_levels: FrozenSet[int] = frozenset()
    right_levels: FrozenSet[int] = frozenset()
    unseen_goes_left: bool = True

    @property
    def is_numeric(self) -> bool:
        return self.threshold is not None

    def goes_left(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        if self.is_numeric:
            return values <= self.threshold
        codes = values.astype(np.int64)
        left = np.isin(codes, list(self.left_levels))
        right = np.isin(codes, list(self.right_levels))
        return left | (~left & ~right & self.unseen_goes_left)

    def to_dict(self) -> dict:
        if self.is_numeric:
            return {"column": self.column, "threshold": self.threshold}
        return {
            "column": self.column,
            "left_levels": sorted(self.left_levels),
            "right_levels": sorted(self.right_levels),
            "unseen_goes_left": self.unseen_goes_left,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitRule":
        if "threshold" in d:
            return cls(column=d["column"], threshold=float(d["threshold"]))
        return cls(
            column=d["column"],
            left_levels=frozenset(d["left_levels"]),
            right_levels=frozenset(d["right_levels"]),
            unseen_goes_left=d["unseen_goes_left"],
        )


@dataclass
class Node:
    depth: int
    rows: Optional[np.ndarray] = None
    rule: Optional[SplitRule] = None
    left: Optional["Node"] = None
    right: Optional["Node"] = None
    leaf_id: int = -1
    p_value: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return self.rule is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"depth": self.depth, "leaf_id": self.leaf_id, "rows": self.rows.tolist()}
        return {
            "depth": self.depth,
            "rule": self.rule.to_dict(),
            "p_value": self.p_value,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        if "rule" not in d:
            return cls(depth=d["depth"], rows=np.asarray(d["rows"], dtype=np.int64), leaf_id=d["leaf_id"])
        return cls(
            depth=d["depth"],
            rule=SplitRule.from_dict(d["rule"]),
            p_value=d.get("p_value"),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


@dataclass
class CTreeModel:
    response_column: int
    conditioning_columns: List[int]
    root: Node
    config: CTreeConfig = field(default_factory=CTreeConfig)

    def __post_init__(self):
        self._leaves = [node for node in _iter_nodes(self.root) if node.is_leaf]

    @property
    def leaves(self) -> List[Node]:
        return self._leaves

    @property
    def n_leaves(self) -> int:
        return len(self._leaves)

    def to_dict(self) -> dict:
        return {
            "response_column": self.response_column,
            "conditioning_columns": list(self.conditioning_columns),
            "config": self.config.model_dump(),
            "root": self.root.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CTreeModel":
        return cls(
            response_column=d["response_column"],
            conditioning_columns=list(d["conditioning_columns"]),
            root=Node.from_dict(d["root"]),
            config=CTreeConfig(**d["config"]),
        )


def _iter_nodes(node: Node):
    yield node
    if not node.is_leaf:
        yield from _iter_nodes(node.left)
        yield from _iter_nodes(node.right)


# ==========================================
# INFLUENCE / TRANSFORM FUNCTIONS
# ==========================================

def _column_matrix(ds: Dataset, column: int, values: np.ndarray) -> np.ndarray:
    """Identity for numeric columns, level indicators for categorical/ordinal ones."""
    feature = ds.schema[column]
    if feature.is_numeric:
        return values[:, None]
    codes = values.astype(np.int64)
    indicators = np.zeros((values.shape[0], len(feature.levels)))
    indicators[np.arange(values.shape[0]), codes] = 1.0
    return indicators


# ==========================================
# SPLIT SEARCH
# ==========================================

def _numeric_split(x: np.ndarray, h: np.ndarray, min_bucket: int, column: int) -> Optional[SplitRule]:
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n_left = np.arange(1, n)
    admissible = (xs[:-1] < xs[1:]) & (n_left >= min_bucket) & (n - n_left >= min_bucket)
    if not admissible.any():
        return None
    scores = two_sample_scan(h[order], n_left)
    scores = np.where(admissible, scores, -np.inf)
    # argmax keeps the first maximum, i.e. the smallest threshold on ties
    cut = int(np.argmax(scores))
    threshold = (xs[cut] + xs[cut + 1]) / 2.0
    if not xs[cut] <= threshold < xs[cut + 1]:
        threshold = float(xs[cut])
    return SplitRule(column=column, threshold=float(threshold))


def _categorical_split(
    x: np.ndarray,
    y: np.ndarray,
    h: np.ndarray,
    response_is_numeric: bool,
    min_bucket: int,
    column: int,
) -> Optional[SplitRule]:
    codes = x.astype(np.int64)
    present = np.unique(codes)
    if present.size < 2:
        return None

    # Numeric response: order levels by mean response. Categorical response:
    # by the share of rows whose response is the first level.
    target = y if response_is_numeric else (y == 0).astype(np.float64)
    level_scores = np.array([target[codes == level].mean() for level in present])
    ranked = present[np.argsort(level_scores, kind="stable")]

    rank_lookup = np.zeros(int(present.max()) + 1, dtype=np.int64)
    rank_lookup[ranked] = np.arange(ranked.size)
    row_rank = rank_lookup[codes]
    order = np.argsort(row_rank, kind="stable")
    counts = np.bincount(row_rank, minlength=ranked.size)
    n = x.shape[0]
    n_left = np.cumsum(counts)[:-1]
    admissible = (n_left >= min_bucket) & (n - n_left >= min_bucket)
    if not admissible.any():
        return None

    scores = two_sample_scan(h[order], n_left)
    scores = np.where(admissible, scores, -np.inf)
    cut = int(np.argmax(scores))
    left = frozenset(int(level) for level in ranked[:cut + 1])
    right = frozenset(int(level) for level in ranked[cut + 1:])
    return SplitRule(
        column=column,
        left_levels=left,
        right_levels=right,
        unseen_goes_left=bool(n_left[cut] >= n - n_left[cut]),
    )


# ==========================================
# FITTING
# ==========================================

class _Grower:
    def __init__(self, ds: Dataset, response: int, conditioners: Sequence[int], cfg: CTreeConfig):
        self.ds = ds
        self.response = response
        self.conditioners = list(conditioners)
        self.cfg = cfg
        self.response_is_numeric = ds.schema[response].is_numeric
        self._next_leaf = 0

    def _leaf(self, rows: np.ndarray, depth: int) -> Node:
        node = Node(depth=depth, rows=rows, leaf_id=self._next_leaf)
        self._next_leaf += 1
        return node

    def grow(self, rows: np.ndarray, depth: int) -> Node:
        cfg = self.cfg
        if not self.conditioners or rows.size < cfg.min_split or depth >= cfg.max_depth:
            return self._leaf(rows, depth)

        y = self.ds.values[rows, self.response]
        h = _column_matrix(self.ds, self.response, y)

        adjusted = []
        for column in self.conditioners:
            x = self.ds.values[rows, column]
            result = independence_test(_column_matrix(self.ds, column, x), h)
            # Bonferroni across the candidate columns
            adjusted.append(min(1.0, result.p_value * len(self.conditioners)))
        adjusted = np.array(adjusted)

        for position in np.argsort(adjusted, kind="stable"):
            if adjusted[position] > cfg.alpha:
                break
            column = self.conditioners[position]
            rule = self._find_split(rows, column, y, h)
            if rule is None:
                continue
            goes_left = rule.goes_left(self.ds.values[rows, column])
            logger.debug(
                "depth %d: split on column %d (p=%.3g, n=%d -> %d/%d)",
                depth, column, adjusted[position], rows.size, goes_left.sum(), (~goes_left).sum(),
            )
            node = Node(depth=depth, rule=rule, p_value=float(adjusted[position]))
            node.left = self.grow(rows[goes_left], depth + 1)
            node.right = self.grow(rows[~goes_left], depth + 1)
            return node

        return self._leaf(rows, depth)

    def _find_split(self, rows: np.ndarray, column: int, y: np.ndarray, h: np.ndarray) -> Optional[SplitRule]:
        x = self.ds.values[rows, column]
        if self.ds.schema[column].is_numeric:
            return _numeric_split(x, h, self.cfg.min_bucket, column)
        return _categorical_split(x, y, h, self.response_is_numeric, self.cfg.min_bucket, column)


def fit(ds: Dataset, response: int, conditioners: Sequence[int], cfg: CTreeConfig = CTreeConfig()) -> CTreeModel:
    """
    Fits a conditional inference tree for one response column.

    Raises:
        ValueError: empty dataset, or the response is also a conditioner.
    """
    if ds.n_rows == 0:
        raise ValueError("Cannot fit a tree on an empty dataset.")
    conditioners = list(conditioners)
    if response in conditioners:
        raise ValueError(f"Response column {response} cannot also be a conditioning column.")
    for column in [response, *conditioners]:
        if not 0 <= column < ds.n_features:
            raise ValueError(f"Column index {column} out of range for {ds.n_features} features.")

    root = _Grower(ds, response, conditioners, cfg).grow(np.arange(ds.n_rows), depth=0)
    model = CTreeModel(response, conditioners, root, cfg)
    logger.debug(
        "Fitted tree for '%s' on %d conditioners: %d leaves",
        ds.schema[response].name, len(conditioners), model.n_leaves,
    )
    return model


# ==========================================
# ROUTING AND SAMPLING
# ==========================================

def route(model: CTreeModel, x: Instance) -> Node:
    node = model.root
    while not node.is_leaf:
        node = node.left if node.rule.goes_left(np.array([x[node.rule.column]]))[0] else node.right
    return node


def route_batch(model: CTreeModel, X: np.ndarray) -> np.ndarray:
    """Leaf id for every row of X."""
    leaf_ids = np.empty(X.shape[0], dtype=np.int64)
    stack = [(model.root, np.arange(X.shape[0]))]
    while stack:
        node, members = stack.pop()
        if members.size == 0:
            continue
        if node.is_leaf:
            leaf_ids[members] = node.leaf_id
            continue
        goes_left = node.rule.goes_left(X[members, node.rule.column])
        stack.append((node.left, members[goes_left]))
        stack.append((node.right, members[~goes_left]))
    return leaf_ids


def sample_leaf(model: CTreeModel, leaf: Node, ds: Dataset, rng: np.random.Generator) -> float:
    """Response value of one training row drawn uniformly (with replacement) from the leaf."""
    row = leaf.rows[rng.integers(leaf.rows.size)]
    return float(ds.values[row, model.response_column])


def sample_leaves(model: CTreeModel, leaf_ids: np.ndarray, ds: Dataset, rng: np.random.Generator) -> np.ndarray:
    """Vectorized sample_leaf: one draw per entry of leaf_ids. Leaves are visited in id order."""
    out = np.empty(leaf_ids.shape[0])
    order = np.argsort(leaf_ids, kind="stable")
    present, starts = np.unique(leaf_ids[order], return_index=True)
    ends = np.append(starts[1:], order.size)
    for leaf_id, start, end in zip(present, starts, ends):
        leaf = model.leaves[leaf_id]
        members = order[start:end]
        picks = leaf.rows[rng.integers(leaf.rows.size, size=members.size)]
        out[members] = ds.values[picks, model.response_column]
    return out
