from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union
import numpy as np
import pandas as pd

from config.mcce_consts import DISCRETE_AS_NUMERIC
from data_class.feature_schema import FeatureKind, TableSchema

# An instance is a 1-D float vector aligned to the schema. Numeric cells hold
# their value, categorical/ordinal cells hold the integer index of their level.
Instance = np.ndarray

# INVARIANT:
# Row i of Dataset.values is training row i, in file order. Subsets keep the
# parent's row ids in Dataset.row_ids so baseline candidates can be traced back.


class Dataset:
    """
    Column-aligned table of coded cells plus the training ranges used for
    normalization and Gower distance. Immutable after construction.
    """

    def __init__(
        self,
        schema: TableSchema,
        values: np.ndarray,
        ranges: Optional[Dict[int, Tuple[float, float]]] = None,
        discrete_as_numeric: bool = DISCRETE_AS_NUMERIC,
        row_ids: Optional[np.ndarray] = None,
    ):
        values = np.array(values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[1] != len(schema):
            raise ValueError(
                f"Values shape {values.shape} does not match schema with {len(schema)} features."
            )
        self.schema = schema
        self.discrete_as_numeric = discrete_as_numeric
        for j in range(len(schema)):
            self._check_column(j, values[:, j])
        values.flags.writeable = False
        self.values = values

        self.ranges = dict(ranges) if ranges is not None else self._compute_ranges(values)
        for j, (lo, hi) in self.ranges.items():
            if lo > hi:
                raise ValueError(f"Range of '{schema[j].name}' has min {lo} > max {hi}.")

        if row_ids is None:
            row_ids = np.arange(values.shape[0])
        self.row_ids = np.asarray(row_ids, dtype=np.int64)

        self._encoding_slices = self._build_encoding_slices()

    # ==========================================
    # CONSTRUCTION HELPERS
    # ==========================================

    def _compute_ranges(self, values: np.ndarray) -> Dict[int, Tuple[float, float]]:
        ranges = {}
        for j, feature in enumerate(self.schema.features):
            if not feature.is_numeric:
                continue
            if values.shape[0] == 0:
                ranges[j] = (0.0, 0.0)
            else:
                ranges[j] = (float(values[:, j].min()), float(values[:, j].max()))
        return ranges

    def _check_column(self, j: int, column: np.ndarray) -> None:
        feature = self.schema[j]
        if np.isnan(column).any():
            row = int(np.flatnonzero(np.isnan(column))[0])
            raise ValueError(f"Missing value in row {row}, column '{feature.name}'.")
        if feature.kind.has_levels:
            bad = (column != np.floor(column)) | (column < 0) | (column >= len(feature.levels))
            if bad.any():
                row = int(np.flatnonzero(bad)[0])
                raise ValueError(
                    f"Row {row}, column '{feature.name}': code {column[row]} is not a known level."
                )

    def _build_encoding_slices(self) -> List[slice]:
        slices = []
        start = 0
        for feature in self.schema.features:
            slices.append(slice(start, start + feature.encoded_width))
            start += feature.encoded_width
        return slices

    # ==========================================
    # PROPERTIES
    # ==========================================

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def encoded_width(self) -> int:
        return self._encoding_slices[-1].stop

    @property
    def gower_numeric_mask(self) -> np.ndarray:
        """True for columns that use the range-scaled branch of Gower distance."""
        mask = np.zeros(self.n_features, dtype=bool)
        for j, feature in enumerate(self.schema.features):
            if feature.kind == FeatureKind.CONTINUOUS:
                mask[j] = True
            elif feature.kind == FeatureKind.DISCRETE:
                mask[j] = self.discrete_as_numeric
        return mask

    @property
    def range_widths(self) -> np.ndarray:
        """R_j per column; 0 for columns without a range."""
        widths = np.zeros(self.n_features)
        for j, (lo, hi) in self.ranges.items():
            widths[j] = hi - lo
        return widths

    def row(self, i: int) -> Instance:
        return self.values[i].copy()

    def subset(self, rows: Sequence[int], keep_ranges: bool = True) -> "Dataset":
        """Rows in the given order. Ranges stay those of the parent unless keep_ranges is False."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.schema,
            self.values[rows],
            ranges=self.ranges if keep_ranges else None,
            discrete_as_numeric=self.discrete_as_numeric,
            row_ids=self.row_ids[rows],
        )

    # ==========================================
    # LABELS <-> CODES
    # ==========================================

    def encode_instance(self, cells: Union[Mapping[str, object], Sequence[object]]) -> Instance:
        """Turns human-readable cells (dict by name, or list in schema order) into an Instance."""
        if isinstance(cells, Mapping):
            missing = [n for n in self.schema.names if n not in cells]
            if missing:
                raise ValueError(f"Instance is missing features: {missing}")
            cells = [cells[n] for n in self.schema.names]
        if len(cells) != self.n_features:
            raise ValueError(f"Instance has {len(cells)} cells, schema has {self.n_features} features.")
        return np.array([encode_cell(self.schema, j, c) for j, c in enumerate(cells)], dtype=np.float64)

    def decode(self, x: Instance) -> Dict[str, object]:
        return {f.name: decode_cell(self.schema, j, x[j]) for j, f in enumerate(self.schema.features)}

    def to_frame(self, rows: Optional[np.ndarray] = None) -> pd.DataFrame:
        """Decoded table (level labels instead of codes)."""
        values = self.values if rows is None else np.atleast_2d(rows)
        frame = pd.DataFrame(values, columns=self.schema.names)
        for j, feature in enumerate(self.schema.features):
            if feature.kind.has_levels:
                labels = np.array(feature.levels, dtype=object)
                frame[feature.name] = labels[values[:, j].astype(np.int64)]
            elif feature.kind == FeatureKind.DISCRETE:
                frame[feature.name] = values[:, j].astype(np.int64)
        return frame

    # ==========================================
    # NORMALIZATION
    # ==========================================

    def normalize_matrix(self, rows: np.ndarray) -> np.ndarray:
        """
        Min-max scales numeric cells with the training ranges and expands
        categorical/ordinal cells into level indicators (one 0/1 value for
        features with at most two levels). Encoding order is schema order,
        then level order.
        """
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if rows.shape[1] != self.n_features:
            raise ValueError(f"Rows have {rows.shape[1]} cells, schema has {self.n_features} features.")
        encoded = np.zeros((rows.shape[0], self.encoded_width))
        for j, feature in enumerate(self.schema.features):
            column = rows[:, j]
            target = self._encoding_slices[j]
            if feature.is_numeric:
                lo, hi = self.ranges[j]
                if hi > lo:
                    encoded[:, target.start] = (column - lo) / (hi - lo)
                continue

            n_levels = len(feature.levels)
            bad = (column != np.floor(column)) | (column < 0) | (column >= n_levels)
            if bad.any():
                raise ValueError(
                    f"Unknown level code {column[bad][0]} for feature '{feature.name}' "
                    f"(levels: {feature.levels})."
                )
            codes = column.astype(np.int64)
            if feature.encoded_width == 1:
                encoded[:, target.start] = codes
            else:
                encoded[np.arange(rows.shape[0]), target.start + codes] = 1.0
        return encoded

    def normalized_values(self) -> np.ndarray:
        return self.normalize_matrix(self.values)


def normalize(ds: Dataset, x: Instance) -> np.ndarray:
    return ds.normalize_matrix(x)[0]


def split_fixed_mutable(schema: TableSchema, x: Instance) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (fixed cells, mutable cells), each in schema order."""
    x = np.asarray(x)
    return x[schema.fixed_columns].copy(), x[schema.mutable_columns].copy()


def join_fixed_mutable(schema: TableSchema, fixed_part: np.ndarray, mutable_part: np.ndarray) -> Instance:
    x = np.empty(len(schema), dtype=np.float64)
    x[schema.fixed_columns] = fixed_part
    x[schema.mutable_columns] = mutable_part
    return x


# ==========================================
# CELL CODECS
# ==========================================

def encode_cell(schema: TableSchema, j: int, cell: object, row: Optional[int] = None) -> float:
    feature = schema[j]
    where = f"row {row}, " if row is not None else ""
    if feature.kind.has_levels:
        label = str(cell)
        try:
            return float(feature.levels.index(label))
        except ValueError:
            raise ValueError(
                f"{where}column '{feature.name}': unknown level '{label}' (levels: {feature.levels})."
            ) from None
    try:
        value = float(cell)
    except (TypeError, ValueError):
        raise ValueError(f"{where}column '{feature.name}': '{cell}' is not a number.") from None
    if not np.isfinite(value):
        raise ValueError(f"{where}column '{feature.name}': '{cell}' is not a finite number.")
    if feature.kind == FeatureKind.DISCRETE and value != np.floor(value):
        raise ValueError(f"{where}column '{feature.name}': '{cell}' is not an integer.")
    return value


def decode_cell(schema: TableSchema, j: int, code: float) -> object:
    feature = schema[j]
    if feature.kind.has_levels:
        return feature.levels[int(code)]
    if feature.kind == FeatureKind.DISCRETE:
        return int(code)
    return float(code)


def encode_column(schema: TableSchema, j: int, cells: Iterable[object]) -> np.ndarray:
    return np.array([encode_cell(schema, j, c, row=i) for i, c in enumerate(cells, start=1)], dtype=np.float64)
