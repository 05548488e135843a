import json
import logging
import os
from typing import Optional, Tuple
import numpy as np
import pandas as pd

from data_class.feature_schema import FeatureSchema, TableSchema
from tabular.dataset import Dataset, encode_column
from config.mcce_consts import DISCRETE_AS_NUMERIC

logger = logging.getLogger(__name__)

# CSV contract: comma separated, one header row, UTF-8, '.' decimal separator.
# Extra columns (e.g. the label) are ignored by load_csv.


# ==========================================
# SCHEMA FILE
# ==========================================

def load_schema(path: str) -> TableSchema:
    """Reads a JSON array of {name, kind, levels?, fixed} objects."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Schema file not found: {path}")
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise ValueError(f"Schema file {path} must hold a JSON array of feature objects.")
    schema = TableSchema(features=[FeatureSchema(**item) for item in raw])
    schema.require_mutable()
    return schema


def save_schema(schema: TableSchema, path: str) -> None:
    payload = [f.model_dump(mode="json", exclude_defaults=False) for f in schema.features]
    for item in payload:
        if not item["levels"]:
            del item["levels"]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)


# ==========================================
# DATA FILE
# ==========================================

def _read_raw(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Data file not found: {path}")
    # Everything as text so each cell is parsed (and reported) against its own column kind.
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise ValueError(f"CSV file {path} has no rows.") from None
    if raw.empty:
        raise ValueError(f"CSV file {path} has no rows.")
    return raw


def _frame_to_dataset(
    raw: pd.DataFrame,
    schema: TableSchema,
    discrete_as_numeric: bool,
) -> Dataset:
    missing = [name for name in schema.names if name not in raw.columns]
    if missing:
        raise ValueError(f"CSV is missing schema columns: {missing}")

    columns = []
    for j, name in enumerate(schema.names):
        cells = [cell.strip() for cell in raw[name].tolist()]
        columns.append(encode_column(schema, j, cells))
    values = np.column_stack(columns)
    return Dataset(schema, values, discrete_as_numeric=discrete_as_numeric)


def load_csv(path: str, schema: TableSchema, discrete_as_numeric: bool = DISCRETE_AS_NUMERIC) -> Dataset:
    raw = _read_raw(path)
    ds = _frame_to_dataset(raw, schema, discrete_as_numeric)
    logger.info("Loaded %d rows x %d features from %s", ds.n_rows, ds.n_features, path)
    return ds


def load_labeled_csv(
    path: str,
    schema: TableSchema,
    label_column: str,
    discrete_as_numeric: bool = DISCRETE_AS_NUMERIC,
) -> Tuple[Dataset, np.ndarray]:
    """Like load_csv, plus the binary label column (values 0/1)."""
    raw = _read_raw(path)
    if label_column not in raw.columns:
        raise ValueError(f"CSV {path} has no label column '{label_column}'.")
    labels = []
    for i, cell in enumerate(raw[label_column].tolist(), start=1):
        text = cell.strip()
        try:
            label = float(text)
        except ValueError:
            label = None
        if label not in (0.0, 1.0):
            raise ValueError(f"row {i}, column '{label_column}': label '{cell}' is not 0 or 1.")
        labels.append(int(label))
    ds = _frame_to_dataset(raw, schema, discrete_as_numeric)
    logger.info("Loaded %d labeled rows from %s (positive rate %.3f)", ds.n_rows, path, np.mean(labels))
    return ds, np.array(labels, dtype=np.int64)


def save_csv(ds: Dataset, path: str, labels: Optional[np.ndarray] = None, label_column: Optional[str] = None) -> None:
    frame = ds.to_frame()
    if labels is not None:
        frame[label_column or "y"] = np.asarray(labels, dtype=np.int64)
    # pandas writes floats with repr, so decimal text round-trips exactly.
    frame.to_csv(path, index=False, encoding="utf-8")


def write_rows_csv(ds: Dataset, rows: np.ndarray, path: str, extra: Optional[dict] = None) -> None:
    """Writes decoded rows; `extra` maps column name -> per-row values appended on the right."""
    frame = ds.to_frame(rows) if len(rows) else pd.DataFrame(columns=ds.schema.names)
    for name, column in (extra or {}).items():
        frame[name] = list(column)
    frame.to_csv(path, index=False, encoding="utf-8")
