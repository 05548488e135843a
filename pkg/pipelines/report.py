"""
Report formatting. report.csv carries no wall-clock columns so reruns with
the same seed produce identical files; timing goes to timing.csv.
"""

import io
import logging
import os
from typing import List
import numpy as np
import pandas as pd

from config.mcce_consts import METRIC_COLUMNS, TIMING_COLUMNS
from tabular.dataset import Dataset
from pipelines.harness import ExperimentReport

logger = logging.getLogger(__name__)

KEY_COLUMNS = ["method", "n_train", "repetitions"]


def report_frame(reports: List[ExperimentReport], include_timing: bool = True) -> pd.DataFrame:
    records = []
    for r in reports:
        row = {"method": r.method, "n_train": r.n_train, "repetitions": r.repetitions}
        row.update({column: r.metrics.get(column, float("nan")) for column in METRIC_COLUMNS})
        if include_timing:
            row["t_one"] = r.t_one
            row["t_all"] = r.t_all
        records.append(row)
    columns = KEY_COLUMNS + METRIC_COLUMNS + (TIMING_COLUMNS if include_timing else [])
    return pd.DataFrame(records, columns=columns)


def emit_report_csv(reports: List[ExperimentReport], include_timing: bool = True) -> str:
    return report_frame(reports, include_timing).to_csv(index=False, lineterminator="\n")


def parse_report_csv(text: str) -> List[ExperimentReport]:
    """Inverse of emit_report_csv. Missing timing columns come back as NaN."""
    frame = pd.read_csv(io.StringIO(text), float_precision="round_trip")
    missing = [c for c in KEY_COLUMNS + METRIC_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"Report is missing columns: {missing}")
    reports = []
    for _, row in frame.iterrows():
        reports.append(ExperimentReport(
            method=str(row["method"]),
            n_train=int(row["n_train"]),
            repetitions=int(row["repetitions"]),
            metrics={column: float(row[column]) for column in METRIC_COLUMNS},
            t_one=float(row["t_one"]) if "t_one" in frame.columns else float("nan"),
            t_all=float(row["t_all"]) if "t_all" in frame.columns else float("nan"),
        ))
    return reports


def format_table(reports: List[ExperimentReport], include_timing: bool = True) -> str:
    """Aligned text table, two decimals."""
    frame = report_frame(reports, include_timing)
    return frame.to_string(index=False, float_format=lambda v: f"{v:.2f}")


def counterfactual_rows(reports: List[ExperimentReport], ds: Dataset) -> pd.DataFrame:
    """
    Each individual's original row followed by its counterfactual rows,
    decoded, with the method and the predicted probability.
    """
    blocks = []
    for r in reports:
        for outcome in r.outcomes:
            rows = np.vstack([outcome.individual, *outcome.counterfactuals])
            frame = ds.to_frame(rows)
            frame.insert(0, "role", ["original"] + ["counterfactual"] * len(outcome.counterfactuals))
            frame.insert(0, "individual", outcome.record.index)
            frame.insert(0, "method", r.method)
            frame["prediction"] = outcome.scores or [float("nan")] * rows.shape[0]
            frame["diversity"] = outcome.diversity
            blocks.append(frame)
    if not blocks:
        return pd.DataFrame(columns=["method", "individual", "role", *ds.schema.names, "prediction", "diversity"])
    return pd.concat(blocks, ignore_index=True)


def write_reports(reports: List[ExperimentReport], ds: Dataset, out_dir: str, counterfactuals: bool = True) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.csv"), "w", encoding="utf-8") as f:
        f.write(emit_report_csv(reports, include_timing=False))
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as f:
        f.write(format_table(reports, include_timing=False) + "\n")

    timing = report_frame(reports)[["method", "n_train", *TIMING_COLUMNS]]
    timing.to_csv(os.path.join(out_dir, "timing.csv"), index=False, lineterminator="\n")

    if counterfactuals:
        counterfactual_rows(reports, ds).to_csv(
            os.path.join(out_dir, "counterfactuals.csv"), index=False, lineterminator="\n",
        )
    logger.info("Wrote %d report rows to %s", len(reports), out_dir)
