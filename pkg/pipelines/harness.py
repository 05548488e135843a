"""
Experiment runner: test-set selection, per-individual explanation with
metrics, and the subsample-stability study.
"""

import logging
import os
import time
from dataclasses import dataclass, field
from typing import List, Optional, Set
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from config.mcce_consts import SUBSAMPLE_ALL
from data_class.experiment_params import ExperimentConfig, Method, Selection
from model.predictor import Predictor, load_predictor, train_mlp
from tabular.dataset import Dataset, Instance
from tabular.preprocess import load_labeled_csv, load_schema
from pipelines.generator import ChainModel, fit_chain, generate, generate_baseline, write_candidates_csv
from pipelines.knn_index import KnnIndex
from pipelines.metrics import IndividualRecord, MetricsReport, diversity, evaluate_counterfactual
from pipelines.postprocess import rank_valid, select_ideal, select_weighted, valid_set, write_valid_set_csv

logger = logging.getLogger(__name__)


# ==========================================
# RESULT TYPES
# ==========================================

@dataclass
class IndividualOutcome:
    """One explained individual. `counterfactuals` is best-first and empty when none was found."""
    record: IndividualRecord
    individual: Instance
    counterfactuals: List[Instance] = field(default_factory=list)
    source_row: Optional[int] = None
    diversity: float = 0.0
    # f(.) of the individual followed by each counterfactual
    scores: List[float] = field(default_factory=list)


@dataclass
class ExperimentReport:
    """
    One aggregated report row. `t_one` is seconds for one individual including
    the chain fit; `t_all` is total minutes. Outcomes and per-repetition runs
    are carried along but do not take part in equality.
    """
    method: str
    n_train: int
    repetitions: int
    metrics: dict
    t_one: float
    t_all: float
    outcomes: List[IndividualOutcome] = field(default_factory=list, compare=False, repr=False)
    runs: List["ExperimentReport"] = field(default_factory=list, compare=False, repr=False)

    @property
    def n_individuals(self) -> int:
        return len(self.outcomes)


# ==========================================
# TEST SET
# ==========================================

def select_test_rows(ds: Dataset, pred: Predictor, n_test: int) -> np.ndarray:
    """Row indices of the first n_test rows with f(x) <= c, in dataset order."""
    undesirable = np.flatnonzero(~pred.valid_mask(ds, ds.values))
    if undesirable.size < n_test:
        raise ValueError(
            f"Need {n_test} individuals with an undesirable prediction (f <= {pred.cutoff}), "
            f"{undesirable.size} available."
        )
    return undesirable[:n_test]


def select_test_set(ds: Dataset, pred: Predictor, n_test: int) -> List[Instance]:
    return [ds.row(i) for i in select_test_rows(ds, pred, n_test)]


# ==========================================
# PER-INDIVIDUAL WORK
# ==========================================

def _explain_one(
    position: int,
    x: Instance,
    method: Method,
    cfg: ExperimentConfig,
    chain: Optional[ChainModel],
    train_ds: Dataset,
    metric_idx: KnnIndex,
    pred: Predictor,
) -> IndividualOutcome:
    started = time.perf_counter()
    try:
        if method == Method.MCCE:
            cand = generate(chain, train_ds, pred, x, cfg.big_k, cfg.seed + position)
        else:
            cand = generate_baseline(train_ds, pred, x)

        if cfg.selection == Selection.WEIGHTED:
            result = select_weighted(cand, train_ds, pred, cfg.weights, metric_idx, x)
        else:
            result = select_ideal(cand, train_ds, pred)
        if cfg.n_counterfactuals > 1:
            found = rank_valid(cand, train_ds, pred, cfg.n_counterfactuals)
            if result.found and cfg.selection == Selection.WEIGHTED:
                found = [result.counterfactual] + [e for e in found if not np.array_equal(e, result.counterfactual)]
                found = found[:cfg.n_counterfactuals]
        else:
            found = [result.counterfactual] if result.found else []
        elapsed = time.perf_counter() - started

        if not result.found:
            logger.debug("Individual %d: no valid candidate among %d", position, cand.K)
            record = IndividualRecord(index=position, success=False, time_seconds=elapsed)
            return IndividualOutcome(record, x, scores=[float(pred.predict_batch(train_ds, x)[0])])

        source_row = None
        if cand.source_rows is not None:
            source_row = int(cand.source_rows[result.row_index])
        record = evaluate_counterfactual(
            metric_idx, pred, metric_idx.ds, x, result.counterfactual, index=position, time_seconds=elapsed,
        )
        return IndividualOutcome(
            record=record,
            individual=x,
            counterfactuals=found,
            source_row=source_row,
            diversity=diversity(metric_idx.ds, found),
            scores=[float(s) for s in pred.predict_batch(train_ds, np.vstack([x, *found]))],
        )
    except Exception as exc:
        # One failing individual must not abort the run.
        logger.warning("Individual %d failed: %s", position, exc)
        record = IndividualRecord(
            index=position, success=False, time_seconds=time.perf_counter() - started, error=str(exc),
        )
        return IndividualOutcome(record, x)


# ==========================================
# EXPERIMENT
# ==========================================

class Experiment:
    """
    Holds the data, the frozen predictor and the test set of one run.
    Data and predictor may be injected; otherwise they are loaded lazily
    from the paths in the config.
    """

    def __init__(
        self,
        cfg: ExperimentConfig,
        ds: Optional[Dataset] = None,
        labels: Optional[np.ndarray] = None,
        predictor: Optional[Predictor] = None,
    ):
        self.cfg = cfg
        self.ds = ds
        self.labels = labels
        self.predictor = predictor
        self._test_rows: Optional[np.ndarray] = None
        self._metric_idx: Optional[KnnIndex] = None
        self._is_loaded = False
        self._dumped: Set[Method] = set()

    def load_data(self) -> None:
        if self._is_loaded:
            return
        cfg = self.cfg
        if self.ds is None:
            if not cfg.data_path or not cfg.schema_path:
                raise ValueError("Both a data path and a schema path are required.")
            schema = load_schema(cfg.schema_path)
            self.ds, self.labels = load_labeled_csv(
                cfg.data_path, schema, cfg.label_column, cfg.discrete_as_numeric,
            )

        if self.predictor is None:
            if cfg.model_path:
                loaded = load_predictor(cfg.model_path)
                self.predictor = Predictor(loaded.scorer, cfg.cutoff)
            elif self.labels is not None:
                self.predictor = train_mlp(self.ds, self.labels, cfg.mlp, cfg.cutoff)
            else:
                raise ValueError("No model path given and no labels to train a predictor on.")

        self._metric_idx = KnnIndex(self.ds, cfg.k_neighbors)
        self._is_loaded = True

    @property
    def test_rows(self) -> np.ndarray:
        self.load_data()
        if self._test_rows is None:
            self._test_rows = select_test_rows(self.ds, self.predictor, self.cfg.n_test)
            logger.info("Selected %d test individuals", self._test_rows.size)
        return self._test_rows

    def _training_rows(self) -> np.ndarray:
        rows = np.arange(self.ds.n_rows)
        if self.cfg.hold_out_test:
            rows = np.setdiff1d(rows, self.test_rows)
        return rows

    def explain(self, train_ds: Dataset, method: Method, predictor: Optional[Predictor] = None) -> ExperimentReport:
        """
        Explains every test individual using train_ds as the generator's data.
        `predictor` replaces the experiment's predictor for this call only.
        """
        cfg = self.cfg
        method = Method(method)
        pred = predictor if predictor is not None else self.predictor
        individuals = [self.ds.row(i) for i in self.test_rows]

        chain = None
        fit_seconds = 0.0
        if method == Method.MCCE:
            started = time.perf_counter()
            chain = fit_chain(train_ds, cfg.ctree, n_jobs=cfg.n_jobs)
            fit_seconds = time.perf_counter() - started

        outcomes = Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
            delayed(_explain_one)(position, x, method, cfg, chain, train_ds, self._metric_idx, pred)
            for position, x in enumerate(tqdm(individuals, desc=f"{method.value} (N={train_ds.n_rows})", leave=False))
        )

        if (cfg.valid_set_dump or cfg.candidates_dump) and method not in self._dumped:
            self._dump_first_individual(individuals[0], method, chain, train_ds, pred)
            self._dumped.add(method)

        metrics = MetricsReport([o.record for o in outcomes]).aggregate()
        metrics.pop("time_seconds")
        per_individual = sum(o.record.time_seconds for o in outcomes)
        report = ExperimentReport(
            method=method.value,
            n_train=train_ds.n_rows,
            repetitions=1,
            metrics=metrics,
            t_one=fit_seconds + per_individual / len(outcomes),
            t_all=(fit_seconds + per_individual) / 60.0,
            outcomes=list(outcomes),
        )
        failed = sum(o.record.error is not None for o in outcomes)
        logger.info(
            "%s on %d rows: success %.2f over %d individuals (%d failed)",
            method.value, train_ds.n_rows, metrics["success"], len(outcomes), failed,
        )
        return report

    def _dump_first_individual(
        self, x: Instance, method: Method, chain: Optional[ChainModel], train_ds: Dataset, pred: Predictor,
    ) -> None:
        """Writes D_i and/or its valid subset for x, one file per method."""
        if method == Method.MCCE:
            cand = generate(chain, train_ds, pred, x, self.cfg.big_k, self.cfg.seed)
        else:
            cand = generate_baseline(train_ds, pred, x)
        if self.cfg.candidates_dump:
            path = _method_path(self.cfg.candidates_dump, method)
            write_candidates_csv(train_ds, cand, path)
            logger.info("Wrote %d candidates to %s", cand.K, path)
        if self.cfg.valid_set_dump:
            path = _method_path(self.cfg.valid_set_dump, method)
            write_valid_set_csv(valid_set(cand, train_ds, pred, self._metric_idx), path)

    def run(self, method: Optional[Method] = None) -> ExperimentReport:
        self.load_data()
        train_ds = self.ds.subset(self._training_rows())
        return self.explain(train_ds, method or self.cfg.method)

    def run_subsample(self, method: Optional[Method] = None) -> List[ExperimentReport]:
        """
        For each size, draws `repetitions` uniform subsets of the rows outside
        the test set, refits the generator on each and averages the reports.
        The predictor stays the one trained on the full data unless
        `refit_predictor` is set, in which case an MLP is trained per subset.
        """
        self.load_data()
        cfg = self.cfg
        method = Method(method or cfg.method)
        if cfg.refit_predictor and self.labels is None:
            raise ValueError("Refitting the predictor per subset needs labels.")
        pool = np.setdiff1d(np.arange(self.ds.n_rows), self.test_rows)
        sizes = cfg.subsample_sizes or [SUBSAMPLE_ALL]

        reports = []
        for requested in sizes:
            size = pool.size if requested == SUBSAMPLE_ALL else requested
            if size > pool.size:
                logger.warning("Subsample size %d exceeds the %d available rows; using all of them", size, pool.size)
                size = pool.size
            if size < cfg.ctree.min_split:
                logger.warning(
                    "Subsample size %d is below min_split=%d; trees will be single leaves", size, cfg.ctree.min_split,
                )

            runs = []
            for rep in range(cfg.repetitions):
                rng = np.random.default_rng([cfg.seed, size, rep])
                rows = np.sort(rng.choice(pool, size=size, replace=False))
                train_ds = self.ds.subset(rows)
                predictor = None
                if cfg.refit_predictor:
                    predictor = train_mlp(train_ds, self.labels[rows], cfg.mlp, cfg.cutoff)
                runs.append(self.explain(train_ds, method, predictor))
            reports.append(_mean_report(runs))
        return reports


def _method_path(path: str, method: Method) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}_{method.value}{ext}"


def _mean_report(runs: List[ExperimentReport]) -> ExperimentReport:
    # pandas skips NaN (no CE in a repetition) when averaging
    metrics = pd.DataFrame([r.metrics for r in runs]).mean().to_dict()
    return ExperimentReport(
        method=runs[0].method,
        n_train=runs[0].n_train,
        repetitions=len(runs),
        metrics={k: float(v) for k, v in metrics.items()},
        t_one=float(np.mean([r.t_one for r in runs])),
        t_all=float(np.mean([r.t_all for r in runs])),
        outcomes=runs[0].outcomes if len(runs) == 1 else [],
        runs=runs,
    )


# ==========================================
# ENTRY POINTS
# ==========================================

def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    experiment = Experiment(cfg)
    report = experiment.run()
    if cfg.output_path:
        from pipelines.report import write_reports
        write_reports([report], experiment.ds, cfg.output_path)
    return report


def run_subsample_study(cfg: ExperimentConfig) -> List[ExperimentReport]:
    experiment = Experiment(cfg)
    reports = experiment.run_subsample()
    if cfg.output_path:
        from pipelines.report import write_reports
        write_reports(reports, experiment.ds, cfg.output_path, counterfactuals=False)
    return reports
