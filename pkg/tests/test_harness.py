import unittest
import os
import sys
import tempfile
import time
from unittest import mock
import numpy as np
import pandas as pd
from scipy.stats import ttest_rel
from click.testing import CliRunner

# Adjust path to import logic from parent directory
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.append(parent_dir)

from config.mcce_consts import METRIC_COLUMNS, SUBSAMPLE_ALL
from data_class.experiment_params import ExperimentConfig, Method, MLPConfig
from data_class.feature_schema import FeatureKind, FeatureSchema, TableSchema
from model.predictor import LogisticScorer, Predictor, train_mlp
from tabular.dataset import Dataset
from tabular.preprocess import save_csv, save_schema
from tabular.synthetic import SyntheticKind, make_synthetic
from pipelines import Experiment, run_experiment
from pipelines import harness
from pipelines.harness import ExperimentReport, select_test_set
from pipelines.report import counterfactual_rows, emit_report_csv, format_table, parse_report_csv, write_reports
from cli import cli


class ConstantScorer:
    def __init__(self, value: float):
        self.value = value

    def __call__(self, X):
        return np.full(np.atleast_2d(X).shape[0], self.value)


def _income_predictor(ds: Dataset) -> Predictor:
    """Valid exactly when normalized income (the last encoded column) exceeds 0.5."""
    weights = np.zeros(ds.encoded_width)
    weights[-1] = 6.0
    return Predictor(LogisticScorer(weights, bias=-3.0))


class TestSelectTestSet(unittest.TestCase):

    def setUp(self):
        self.ds, _ = make_synthetic(SyntheticKind.MIXED_TYPES, 100, seed=0)

    def test_constant_low_scorer_takes_first_rows(self):
        selected = select_test_set(self.ds, Predictor(ConstantScorer(0.4)), 5)
        np.testing.assert_array_equal(np.array(selected), self.ds.values[:5])

    def test_not_enough_individuals(self):
        """
        Edge Case: nobody has an undesirable prediction -> error stating the count.
        """
        with self.assertRaisesRegex(ValueError, "0 available"):
            select_test_set(self.ds, Predictor(ConstantScorer(0.6)), 5)

    def test_selected_rows_are_undesirable(self):
        pred = _income_predictor(self.ds)
        for x in select_test_set(self.ds, pred, 10):
            self.assertLessEqual(pred.predict_batch(self.ds, x)[0], 0.5)


class TestRunExperiment(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.ds, cls.labels = make_synthetic(SyntheticKind.MIXED_TYPES, 1500, seed=1)
        cls.pred = _income_predictor(cls.ds)

    def _experiment(self, **overrides) -> Experiment:
        cfg = ExperimentConfig(**{"n_test": 30, "big_k": 2000, "seed": 3, **overrides})
        return Experiment(cfg, ds=self.ds, labels=self.labels, predictor=self.pred)

    def test_mcce_success_and_no_violation(self):
        """
        Functionality: MCCE returns a valid counterfactual for everyone and never moves a fixed feature.
        """
        report = self._experiment().run()
        self.assertEqual(report.metrics["success"], 1.0)
        self.assertEqual(report.metrics["violation"], 0.0)
        self.assertEqual(report.n_individuals, 30)
        for outcome in report.outcomes:
            self.assertGreater(self.pred.predict_batch(self.ds, outcome.counterfactuals[0])[0], 0.5)

    def test_timing_accounting(self):
        report = self._experiment(n_test=5).run()
        self.assertGreaterEqual(report.t_all * 60.0, report.t_one - 1e-9)
        self.assertGreater(report.t_one, 0.0)

    def test_baseline_counterfactuals_are_training_rows(self):
        report = self._experiment(method=Method.BASELINE).run()
        for outcome in report.outcomes:
            if outcome.counterfactuals:
                np.testing.assert_array_equal(self.ds.values[outcome.source_row], outcome.counterfactuals[0])

    def test_several_counterfactuals_per_individual(self):
        report = self._experiment(n_test=5, n_counterfactuals=3).run()
        for outcome in report.outcomes:
            self.assertLessEqual(len(outcome.counterfactuals), 3)
            self.assertGreaterEqual(outcome.diversity, 0.0)

    def test_failing_individual_does_not_abort(self):
        """
        Edge Case: an error for one individual is recorded and the others still run.
        """
        real_generate = harness.generate

        def flaky(chain, ds, pred, x, K, seed):
            if seed == 3 + 1:
                raise RuntimeError("boom")
            return real_generate(chain, ds, pred, x, K, seed)

        with mock.patch.object(harness, "generate", side_effect=flaky):
            report = self._experiment(n_test=4).run()
        records = [o.record for o in report.outcomes]
        self.assertFalse(records[1].success)
        self.assertIn("boom", records[1].error)
        self.assertEqual(sum(r.success for r in records), 3)
        self.assertEqual(report.metrics["success"], 0.75)

    def test_candidate_set_dump(self):
        """
        Functionality: the first individual's K sampled rows are written with their
        predictions, fixed cells equal to the individual's.
        """
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "candidates.csv")
            experiment = self._experiment(n_test=3, big_k=500, candidates_dump=path)
            experiment.run()
            frame = pd.read_csv(os.path.join(tmp, "candidates_mcce.csv"))
            self.assertFalse(os.path.exists(path))

        self.assertEqual(len(frame), 500)
        self.assertEqual(list(frame.columns), [*self.ds.schema.names, "prediction"])
        self.assertTrue(frame["prediction"].between(0.0, 1.0).all())
        first = self.ds.decode(self.ds.row(int(experiment.test_rows[0])))
        for j in self.ds.schema.fixed_columns:
            name = self.ds.schema[j].name
            self.assertTrue((frame[name].astype(str) == str(first[name])).all(), name)

    def test_dumps_are_kept_per_method(self):
        """
        Edge Case: running both methods on one experiment writes one file per method.
        """
        with tempfile.TemporaryDirectory() as tmp:
            experiment = self._experiment(
                n_test=3, big_k=300,
                valid_set_dump=os.path.join(tmp, "valid.csv"),
                candidates_dump=os.path.join(tmp, "candidates.csv"),
            )
            experiment.run(Method.MCCE)
            experiment.run(Method.BASELINE)
            written = sorted(os.listdir(tmp))
            baseline = pd.read_csv(os.path.join(tmp, "candidates_baseline.csv"))
            mcce = pd.read_csv(os.path.join(tmp, "candidates_mcce.csv"))
        self.assertEqual(written, [
            "candidates_baseline.csv", "candidates_mcce.csv", "valid_baseline.csv", "valid_mcce.csv",
        ])
        self.assertEqual(len(mcce), 300)
        self.assertNotEqual(len(baseline), 300)

    def test_same_seed_gives_identical_files(self):
        """
        Functionality: two runs with the same seed (and different worker counts) write identical reports.
        """
        contents = []
        with tempfile.TemporaryDirectory() as tmp:
            for n_jobs in (1, 2):
                out = os.path.join(tmp, f"run{n_jobs}")
                experiment = self._experiment(n_test=10, n_jobs=n_jobs)
                write_reports([experiment.run()], self.ds, out)
                files = {}
                for name in ("report.csv", "report.txt", "counterfactuals.csv"):
                    with open(os.path.join(out, name), "rb") as f:
                        files[name] = f.read()
                contents.append(files)
        self.assertEqual(contents[0], contents[1])


class TestBaselineFailureMode(unittest.TestCase):

    def test_unmatched_fixed_value_counts_as_failure(self):
        schema = TableSchema(features=[
            FeatureSchema(name="age", kind=FeatureKind.CONTINUOUS, fixed=True),
            FeatureSchema(name="income", kind=FeatureKind.CONTINUOUS),
        ])
        rng = np.random.default_rng(0)
        ages = np.r_[99.0, rng.choice([30.0, 40.0], size=59)]
        incomes = np.r_[1.0, rng.uniform(0, 100, size=59)]
        ds = Dataset(schema, np.column_stack([ages, incomes]))
        pred = Predictor(LogisticScorer([0.0, 10.0], bias=-5.0))
        cfg = ExperimentConfig(n_test=3, method=Method.BASELINE)
        report = Experiment(cfg, ds=ds, predictor=pred).run()
        self.assertFalse(report.outcomes[0].record.success)
        self.assertLess(report.metrics["success"], 1.0)


class TestSubsampleStudy(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.ds, cls.labels = make_synthetic(SyntheticKind.MIXED_TYPES, 1200, seed=2)
        cls.pred = _income_predictor(cls.ds)

    def test_mcce_success_at_every_size(self):
        cfg = ExperimentConfig(n_test=15, big_k=1000, subsample_sizes=[100, 1000, SUBSAMPLE_ALL])
        reports = Experiment(cfg, ds=self.ds, predictor=self.pred).run_subsample()
        self.assertEqual(len(reports), 3)
        self.assertEqual([r.n_train for r in reports], [100, 1000, self.ds.n_rows - 15])
        for r in reports:
            self.assertEqual(r.metrics["success"], 1.0)
            self.assertEqual(r.repetitions, 1)

    def test_small_size_warns(self):
        cfg = ExperimentConfig(n_test=5, big_k=200, subsample_sizes=[10])
        with self.assertLogs("pipelines.harness", level="WARNING") as logs:
            Experiment(cfg, ds=self.ds, predictor=self.pred).run_subsample()
        self.assertTrue(any("min_split" in line for line in logs.output))

    def test_baseline_gower_worsens_with_less_data(self):
        """
        Functionality: over 50 repetitions, each individual's baseline Gower distance
        at 100 training rows is paired with the one on all rows; the small-data side
        is larger (one-sided paired t-test, 5% level).
        """
        cfg = ExperimentConfig(
            n_test=20, method=Method.BASELINE, subsample_sizes=[100, SUBSAMPLE_ALL], repetitions=50,
        )
        small, full = Experiment(cfg, ds=self.ds, predictor=self.pred).run_subsample()
        self.assertEqual(small.repetitions, 50)
        self.assertEqual(len(small.runs), len(full.runs))

        small_l1, full_l1 = [], []
        for small_run, full_run in zip(small.runs, full.runs):
            for s, f in zip(small_run.outcomes, full_run.outcomes):
                # the full pool contains every subset, so a match at 100 rows is a match on all rows
                if s.record.success:
                    self.assertTrue(f.record.success)
                    small_l1.append(s.record.L1)
                    full_l1.append(f.record.L1)
        self.assertGreater(len(small_l1), 10)
        self.assertGreaterEqual(np.mean(small_l1) - np.mean(full_l1), 0.0)
        self.assertLess(ttest_rel(small_l1, full_l1, alternative="greater").pvalue, 0.05)
        self.assertLessEqual(small.metrics["success"], full.metrics["success"])

    def test_refit_predictor_trains_on_each_subset(self):
        cfg = ExperimentConfig(
            n_test=5, big_k=200, subsample_sizes=[150, 300], repetitions=2,
            refit_predictor=True, mlp=MLPConfig(epochs=2),
        )
        experiment = Experiment(cfg, ds=self.ds, labels=self.labels, predictor=self.pred)
        with mock.patch.object(harness, "train_mlp", wraps=harness.train_mlp) as trainer:
            reports = experiment.run_subsample()
        self.assertEqual(trainer.call_count, 4)
        sizes = [call.args[0].n_rows for call in trainer.call_args_list]
        self.assertEqual(sizes, [150, 150, 300, 300])
        for call in trainer.call_args_list:
            train_ds, labels = call.args[0], call.args[1]
            np.testing.assert_array_equal(labels, self.labels[train_ds.row_ids])
        self.assertEqual([r.repetitions for r in reports], [2, 2])

    def test_refit_predictor_needs_labels(self):
        cfg = ExperimentConfig(n_test=5, subsample_sizes=[100], refit_predictor=True)
        with self.assertRaisesRegex(ValueError, "needs labels"):
            Experiment(cfg, ds=self.ds, predictor=self.pred).run_subsample()

    def test_fixed_predictor_is_not_retrained(self):
        cfg = ExperimentConfig(n_test=5, big_k=200, subsample_sizes=[150])
        experiment = Experiment(cfg, ds=self.ds, labels=self.labels, predictor=self.pred)
        with mock.patch.object(harness, "train_mlp") as trainer:
            experiment.run_subsample()
        trainer.assert_not_called()


class TestAtBenchmarkScale(unittest.TestCase):
    """Mixed-types data at N = 5,000 with two fixed features."""

    @classmethod
    def setUpClass(cls):
        cls.ds, cls.labels = make_synthetic(SyntheticKind.MIXED_TYPES, 5000, seed=0)
        cls.pred = train_mlp(cls.ds, cls.labels, MLPConfig())

    def test_mcce_with_trained_mlp(self):
        """
        Functionality: 100 individuals, K = 10,000 -> success exactly 1 and no
        fixed-feature violation, within a wall-clock limit.
        """
        self.assertEqual(len(self.ds.schema), 6)
        self.assertEqual(len(self.ds.schema.fixed_columns), 2)
        cfg = ExperimentConfig(n_test=100, big_k=10_000)
        started = time.perf_counter()
        report = Experiment(cfg, ds=self.ds, labels=self.labels, predictor=self.pred).run()
        elapsed = time.perf_counter() - started

        self.assertEqual(report.n_individuals, 100)
        self.assertEqual(report.metrics["success"], 1.0)
        self.assertEqual(report.metrics["violation"], 0.0)
        self.assertLess(elapsed, 300.0)

    def test_mcce_success_at_training_sizes(self):
        """
        Functionality: generator refitted on 100, 1,000 and 5,000 rows -> success 1 at every size.
        """
        ds, _ = make_synthetic(SyntheticKind.MIXED_TYPES, 5020, seed=3)
        cfg = ExperimentConfig(n_test=20, big_k=2000, subsample_sizes=[100, 1000, 5000])
        reports = Experiment(cfg, ds=ds, predictor=_income_predictor(ds)).run_subsample()
        self.assertEqual([r.n_train for r in reports], [100, 1000, 5000])
        for r in reports:
            self.assertEqual(r.metrics["success"], 1.0)
            self.assertEqual(r.metrics["violation"], 0.0)


class TestSynthetic(unittest.TestCase):

    def test_label_balance(self):
        _, labels = make_synthetic(SyntheticKind.INDEPENDENT_GAUSSIAN, 1000, seed=0)
        self.assertTrue(0.3 < labels.mean() < 0.7)

    def test_dependent_pair_correlation(self):
        ds, _ = make_synthetic(SyntheticKind.DEPENDENT_PAIR, 1000, seed=0)
        self.assertGreater(np.corrcoef(ds.values[:, 0], ds.values[:, 1])[0, 1], 0.9)

    def test_deterministic(self):
        first, first_labels = make_synthetic(SyntheticKind.MIXED_TYPES, 200, seed=9)
        second, second_labels = make_synthetic(SyntheticKind.MIXED_TYPES, 200, seed=9)
        np.testing.assert_array_equal(first.values, second.values)
        np.testing.assert_array_equal(first_labels, second_labels)

    def test_mixed_types_schema(self):
        ds, _ = make_synthetic(SyntheticKind.MIXED_TYPES, 100, seed=0)
        self.assertEqual(len(ds.schema), 6)
        self.assertEqual(len(ds.schema.fixed_columns), 2)

    def test_too_few_rows(self):
        with self.assertRaises(ValueError):
            make_synthetic(SyntheticKind.DEPENDENT_PAIR, 5, seed=0)


class TestReportFormatting(unittest.TestCase):

    def setUp(self):
        self.reports = [
            ExperimentReport("mcce", 1000, 1, {c: v for c, v in zip(METRIC_COLUMNS, [2.5, 0.1, 0.8, 0.3, 0.2, 0.0, 1.0])}, 0.25, 1.5),
            ExperimentReport("baseline", 1000, 3, {c: v for c, v in zip(METRIC_COLUMNS, [3.0, 0.333, 0.6, 0.7, 1.0, 0.0, 0.9])}, 0.01, 0.02),
        ]

    def test_round_trip(self):
        self.assertEqual(parse_report_csv(emit_report_csv(self.reports)), self.reports)

    def test_report_without_timing(self):
        text = emit_report_csv(self.reports, include_timing=False)
        self.assertNotIn("t_one", text)
        parsed = parse_report_csv(text)
        self.assertEqual(parsed[0].metrics, self.reports[0].metrics)
        self.assertTrue(np.isnan(parsed[0].t_one))

    def test_column_order(self):
        header = emit_report_csv(self.reports).splitlines()[0].split(",")
        self.assertEqual(header, ["method", "n_train", "repetitions", *METRIC_COLUMNS, "t_one", "t_all"])

    def test_text_table(self):
        table = format_table(self.reports)
        self.assertIn("mcce", table)
        self.assertIn("0.33", table)

    def test_counterfactual_rows_layout(self):
        ds, labels = make_synthetic(SyntheticKind.MIXED_TYPES, 800, seed=4)
        cfg = ExperimentConfig(n_test=3, big_k=500)
        report = Experiment(cfg, ds=ds, predictor=_income_predictor(ds)).run()
        frame = counterfactual_rows([report], ds)
        self.assertEqual(list(frame["role"][:2]), ["original", "counterfactual"])
        self.assertEqual(list(frame.columns[:3]), ["method", "individual", "role"])
        self.assertTrue((frame["method"] == "mcce").all())


class TestEndToEnd(unittest.TestCase):

    def test_run_experiment_from_files(self):
        ds, labels = make_synthetic(SyntheticKind.MIXED_TYPES, 600, seed=5)
        with tempfile.TemporaryDirectory() as tmp:
            data_path = os.path.join(tmp, "data.csv")
            schema_path = os.path.join(tmp, "schema.json")
            save_csv(ds, data_path, labels, "y")
            save_schema(ds.schema, schema_path)
            out = os.path.join(tmp, "out")
            cfg = ExperimentConfig(
                data_path=data_path, schema_path=schema_path, mlp=MLPConfig(epochs=20),
                n_test=5, big_k=300, output_path=out,
            )
            report = run_experiment(cfg)
            self.assertEqual(report.n_individuals, 5)
            for name in ("report.csv", "report.txt", "timing.csv", "counterfactuals.csv"):
                self.assertTrue(os.path.exists(os.path.join(out, name)), name)

    def test_cli_synth_and_bench(self):
        runner = CliRunner()
        with tempfile.TemporaryDirectory() as tmp:
            data_dir = os.path.join(tmp, "data")
            result = runner.invoke(cli, ["synth", "--kind", "mixed-types", "--n", "500", "--out", data_dir])
            self.assertEqual(result.exit_code, 0, result.output)

            out = os.path.join(tmp, "out")
            result = runner.invoke(cli, [
                "bench", "--data", os.path.join(data_dir, "data.csv"), "--schema", os.path.join(data_dir, "schema.json"),
                "--n-test", "3", "--big-k", "200", "--method", "all", "--out", out,
            ])
            self.assertEqual(result.exit_code, 0, result.output)
            with open(os.path.join(out, "report.csv"), encoding="utf-8") as f:
                self.assertEqual(len(f.read().strip().splitlines()), 3)

    def test_cli_fit_then_explain_with_saved_model(self):
        runner = CliRunner()
        with tempfile.TemporaryDirectory() as tmp:
            data_dir = os.path.join(tmp, "data")
            runner.invoke(cli, ["synth", "--n", "400", "--seed", "1", "--out", data_dir])
            data = ["--data", os.path.join(data_dir, "data.csv"), "--schema", os.path.join(data_dir, "schema.json")]
            model_path = os.path.join(tmp, "model.json")
            trees_path = os.path.join(tmp, "trees.json")

            result = runner.invoke(cli, ["fit", *data, "--epochs", "10", "--out", model_path, "--trees-out", trees_path])
            self.assertEqual(result.exit_code, 0, result.output)
            self.assertTrue(os.path.exists(trees_path))

            result = runner.invoke(cli, ["explain", *data, "--model", model_path, "--n-test", "2", "--big-k", "200"])
            self.assertEqual(result.exit_code, 0, result.output)
            self.assertIn("individual 0", result.output)

    def test_cli_dump_and_refit_flags(self):
        runner = CliRunner()
        with tempfile.TemporaryDirectory() as tmp:
            data_dir = os.path.join(tmp, "data")
            runner.invoke(cli, ["synth", "--n", "400", "--seed", "2", "--out", data_dir])
            data = ["--data", os.path.join(data_dir, "data.csv"), "--schema", os.path.join(data_dir, "schema.json")]

            result = runner.invoke(cli, [
                "bench", *data, "--n-test", "2", "--big-k", "150", "--method", "all",
                "--candidates-dump", os.path.join(tmp, "cand.csv"), "--valid-set-dump", os.path.join(tmp, "valid.csv"),
            ])
            self.assertEqual(result.exit_code, 0, result.output)
            for name in ("cand_mcce.csv", "cand_baseline.csv", "valid_mcce.csv", "valid_baseline.csv"):
                self.assertTrue(os.path.exists(os.path.join(tmp, name)), name)
            self.assertEqual(len(pd.read_csv(os.path.join(tmp, "cand_mcce.csv"))), 150)

            result = runner.invoke(cli, [
                "subsample", *data, "--n-test", "2", "--big-k", "100", "--sizes", "200", "--refit-predictor",
            ])
            self.assertEqual(result.exit_code, 0, result.output)

    def test_cli_reports_missing_file(self):
        result = CliRunner().invoke(cli, ["bench", "--data", "missing.csv", "--schema", "missing.json"])
        self.assertNotEqual(result.exit_code, 0)
        self.assertIn("not found", result.output)


if __name__ == "__main__":
    unittest.main()
