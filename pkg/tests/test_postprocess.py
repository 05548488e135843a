import unittest
import os
import sys
import tempfile
import numpy as np
import pandas as pd

# Adjust path to import logic from parent directory
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.append(parent_dir)

from data_class.experiment_params import FilterWeights
from data_class.feature_schema import FeatureKind, FeatureSchema, TableSchema
from model.predictor import LogisticScorer, Predictor
from tabular.dataset import Dataset
from tabular.synthetic import SyntheticKind, make_synthetic
from pipelines.generator import CandidateSet, fit_chain, generate
from pipelines.knn_index import KnnIndex
from pipelines.metrics import feasibility, gower, redundancy, sparsity, ynn
from pipelines.postprocess import (
    rank_valid, select_ideal, select_weighted, valid_set, write_valid_set_csv,
)


class FixedScores:
    """Scorer returning preset scores in row order (for hand-built candidate sets)."""

    def __init__(self, scores):
        self.scores = np.asarray(scores, dtype=np.float64)

    def __call__(self, X):
        return self.scores[:np.atleast_2d(X).shape[0]]


def _small_dataset() -> Dataset:
    schema = TableSchema(features=[
        FeatureSchema(name="age", kind=FeatureKind.CONTINUOUS, fixed=True),
        FeatureSchema(name="loans", kind=FeatureKind.DISCRETE),
        FeatureSchema(name="job", kind=FeatureKind.CATEGORICAL, levels=["a", "b", "c"]),
        FeatureSchema(name="income", kind=FeatureKind.CONTINUOUS),
    ])
    rng = np.random.default_rng(0)
    values = np.column_stack([
        np.full(40, 40.0),
        rng.integers(0, 4, size=40),
        rng.integers(0, 3, size=40),
        np.round(rng.uniform(0, 100, size=40), 1),
    ]).astype(np.float64)
    values[0, 0] = 20.0  # give age a non-zero range
    return Dataset(schema, values)


def _random_candidate_set(rng: np.random.Generator, ds: Dataset, x: np.ndarray, K: int) -> CandidateSet:
    """Rows sharing x's fixed cell; each mutable cell copied from x or drawn from the training column."""
    rows = np.tile(x, (K, 1))
    for j in ds.schema.mutable_columns:
        change = rng.random(K) < 0.5
        rows[change, j] = rng.choice(ds.values[:, j], size=int(change.sum()))
    predictions = rng.random(K)
    return CandidateSet(individual=x, rows=rows, predictions=predictions)


def _brute_force_ideal(cand: CandidateSet, ds: Dataset, cutoff: float):
    """Three passes: keep valid rows, then minimal sparsity, then minimal Gower; first index wins."""
    valid = [i for i in range(cand.K) if cand.predictions[i] > cutoff]
    if not valid:
        return None
    best_sparsity = min(sparsity(cand.individual, cand.rows[i]) for i in valid)
    sparsest = [i for i in valid if sparsity(cand.individual, cand.rows[i]) == best_sparsity]
    best_gower = min(gower(ds, cand.individual, cand.rows[i]) for i in sparsest)
    return [i for i in sparsest if gower(ds, cand.individual, cand.rows[i]) == best_gower][0]


class TestSelectIdeal(unittest.TestCase):

    def setUp(self):
        self.ds = _small_dataset()
        self.pred = Predictor(LogisticScorer(np.zeros(self.ds.encoded_width)))
        self.x = self.ds.row(1)

    def test_all_invalid(self):
        """
        Edge Case: no valid row -> no counterfactual, n_valid = 0.
        """
        cand = CandidateSet(self.x, np.tile(self.x, (4, 1)), np.full(4, 0.2))
        result = select_ideal(cand, self.ds, self.pred)
        self.assertFalse(result.found)
        self.assertEqual(result.n_valid, 0)

    def test_sparsity_then_gower(self):
        """
        Functionality: sparsities {3, 2, 2}, Gower {., 0.4-ish, 0.1-ish} -> the sparsity-2, low-Gower row.
        """
        x = np.array([40.0, 0.0, 0.0, 50.0])
        rows = np.array([
            [40.0, 1.0, 1.0, 60.0],   # three changes
            [40.0, 3.0, 2.0, 50.0],   # two changes, far
            [40.0, 0.0, 1.0, 55.0],   # two changes, near
        ])
        cand = CandidateSet(x, rows, np.array([0.9, 0.8, 0.7]))
        result = select_ideal(cand, self.ds, self.pred)
        self.assertEqual(result.row_index, 2)
        np.testing.assert_array_equal(result.counterfactual, rows[2])
        self.assertEqual(result.n_valid, 3)

    def test_single_valid_row(self):
        rows = np.array([[40.0, 3.0, 2.0, 99.0], [40.0, 0.0, 0.0, 50.0]])
        cand = CandidateSet(self.x, rows, np.array([0.9, 0.1]))
        self.assertEqual(select_ideal(cand, self.ds, self.pred).row_index, 0)

    def test_matches_brute_force_filtration(self):
        """
        Functionality: equals the brute-force three-pass filter on 200 random sets, ties included.
        """
        rng = np.random.default_rng(42)
        for case in range(200):
            x = self.ds.row(int(rng.integers(self.ds.n_rows)))
            cand = _random_candidate_set(rng, self.ds, x, int(rng.integers(1, 201)))
            result = select_ideal(cand, self.ds, self.pred)
            expected = _brute_force_ideal(cand, self.ds, self.pred.cutoff)
            self.assertEqual(result.row_index, expected, f"case {case}")
            if expected is not None:
                self.assertGreater(cand.predictions[result.row_index], self.pred.cutoff)


class TestSelectWeighted(unittest.TestCase):

    def setUp(self):
        self.ds = _small_dataset()
        self.idx = KnnIndex(self.ds, k=5)
        self.pred = Predictor(LogisticScorer(np.r_[0.0, 1.5, 0.0, -1.0, 0.5, 2.0], bias=-1.0))

    def _valid_candidates(self, rng, x, K):
        cand = _random_candidate_set(rng, self.ds, x, K)
        predictions = self.pred.predict_batch(self.ds, cand.rows)
        return CandidateSet(x, cand.rows, predictions)

    def test_pure_gower_weights(self):
        rng = np.random.default_rng(3)
        x = self.ds.row(2)
        cand = self._valid_candidates(rng, x, 60)
        w = FilterWeights(gower=1.0, sparsity=0.0, feasibility=0.0, ynn=0.0, redundancy=0.0)
        result = select_weighted(cand, self.ds, self.pred, w, self.idx, x)
        valid = np.flatnonzero(cand.predictions > self.pred.cutoff)
        distances = [gower(self.ds, x, cand.rows[i]) for i in valid]
        self.assertEqual(result.row_index, valid[int(np.argmin(distances))])

    def test_pure_sparsity_weights(self):
        rng = np.random.default_rng(4)
        x = self.ds.row(3)
        cand = self._valid_candidates(rng, x, 60)
        w = FilterWeights(gower=0.0, sparsity=1.0, feasibility=0.0, ynn=0.0, redundancy=0.0)
        result = select_weighted(cand, self.ds, self.pred, w, self.idx, x)
        valid = np.flatnonzero(cand.predictions > self.pred.cutoff)
        self.assertEqual(sparsity(x, result.counterfactual), min(sparsity(x, cand.rows[i]) for i in valid))

    def test_matches_exhaustive_scoring(self):
        rng = np.random.default_rng(5)
        for case in range(20):
            x = self.ds.row(int(rng.integers(self.ds.n_rows)))
            cand = self._valid_candidates(rng, x, 10)
            raw = rng.random(5)
            raw /= raw.sum()
            w = FilterWeights(gower=raw[0], sparsity=raw[1], feasibility=raw[2], ynn=raw[3], redundancy=1.0 - raw[:4].sum())
            result = select_weighted(cand, self.ds, self.pred, w, self.idx, x)

            best, best_score = None, np.inf
            for i in range(cand.K):
                if cand.predictions[i] <= self.pred.cutoff:
                    continue
                e = cand.rows[i]
                score = (
                    w.gower * gower(self.ds, x, e) + w.sparsity * sparsity(x, e)
                    + w.feasibility * feasibility(self.idx, self.ds, e) - w.ynn * ynn(self.idx, self.pred, e)
                    + w.redundancy * redundancy(self.pred, self.ds, x, e)
                )
                if score < best_score - 1e-12:
                    best, best_score = i, score
            self.assertEqual(result.row_index, best, f"case {case}")

    def test_weights_must_sum_to_one(self):
        with self.assertRaises(ValueError):
            FilterWeights(gower=0.5, sparsity=0.0, feasibility=0.0, ynn=0.0, redundancy=0.0)


class TestValidSet(unittest.TestCase):

    def setUp(self):
        self.ds = _small_dataset()
        self.idx = KnnIndex(self.ds, k=3)
        self.x = self.ds.row(4)

    def test_empty(self):
        pred = Predictor(FixedScores([0.1, 0.2]))
        cand = CandidateSet(self.x, self.ds.values[:2], np.array([0.1, 0.2]))
        self.assertEqual(valid_set(cand, self.ds, pred, self.idx), [])

    def test_one_valid_row_with_its_metrics(self):
        pred = Predictor(FixedScores([0.1, 0.9]))
        rows = self.ds.values[5:7]
        cand = CandidateSet(self.x, rows, np.array([0.1, 0.9]))
        entries = valid_set(cand, self.ds, pred, self.idx)
        self.assertEqual(len(entries), 1)
        entry = entries[0]
        self.assertEqual(entry.row_id, 1)
        self.assertEqual(entry.sparsity, sparsity(self.x, rows[1]))
        self.assertAlmostEqual(entry.gower, gower(self.ds, self.x, rows[1]), places=12)
        self.assertAlmostEqual(entry.feasibility, feasibility(self.idx, self.ds, rows[1]), places=12)

    def test_csv_dump(self):
        pred = Predictor(FixedScores([0.9, 0.9, 0.9]))
        cand = CandidateSet(self.x, self.ds.values[:3], np.array([0.9, 0.9, 0.9]))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "valid.csv")
            write_valid_set_csv(valid_set(cand, self.ds, pred, self.idx), path)
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ["row_id", "sparsity", "gower", "feasibility"])
        self.assertEqual(len(frame), 3)


class TestRankingAndMonotonicity(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.ds, labels = make_synthetic(SyntheticKind.MIXED_TYPES, 2000, seed=11)
        # valid exactly when normalized income exceeds 0.5
        weights = np.zeros(cls.ds.encoded_width)
        weights[-1] = 6.0
        cls.pred = Predictor(LogisticScorer(weights, bias=-3.0))
        cls.chain = fit_chain(cls.ds)

    def test_rank_valid_order(self):
        x = self.ds.row(0)
        cand = generate(self.chain, self.ds, self.pred, x, 2000, seed=0)
        ranked = rank_valid(cand, self.ds, self.pred, 5)
        best = select_ideal(cand, self.ds, self.pred)
        if best.found:
            np.testing.assert_array_equal(ranked[0], best.counterfactual)
        keys = [(sparsity(x, e), gower(self.ds, x, e)) for e in ranked]
        self.assertEqual(keys, sorted(keys))

    def test_key_never_worsens_as_k_grows(self):
        """
        Functionality: nested sets K = 100 within 1,000 within 10,000 -> the selected
        (sparsity, Gower) key is non-increasing, on 20 individuals.
        """
        for i in range(20):
            x = self.ds.row(i)
            full = generate(self.chain, self.ds, self.pred, x, 10_000, seed=i)
            keys = []
            for K in (100, 1000, 10_000):
                result = select_ideal(full.head(K), self.ds, self.pred)
                if result.found:
                    keys.append((sparsity(x, result.counterfactual), gower(self.ds, x, result.counterfactual)))
                else:
                    keys.append((np.inf, np.inf))
            self.assertLessEqual(keys[1], keys[0])
            self.assertLessEqual(keys[2], keys[1])


if __name__ == "__main__":
    unittest.main()
