"""
Synthetic labeled datasets with documented generative processes, used for
self-contained benchmark runs and tests.

independent-gaussian
    x0..x3 i.i.d. N(0, 1); x0 is fixed. y ~ Bernoulli(sigmoid(0.5 x0 + x1 - x2 + 0.5 x3)).
dependent-pair
    a ~ N(0, 1), b = 2 a + N(0, 0.05^2); both mutable.
    y ~ Bernoulli(sigmoid(a + b)).
mixed-types (6 features, 2 fixed)
    age        continuous, fixed, integer-valued in [20, 70]
    sex        categorical, fixed, {female, male}
    education  ordinal {primary, secondary, bachelor, master}, more likely high for older rows
    job        categorical {service, technical, management}, driven by education
    loans      discrete, Poisson with mean growing with age
    income     continuous, driven by education, job and age, plus noise
    y ~ Bernoulli(sigmoid((income - 45) / 8 - 0.4 loans + 0.3 education_rank - 0.5))
"""

from enum import Enum
from typing import Tuple
import numpy as np
from scipy.special import expit

from data_class.feature_schema import FeatureKind, FeatureSchema, TableSchema
from tabular.dataset import Dataset

DEPENDENT_PAIR_SLOPE = 2.0
DEPENDENT_PAIR_NOISE = 0.05


class SyntheticKind(str, Enum):
    INDEPENDENT_GAUSSIAN = "independent-gaussian"
    DEPENDENT_PAIR = "dependent-pair"
    MIXED_TYPES = "mixed-types"


def _independent_gaussian(n: int, rng: np.random.Generator) -> Tuple[TableSchema, np.ndarray, np.ndarray]:
    schema = TableSchema(features=[
        FeatureSchema(name=f"x{j}", kind=FeatureKind.CONTINUOUS, fixed=(j == 0)) for j in range(4)
    ])
    values = rng.normal(size=(n, 4))
    logits = values @ np.array([0.5, 1.0, -1.0, 0.5])
    labels = (rng.random(n) < expit(logits)).astype(np.int64)
    return schema, values, labels


def _dependent_pair(n: int, rng: np.random.Generator) -> Tuple[TableSchema, np.ndarray, np.ndarray]:
    schema = TableSchema(features=[
        FeatureSchema(name="a", kind=FeatureKind.CONTINUOUS),
        FeatureSchema(name="b", kind=FeatureKind.CONTINUOUS),
    ])
    a = rng.normal(size=n)
    b = DEPENDENT_PAIR_SLOPE * a + rng.normal(scale=DEPENDENT_PAIR_NOISE, size=n)
    labels = (rng.random(n) < expit(a + b)).astype(np.int64)
    return schema, np.column_stack([a, b]), labels


def _mixed_types(n: int, rng: np.random.Generator) -> Tuple[TableSchema, np.ndarray, np.ndarray]:
    education_levels = ["primary", "secondary", "bachelor", "master"]
    job_levels = ["service", "technical", "management"]
    schema = TableSchema(features=[
        FeatureSchema(name="age", kind=FeatureKind.CONTINUOUS, fixed=True),
        FeatureSchema(name="sex", kind=FeatureKind.CATEGORICAL, levels=["female", "male"], fixed=True),
        FeatureSchema(name="education", kind=FeatureKind.ORDINAL, levels=education_levels),
        FeatureSchema(name="job", kind=FeatureKind.CATEGORICAL, levels=job_levels),
        FeatureSchema(name="loans", kind=FeatureKind.DISCRETE),
        FeatureSchema(name="income", kind=FeatureKind.CONTINUOUS),
    ])

    age = rng.integers(20, 71, size=n).astype(np.float64)
    sex = rng.integers(0, 2, size=n).astype(np.float64)

    # education: older rows shift towards higher levels
    education_latent = (age - 20) / 50 + rng.normal(scale=0.6, size=n)
    education = np.digitize(education_latent, [0.0, 0.5, 1.0]).astype(np.float64)

    job_latent = education + rng.normal(scale=0.8, size=n)
    job = np.digitize(job_latent, [1.0, 2.2]).astype(np.float64)

    loans = rng.poisson(0.5 + (age - 20) / 25).astype(np.float64)

    income = 25 + 6 * education + 5 * job + 0.2 * (age - 20) + rng.normal(scale=4.0, size=n)
    income = np.round(income, 2)

    logits = (income - 45) / 8 - 0.4 * loans + 0.3 * education - 0.5
    labels = (rng.random(n) < expit(logits)).astype(np.int64)
    values = np.column_stack([age, sex, education, job, loans, income])
    return schema, values, labels


_GENERATORS = {
    SyntheticKind.INDEPENDENT_GAUSSIAN: _independent_gaussian,
    SyntheticKind.DEPENDENT_PAIR: _dependent_pair,
    SyntheticKind.MIXED_TYPES: _mixed_types,
}


def make_synthetic(kind: SyntheticKind, n: int, seed: int) -> Tuple[Dataset, np.ndarray]:
    """Deterministic given seed. Returns (dataset, binary labels)."""
    if n < 10:
        raise ValueError(f"Synthetic datasets need at least 10 rows, got {n}")
    rng = np.random.default_rng(seed)
    schema, values, labels = _GENERATORS[SyntheticKind(kind)](n, rng)
    return Dataset(schema, values), labels
