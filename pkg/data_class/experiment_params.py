from enum import Enum
from typing import List, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from config.mcce_consts import (
    BATCH_SIZE, BIG_K, CTREE_ALPHA, CTREE_MAX_DEPTH, CTREE_MIN_BUCKET, CTREE_MIN_SPLIT,
    CUTOFF, DISCRETE_AS_NUMERIC, EPOCHS, HIDDEN_SIZES, K_NEIGHBORS, LABEL_COLUMN,
    LEARNING_RATE, N_TEST, SUBSAMPLE_ALL, WEIGHT_SUM_TOLERANCE,
)


# ==========================================
# 1. Building Block: PREDICTOR TRAINING
# ==========================================
class MLPConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    hidden_sizes: Tuple[int, ...] = Field(HIDDEN_SIZES, min_length=1, description="Widths of the hidden layers.")
    learning_rate: float = Field(LEARNING_RATE, gt=0, description="SGD step size.")
    epochs: int = Field(EPOCHS, gt=0, description="Passes over the training data.")
    batch_size: int = Field(BATCH_SIZE, gt=0, description="Rows per SGD step.")
    seed: int = Field(0, description="Seed for weight init and shuffling.")

    @field_validator("hidden_sizes")
    @classmethod
    def _positive_widths(cls, v):
        if any(w <= 0 for w in v):
            raise ValueError(f"Hidden layer widths must be positive, got {v}")
        return v


# ==========================================
# 2. Building Block: CONDITIONAL INFERENCE TREES
# ==========================================
class CTreeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(CTREE_ALPHA, gt=0, lt=1, description="Significance level for splitting.")
    min_split: int = Field(CTREE_MIN_SPLIT, ge=2, description="Minimum node size to attempt a split.")
    min_bucket: int = Field(CTREE_MIN_BUCKET, ge=1, description="Minimum size of each child.")
    max_depth: int = Field(CTREE_MAX_DEPTH, ge=0, description="Depth cap (root has depth 0).")

    @model_validator(mode="after")
    def _bucket_fits_split(self):
        if 2 * self.min_bucket > self.min_split:
            raise ValueError(
                f"min_split ({self.min_split}) must be at least twice min_bucket ({self.min_bucket})."
            )
        return self


# ==========================================
# 3. Building Block: WEIGHTED POST-PROCESSING
# ==========================================
class FilterWeights(BaseModel):
    """
    Weights of the weighted-sum selection, in the order
    (gower, sparsity, feasibility, yNN, redundancy). They must sum to 1.
    """
    model_config = ConfigDict(frozen=True)

    gower: float = Field(0.2, ge=0)
    sparsity: float = Field(0.2, ge=0)
    feasibility: float = Field(0.2, ge=0)
    ynn: float = Field(0.2, ge=0)
    redundancy: float = Field(0.2, ge=0)

    @model_validator(mode="after")
    def _sums_to_one(self):
        total = sum(self.as_vector())
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f"Filter weights must sum to 1, got {total}")
        return self

    def as_vector(self) -> List[float]:
        return [self.gower, self.sparsity, self.feasibility, self.ynn, self.redundancy]


# ==========================================
# 4. FINAL MODEL: one experiment run
# ==========================================
class Method(str, Enum):
    MCCE = "mcce"
    BASELINE = "baseline"


class Selection(str, Enum):
    IDEAL = "ideal"
    WEIGHTED = "weighted"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    data_path: Optional[str] = Field(None, description="CSV with feature columns plus the label column.")
    schema_path: Optional[str] = Field(None, description="JSON schema file.")
    model_path: Optional[str] = Field(None, description="Saved predictor JSON; trained from `mlp` when absent.")
    label_column: str = Field(LABEL_COLUMN)
    mlp: MLPConfig = Field(default_factory=MLPConfig)
    ctree: CTreeConfig = Field(default_factory=CTreeConfig)
    n_test: int = Field(N_TEST, ge=1)
    big_k: int = Field(BIG_K, ge=1, description="Rows sampled per individual (K).")
    k_neighbors: int = Field(K_NEIGHBORS, ge=1)
    cutoff: float = Field(CUTOFF, gt=0, lt=1)
    method: Method = Field(Method.MCCE)
    selection: Selection = Field(Selection.IDEAL, description="Lexicographic filtration or weighted sum.")
    weights: FilterWeights = Field(default_factory=FilterWeights)
    n_counterfactuals: int = Field(1, ge=1, description="Counterfactuals returned per individual.")
    seed: int = Field(0)
    subsample_sizes: Optional[List[int]] = Field(None, description="Training sizes for the subsample study (-1 = all rows).")
    repetitions: int = Field(1, ge=1)
    hold_out_test: bool = Field(False, description="Remove test individuals from the generator's training data.")
    refit_predictor: bool = Field(False, description="Subsample study: retrain the MLP on each subset instead of keeping the full-data predictor.")
    discrete_as_numeric: bool = Field(DISCRETE_AS_NUMERIC)
    n_jobs: int = Field(1, description="joblib workers over individuals (-1 = all cores).")
    output_path: Optional[str] = Field(None, description="Directory for reports.")
    valid_set_dump: Optional[str] = Field(None, description="CSV path for the first individual's valid set.")
    candidates_dump: Optional[str] = Field(None, description="CSV path for the first individual's full candidate set.")

    @field_validator("subsample_sizes")
    @classmethod
    def _positive_sizes(cls, v):
        if v is not None and any(s < 1 and s != SUBSAMPLE_ALL for s in v):
            raise ValueError(f"Subsample sizes must be positive (or {SUBSAMPLE_ALL} for all rows), got {v}")
        return v
