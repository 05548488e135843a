from enum import Enum
from typing import List
from pydantic import BaseModel, ConfigDict, Field, model_validator


class FeatureKind(str, Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"
    CATEGORICAL = "categorical"
    ORDINAL = "ordinal"

    @property
    def has_levels(self) -> bool:
        return self in (FeatureKind.CATEGORICAL, FeatureKind.ORDINAL)


# ==========================================
# 1. One column
# ==========================================
class FeatureSchema(BaseModel):
    """
    Describes one column of the table.
    The JSON schema file is an array of these objects: {name, kind, levels?, fixed}.
    """
    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1, description="Column name, must match the CSV header.")
    kind: FeatureKind = Field(..., description="continuous, discrete, categorical or ordinal.")
    levels: List[str] = Field(
        default_factory=list,
        description="Ordered category labels. Required for categorical/ordinal, forbidden otherwise."
    )
    fixed: bool = Field(False, description="True if the individual cannot change this feature.")

    @model_validator(mode="after")
    def _check_levels(self):
        if self.kind.has_levels:
            if len(self.levels) < 1:
                raise ValueError(f"Feature '{self.name}' is {self.kind.value} but has no levels.")
            if len(set(self.levels)) != len(self.levels):
                raise ValueError(f"Feature '{self.name}' has duplicate levels: {self.levels}")
        elif self.levels:
            raise ValueError(f"Feature '{self.name}' is {self.kind.value} and cannot have levels.")
        return self

    @property
    def mutable(self) -> bool:
        return not self.fixed

    @property
    def is_numeric(self) -> bool:
        return not self.kind.has_levels

    @property
    def encoded_width(self) -> int:
        """Number of values this feature occupies in the normalized encoding."""
        if self.is_numeric or len(self.levels) <= 2:
            return 1
        return len(self.levels)


# ==========================================
# 2. Whole table
# ==========================================
class TableSchema(BaseModel):
    model_config = ConfigDict(frozen=True)

    features: List[FeatureSchema] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_columns(self):
        names = [f.name for f in self.features]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"Duplicate feature names in schema: {duplicates}")
        return self

    def require_mutable(self) -> None:
        if not self.mutable_columns:
            raise ValueError("Schema must contain at least one mutable feature.")

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def fixed_columns(self) -> List[int]:
        return [j for j, f in enumerate(self.features) if f.fixed]

    @property
    def mutable_columns(self) -> List[int]:
        return [j for j, f in enumerate(self.features) if f.mutable]

    def __len__(self) -> int:
        return len(self.features)

    def __getitem__(self, j: int) -> FeatureSchema:
        return self.features[j]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"Unknown feature '{name}'. Schema has: {self.names}") from None
