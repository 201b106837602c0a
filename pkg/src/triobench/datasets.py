"""Tabular datasets with role metadata, protected-attribute binarization and splits.

A dataset is a pandas frame plus a schema: which column is the prediction
target, which columns jointly act as quasi-identifiers, and which columns are
protected attributes (a column may be both). All operations return new values;
nothing mutates a dataset in place.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

# A column counts as categorical when non-numeric or when it has few distinct
# values; overridable per dataset config.
CATEGORICAL_DISTINCT_MAX = 20

# Tokens treated as missing on ingestion, in addition to pandas defaults.
NA_TOKENS = ("", "?", "NA", "N/A", "null")


class ConfigError(ValueError):
    """Schema config and data file disagree."""


class PredicateNotTotalError(ValueError):
    """A binarization predicate cannot classify every observed value."""


@dataclass(frozen=True)
class ProtectedBinarization:
    """Rule mapping a protected attribute onto {privileged=1, unprivileged=0}.

    Either ``privileged_values`` (membership test for categorical attributes)
    or ``threshold`` + ``direction`` (comparison for numeric attributes) must
    be given, never both.
    """

    attribute: str
    privileged_values: tuple = None
    threshold: float = None
    direction: str = ">="

    def __post_init__(self):
        if (self.privileged_values is None) == (self.threshold is None):
            raise PredicateNotTotalError(
                f"{self.attribute}: give exactly one of privileged_values or threshold"
            )
        if self.threshold is not None and self.direction not in (">=", ">", "<=", "<"):
            raise PredicateNotTotalError(
                f"{self.attribute}: unknown threshold direction {self.direction!r}"
            )


@dataclass(frozen=True)
class SchemaConfig:
    """Per-dataset schema description, usually loaded from a YAML file."""

    name: str
    path: Path
    target: str
    quasi_identifiers: tuple
    protected: tuple  # of ProtectedBinarization
    target_positive: tuple = ()
    categorical_overrides: tuple = ()
    na_values: tuple = ()
    protected_eval: str | None = None


def load_schema_config(path) -> SchemaConfig:
    """Parse a YAML schema config; relative data paths resolve next to the config."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    for key in ("path", "target", "quasi_identifiers", "protected"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required key {key!r}")
    protected = []
    for entry in raw["protected"]:
        protected.append(
            ProtectedBinarization(
                attribute=entry["attribute"],
                privileged_values=(
                    tuple(entry["privileged_values"])
                    if "privileged_values" in entry
                    else None
                ),
                threshold=entry.get("threshold"),
                direction=entry.get("direction", ">="),
            )
        )
    data_path = Path(raw["path"])
    if not data_path.is_absolute():
        data_path = path.parent / data_path
    positive = raw.get("target_positive", ())
    if positive != () and not isinstance(positive, (list, tuple)):
        positive = (positive,)
    return SchemaConfig(
        name=raw.get("name", path.stem),
        path=data_path,
        target=raw["target"],
        quasi_identifiers=tuple(raw["quasi_identifiers"]),
        protected=tuple(protected),
        target_positive=tuple(positive),
        categorical_overrides=tuple(raw.get("categorical_overrides", ())),
        na_values=tuple(raw.get("na_values", ())),
        protected_eval=raw.get("protected_eval"),
    )


def infer_kinds(df: pd.DataFrame, categorical_overrides=()) -> dict:
    """Classify each column as numeric or categorical.

    Numeric dtype with more than CATEGORICAL_DISTINCT_MAX distinct values ->
    numeric; everything else categorical. Overrides force categorical.
    """
    kinds = {}
    for col in df.columns:
        if col in categorical_overrides:
            kinds[col] = CATEGORICAL
        elif (
            pd.api.types.is_numeric_dtype(df[col])
            and df[col].nunique() > CATEGORICAL_DISTINCT_MAX
        ):
            kinds[col] = NUMERIC
        else:
            kinds[col] = CATEGORICAL
    return kinds


@dataclass(frozen=True)
class Dataset:
    """Immutable table plus schema roles. The frame always has a RangeIndex."""

    name: str
    df: pd.DataFrame
    target: str
    quasi_identifiers: tuple = ()
    protected: tuple = ()
    kinds: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = list(self.df.columns)
        if self.target not in cols:
            raise ConfigError(f"target column {self.target!r} not in data")
        for role, names in (("quasi_identifier", self.quasi_identifiers),
                            ("protected", self.protected)):
            for nm in names:
                if nm not in cols:
                    raise ConfigError(f"{role} column {nm!r} not in data")
        if set(self.kinds) != set(cols):
            raise ConfigError("kinds must cover exactly the data columns")
        if not isinstance(self.df.index, pd.RangeIndex) or self.df.index.start != 0:
            raise ConfigError("dataset frames must carry a fresh RangeIndex")
        if self.df.isna().values.any():
            raise ConfigError("dataset contains missing values after ingestion")
        for col, kind in self.kinds.items():
            if kind == NUMERIC:
                vals = self.df[col].to_numpy(dtype=float)
                if not np.isfinite(vals).all():
                    raise ConfigError(f"numeric column {col!r} has non-finite values")

    def __len__(self):
        return len(self.df)

    @property
    def columns(self):
        return tuple(self.df.columns)

    @property
    def feature_columns(self):
        return tuple(c for c in self.df.columns if c != self.target)

    def with_df(self, df: pd.DataFrame) -> "Dataset":
        """Same schema over a new frame (index is reset)."""
        return replace(self, df=df.reset_index(drop=True))


def load_dataset(source, config: SchemaConfig) -> Dataset:
    """Ingest a delimited text file under a schema config.

    Rows with any missing value are dropped (listwise deletion); string cells
    are stripped of surrounding whitespace; an optional ``target_positive``
    set maps the target onto {0, 1}.
    """
    na = list(NA_TOKENS) + list(config.na_values)
    df = pd.read_csv(source, na_values=na, keep_default_na=True, skipinitialspace=True)
    for col in df.columns:
        if df[col].dtype == object:
            df[col] = df[col].map(lambda v: v.strip() if isinstance(v, str) else v)
            df[col] = df[col].replace({tok: np.nan for tok in na if tok})
    before = len(df)
    df = df.dropna().reset_index(drop=True)
    if before - len(df):
        log.info("dropped %d incomplete rows from %s", before - len(df), config.name)
    if df.empty:
        raise ConfigError(f"{config.name}: no rows left after cleaning")

    declared = [config.target, *config.quasi_identifiers]
    declared += [b.attribute for b in config.protected]
    declared += list(config.categorical_overrides)
    for col in declared:
        if col not in df.columns:
            raise ConfigError(f"{config.name}: column {col!r} not present in file")
    if not config.quasi_identifiers or not config.protected:
        raise ConfigError(f"{config.name}: need at least one QI and one protected attribute")

    if config.target_positive:
        df[config.target] = df[config.target].isin(config.target_positive).astype(np.int64)

    kinds = infer_kinds(df, config.categorical_overrides)
    return Dataset(
        name=config.name,
        df=df,
        target=config.target,
        quasi_identifiers=tuple(config.quasi_identifiers),
        protected=tuple(b.attribute for b in config.protected),
        kinds=kinds,
    )


def binarize_protected(d: Dataset, b: ProtectedBinarization) -> Dataset:
    """Replace a protected column with its {privileged=1, unprivileged=0} form.

    The new column is integer-valued and treated as categorical downstream so
    synthesis never interpolates group membership. Row order is preserved.
    """
    if b.attribute not in d.df.columns:
        raise ConfigError(f"attribute {b.attribute!r} not in dataset")
    if b.attribute not in d.protected:
        raise ConfigError(f"attribute {b.attribute!r} does not have role Protected")
    col = d.df[b.attribute]
    if b.privileged_values is not None:
        mask = col.isin(b.privileged_values)
    else:
        if not pd.api.types.is_numeric_dtype(col):
            raise PredicateNotTotalError(
                f"{b.attribute}: threshold predicate on non-numeric values"
            )
        op = b.direction
        mask = {
            ">=": col >= b.threshold,
            ">": col > b.threshold,
            "<=": col <= b.threshold,
            "<": col < b.threshold,
        }[op]
    df = d.df.copy()
    df[b.attribute] = mask.to_numpy().astype(np.int64)
    kinds = dict(d.kinds)
    kinds[b.attribute] = CATEGORICAL
    return replace(d, df=df, kinds=kinds)


@dataclass(frozen=True)
class Split:
    """Train/test partition of a dataset; ``stratified`` is False when the
    per-class stratification had to be abandoned (some class had < 2 rows)."""

    train: Dataset
    test: Dataset
    train_fraction: float
    seed: int
    stratified: bool


def split(d: Dataset, seed: int, train_fraction: float = 0.8) -> Split:
    """Deterministic stratified train/test split.

    Procedure (PCG64 via ``numpy.random.default_rng(seed)``):

    1. ``n_test = floor(n * (1 - train_fraction) + 0.5)``.
    2. Per-class test quotas by largest remainder: ``floor(n_test * n_c / n)``
       each, leftover units to the classes with the largest fractional part
       (ties broken by class order as returned by ``numpy.unique``).
    3. For each class in that order, permute its row positions (ascending
       before permutation) with ``rng.permutation`` and take the first
       ``quota`` as test rows.
    4. Both partitions keep the original row order.

    Falls back to a single unstratified permutation when any class has fewer
    than 2 rows.
    """
    n = len(d)
    if n < 5:
        raise ValueError("need at least 5 rows to split")
    rng = np.random.default_rng(seed)
    n_test = int(math.floor(n * (1.0 - train_fraction) + 0.5))
    y = d.df[d.target].to_numpy()
    classes, counts = np.unique(y, return_counts=True)
    stratified = bool((counts >= 2).all())
    if stratified:
        quotas = n_test * counts / n
        base = np.floor(quotas).astype(int)
        leftover = n_test - int(base.sum())
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:leftover]] += 1
        test_idx = []
        for cls, quota in zip(classes, base):
            rows = np.flatnonzero(y == cls)
            perm = rows[rng.permutation(len(rows))]
            test_idx.extend(perm[:quota].tolist())
    else:
        log.warning("%s: a target class has < 2 rows; splitting unstratified", d.name)
        perm = rng.permutation(n)
        test_idx = perm[:n_test].tolist()
    test_mask = np.zeros(n, dtype=bool)
    test_mask[test_idx] = True
    train_ds = d.with_df(d.df.loc[~test_mask])
    test_ds = d.with_df(d.df.loc[test_mask])
    return Split(train=train_ds, test=test_ds, train_fraction=train_fraction,
                 seed=seed, stratified=stratified)
