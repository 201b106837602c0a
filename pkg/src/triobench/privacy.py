"""Single-out detection, nearest-neighbour synthesis and exact-match linkage.

Re-identification risk is driven by the records that are unique on the
quasi-identifiers (k = 1). Synthesis replaces those records with interpolated
neighbours plus bounded noise; risk scoring counts how many of the original
unique records can still be matched exactly on the quasi-identifiers.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .datasets import CATEGORICAL, NUMERIC, Dataset
from .seeding import derive_seed

log = logging.getLogger(__name__)

SMOTE_RATIOS = (1, 2, 3)
SMOTE_KNNS = (1, 3, 5)
SMOTE_EPSILONS = (0.1, 0.3, 0.5)


class SchemaMismatchError(ValueError):
    """An imported variant does not share the source schema."""


def canonical_value(value) -> str:
    """Canonical string form used in QI signatures.

    Numeric-like values are rounded to 6 significant digits before hashing so
    float noise from CSV round trips cannot create false non-matches.
    """
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, float, np.integer, np.floating)):
        x = float(value)
        if x == 0.0:
            x = 0.0  # normalize -0.0
        return format(x, ".6g")
    return str(value)


def _signatures(df: pd.DataFrame, qis) -> list:
    cols = [df[q].tolist() for q in qis]
    return [tuple(canonical_value(col[i]) for col in cols) for i in range(len(df))]


@dataclass(frozen=True)
class EquivalenceClassIndex:
    """Partition of rows by joint quasi-identifier signature."""

    classes: dict  # signature -> tuple of row positions
    k: np.ndarray  # per-row class size

    @property
    def n_rows(self):
        return len(self.k)


def index_equivalence_classes(d: Dataset, qis) -> EquivalenceClassIndex:
    """Group row positions by their joint QI signature."""
    qis = list(qis)
    if not qis:
        raise ValueError("need at least one quasi-identifier")
    for q in qis:
        if q not in d.df.columns:
            raise ValueError(f"quasi-identifier {q!r} not in dataset")
    classes: dict = {}
    for pos, sig in enumerate(_signatures(d.df, qis)):
        classes.setdefault(sig, []).append(pos)
    k = np.zeros(len(d), dtype=np.int64)
    for members in classes.values():
        k[members] = len(members)
    return EquivalenceClassIndex(
        classes={sig: tuple(m) for sig, m in classes.items()}, k=k
    )


def single_outs(idx: EquivalenceClassIndex) -> list:
    """Row positions with k = 1, ascending."""
    return [int(r) for r in np.flatnonzero(idx.k == 1)]


@dataclass(frozen=True)
class PrivateSmoteParams:
    """ratio synthetic rows per single-out, knn neighbour pool, noise scale."""

    ratio: int
    knn: int
    noise_eps: float
    seed: int = 0

    def __post_init__(self):
        if self.ratio < 1:
            raise ValueError("ratio must be >= 1")
        if self.knn < 1:
            raise ValueError("knn must be >= 1")
        if self.noise_eps <= 0:
            raise ValueError("noise_eps must be > 0")

    def label(self) -> str:
        return f"privatesmote_r{self.ratio}_k{self.knn}_e{self.noise_eps:g}"


def full_grid(base_seed: int):
    """The 27 parameter combinations, each with its own derived seed."""
    out = []
    for ratio, knn, eps in itertools.product(SMOTE_RATIOS, SMOTE_KNNS, SMOTE_EPSILONS):
        out.append(
            PrivateSmoteParams(
                ratio=ratio, knn=knn, noise_eps=eps,
                seed=derive_seed(base_seed, "privatesmote", ratio, knn, eps),
            )
        )
    return out


@dataclass(frozen=True)
class Provenance:
    method: str  # PrivateSMOTE | Imported | Original
    params: dict
    seed: int | None
    source_dataset: str
    variant_id: str
    source_variant: str | None = None


@dataclass(frozen=True)
class SyntheticVariant:
    """A protected derivative of a training set.

    ``replaced_rows`` are the source rows (positions in the source training
    frame) that were removed; ``synthetic_positions`` are the rows of ``data``
    that count as synthetic for linkage purposes; ``pairs`` records, for each
    synthetic row in order, the (single-out, neighbour) source positions it
    was interpolated from (empty for imports).
    """

    data: Dataset
    provenance: Provenance
    replaced_rows: tuple = ()
    synthetic_positions: tuple = ()
    pairs: tuple = ()
    flags: tuple = ()


def private_smote(train: Dataset, qis, params: PrivateSmoteParams) -> SyntheticVariant:
    """Replace each single-out with ``ratio`` interpolated synthetic rows.

    For a single-out s and a neighbour x_nn sampled uniformly from its knn
    nearest rows (Gower distance over all non-target attributes: |delta|/range
    for numeric, 0/1 mismatch for categorical, averaged):

    * numeric attribute: ``x + w * (x_nn - x)`` with w ~ U[0, 1] drawn per
      attribute, plus noise ~ U[-eps * sigma, +eps * sigma] where sigma is the
      attribute's standard deviation over the whole training set (ddof=0);
    * categorical attribute: the single-out's or the neighbour's value with
      equal probability;
    * target: copied from the single-out.

    Draw order is fixed (single-outs ascending, then per synthetic row:
    neighbour choice, then attributes in column order), so equal
    (train, qis, params) give identical variants.
    """
    idx = index_equivalence_classes(train, qis)
    singles = single_outs(idx)
    prov = Provenance(
        method="PrivateSMOTE",
        params={"ratio": params.ratio, "knn": params.knn, "noise_eps": params.noise_eps},
        seed=params.seed,
        source_dataset=train.name,
        variant_id=params.label(),
    )
    if not singles:
        return SyntheticVariant(
            data=train.with_df(train.df.copy()),
            provenance=prov,
            flags=("no_single_outs",),
        )
    n = len(train)
    if n < params.knn + 1:
        raise ValueError(f"need at least knn+1={params.knn + 1} rows, have {n}")

    df = train.df
    attrs = [c for c in df.columns if c != train.target]
    num_cols = [c for c in attrs if train.kinds[c] == NUMERIC]
    cat_cols = [c for c in attrs if train.kinds[c] == CATEGORICAL]
    num = df[num_cols].to_numpy(dtype=float) if num_cols else np.zeros((n, 0))
    ranges = num.max(axis=0) - num.min(axis=0) if num_cols else np.zeros(0)
    ranges = np.where(ranges == 0, 1.0, ranges)  # constant column contributes 0 anyway
    sigmas = dict(zip(num_cols, num.std(axis=0))) if num_cols else {}
    cat_codes = (
        np.column_stack([pd.factorize(df[c])[0] for c in cat_cols])
        if cat_cols
        else np.zeros((n, 0), dtype=int)
    )
    n_attrs = len(attrs)

    flags = []
    pool_size = min(params.knn, n - 1)
    if pool_size < params.knn:
        flags.append("fewer_neighbors_than_knn")

    rng = np.random.default_rng(params.seed)
    synth_rows = []
    pairs = []
    for s in singles:
        dist = np.zeros(n)
        if num_cols:
            dist += (np.abs(num - num[s]) / ranges).sum(axis=1)
        if cat_cols:
            dist += (cat_codes != cat_codes[s]).sum(axis=1)
        dist /= n_attrs
        dist[s] = np.inf
        order = np.lexsort((np.arange(n), dist))
        neighbors = order[:pool_size]
        for _ in range(params.ratio):
            nn = int(neighbors[rng.integers(0, pool_size)])
            row = {}
            for c in attrs:
                if train.kinds[c] == NUMERIC:
                    x = float(df[c].iat[s])
                    x_nn = float(df[c].iat[nn])
                    w = rng.uniform()
                    bound = params.noise_eps * sigmas[c]
                    row[c] = x + w * (x_nn - x) + rng.uniform(-bound, bound)
                else:
                    pick = rng.integers(0, 2)
                    row[c] = df[c].iat[s] if pick == 0 else df[c].iat[nn]
            row[train.target] = df[train.target].iat[s]
            synth_rows.append(row)
            pairs.append((s, nn))

    keep = np.ones(n, dtype=bool)
    keep[singles] = False
    kept = df.loc[keep]
    synth = pd.DataFrame(synth_rows, columns=df.columns)
    out = pd.concat([kept, synth], ignore_index=True)
    n_kept = int(keep.sum())
    return SyntheticVariant(
        data=train.with_df(out),
        provenance=prov,
        replaced_rows=tuple(singles),
        synthetic_positions=tuple(range(n_kept, n_kept + len(synth))),
        pairs=tuple(pairs),
        flags=tuple(flags),
    )


def original_variant(train: Dataset) -> SyntheticVariant:
    """The unprotected training set wrapped as a pseudo-variant.

    Every row counts as synthetic, so exact-match linkage on the single-outs
    is 1.0 by construction; this is the no-protection risk baseline.
    """
    return SyntheticVariant(
        data=train.with_df(train.df.copy()),
        provenance=Provenance(
            method="Original", params={}, seed=None,
            source_dataset=train.name, variant_id="original",
        ),
        synthetic_positions=tuple(range(len(train))),
    )


def import_variant(train: Dataset, file, provenance_params: dict,
                   variant_id: str | None = None,
                   method: str = "Imported") -> SyntheticVariant:
    """Wrap an externally generated variant file.

    The file must carry exactly the source columns (any order; realigned by
    name) with compatible kinds. All rows are treated as synthetic for linkage
    (conservative: we cannot tell which rows an external generator replaced).
    """
    file = Path(file)
    df = pd.read_csv(file, skipinitialspace=True)
    if set(df.columns) != set(train.df.columns):
        extra = set(df.columns) - set(train.df.columns)
        missing = set(train.df.columns) - set(df.columns)
        raise SchemaMismatchError(
            f"{file.name}: column names differ (extra={sorted(extra)}, missing={sorted(missing)})"
        )
    df = df[list(train.df.columns)]
    before = len(df)
    df = df.dropna().reset_index(drop=True)
    if before - len(df):
        log.info("dropped %d incomplete rows from imported %s", before - len(df), file.name)
    for col, kind in train.kinds.items():
        if kind == NUMERIC:
            try:
                df[col] = pd.to_numeric(df[col])
            except (ValueError, TypeError) as exc:
                raise SchemaMismatchError(f"{file.name}: column {col!r} is not numeric") from exc
    singles = single_outs(index_equivalence_classes(train, train.quasi_identifiers))
    return SyntheticVariant(
        data=train.with_df(df),
        provenance=Provenance(
            method=method,
            params=dict(provenance_params),
            seed=provenance_params.get("seed"),
            source_dataset=train.name,
            variant_id=variant_id or file.stem,
            source_variant=file.stem,
        ),
        replaced_rows=tuple(singles),
        synthetic_positions=tuple(range(len(df))),
    )


@dataclass(frozen=True)
class LinkageRisk:
    """Exact-match re-identification risk against the original single-outs."""

    matches: int
    n_single_outs: int
    at_risk_fraction: float


def linkage_risk(original_train: Dataset, variant: SyntheticVariant, qis) -> LinkageRisk:
    """Count original single-outs whose QI signature appears among the
    variant's synthetic rows; each original row counts at most once."""
    idx = index_equivalence_classes(original_train, qis)
    singles = single_outs(idx)
    if not singles:
        return LinkageRisk(matches=0, n_single_outs=0, at_risk_fraction=0.0)
    synth_df = variant.data.df.iloc[list(variant.synthetic_positions)]
    synth_sigs = set(_signatures(synth_df.reset_index(drop=True), qis))
    orig_sigs = _signatures(original_train.df, qis)
    matches = sum(1 for s in singles if orig_sigs[s] in synth_sigs)
    return LinkageRisk(
        matches=matches,
        n_single_outs=len(singles),
        at_risk_fraction=matches / len(singles),
    )


def write_variant(variant: SyntheticVariant, csv_path) -> Path:
    """Persist a variant as CSV plus a JSON provenance sidecar."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    variant.data.df.to_csv(csv_path, index=False)
    sidecar = csv_path.with_suffix(".provenance.json")
    prov = variant.provenance
    record = {
        "method": prov.method,
        "params": prov.params,
        "seed": prov.seed,
        "source_dataset": prov.source_dataset,
        "variant_id": prov.variant_id,
        "source_variant": prov.source_variant,
        "replaced_rows": list(variant.replaced_rows),
        "synthetic_positions": list(variant.synthetic_positions),
        "flags": list(variant.flags),
    }
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar


def read_variant(train: Dataset, csv_path) -> SyntheticVariant:
    """Load a variant written by :func:`write_variant` (sidecar required)."""
    csv_path = Path(csv_path)
    sidecar = csv_path.with_suffix(".provenance.json")
    with open(sidecar, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    df = pd.read_csv(csv_path, skipinitialspace=True)
    df = df[list(train.df.columns)]
    return SyntheticVariant(
        data=train.with_df(df),
        provenance=Provenance(
            method=record["method"],
            params=record["params"],
            seed=record["seed"],
            source_dataset=record["source_dataset"],
            variant_id=record["variant_id"],
            source_variant=record.get("source_variant"),
        ),
        replaced_rows=tuple(record["replaced_rows"]),
        synthetic_positions=tuple(record["synthetic_positions"]),
        flags=tuple(record["flags"]),
    )
