"""Synthetic fixture datasets for tests, demos and calibration runs."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .datasets import CATEGORICAL, NUMERIC, Dataset


def make_random_table(seed: int, n_rows: int = 60, n_numeric: int = 2,
                      n_categorical: int = 2, n_levels: int = 4,
                      numeric_values: int = 0) -> Dataset:
    """A random mixed-type dataset with binary target, group and QIs.

    ``numeric_values`` > 0 snaps numeric columns onto that many distinct
    values so exact QI collisions (and hence single-outs) actually occur.
    """
    rng = np.random.default_rng(seed)
    data = {}
    kinds = {}
    qi_cols = []
    for i in range(n_numeric):
        col = f"num{i}"
        if numeric_values:
            vals = rng.integers(0, numeric_values, n_rows).astype(float)
        else:
            vals = rng.normal(size=n_rows) * 10
        data[col] = vals
        kinds[col] = NUMERIC
        qi_cols.append(col)
    for i in range(n_categorical):
        col = f"cat{i}"
        data[col] = rng.integers(0, n_levels, n_rows)
        kinds[col] = CATEGORICAL
        qi_cols.append(col)
    data["grp"] = rng.integers(0, 2, n_rows)
    kinds["grp"] = CATEGORICAL
    data["label"] = rng.integers(0, 2, n_rows)
    kinds["label"] = CATEGORICAL
    df = pd.DataFrame(data)
    return Dataset(
        name=f"random{seed}",
        df=df,
        target="label",
        quasi_identifiers=tuple(qi_cols),
        protected=("grp",),
        kinds=kinds,
    )


def make_toy_dataset(seed: int, n_rows: int = 300, signal: float = 2.0) -> Dataset:
    """Learnable mixed-type dataset: numeric signal + categorical noise + group.

    Quasi-identifiers are one numeric and one categorical column plus the
    group; numeric QI values are quantized so single-outs exist.
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n_rows)
    grp = np.where(rng.uniform(size=n_rows) < 0.7, y, rng.integers(0, 2, n_rows))
    x_sig = signal * y + rng.normal(size=n_rows)
    x_noise = np.round(rng.normal(size=n_rows) * 5, 1)
    job = rng.integers(0, 5, n_rows)
    df = pd.DataFrame({
        "score": x_sig,
        "band": x_noise,
        "job": job,
        "grp": grp.astype(np.int64),
        "label": y.astype(np.int64),
    })
    return Dataset(
        name=f"toy{seed}",
        df=df,
        target="label",
        quasi_identifiers=("band", "job", "grp"),
        protected=("grp",),
        kinds={"score": NUMERIC, "band": NUMERIC, "job": CATEGORICAL,
               "grp": CATEGORICAL, "label": CATEGORICAL},
    )


def make_biased_dataset(seed: int, n_rows: int = 2000, correlation: float = 0.9,
                        signal: float = 2.5) -> Dataset:
    """Group-correlated labels plus an independent numeric signal.

    ``correlation`` is the phi coefficient between group and label, so the
    label equals the group with probability (1 + correlation) / 2. The signal
    column depends on the label only, which is what lets a constrained model
    stay accurate without leaning on the group.
    """
    rng = np.random.default_rng(seed)
    grp = rng.integers(0, 2, n_rows)
    agree = rng.uniform(size=n_rows) < (1.0 + correlation) / 2.0
    y = np.where(agree, grp, 1 - grp)
    x = signal * y + rng.normal(size=n_rows)
    x2 = rng.normal(size=n_rows)
    df = pd.DataFrame({
        "signal": x,
        "noise": x2,
        "grp": grp.astype(np.int64),
        "label": y.astype(np.int64),
    })
    return Dataset(
        name=f"biased{seed}",
        df=df,
        target="label",
        quasi_identifiers=("grp",),
        protected=("grp",),
        kinds={"signal": NUMERIC, "noise": NUMERIC, "grp": CATEGORICAL,
               "label": CATEGORICAL},
    )
