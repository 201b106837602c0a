import numpy as np
import pandas as pd
import pytest

from triobench.datasets import CATEGORICAL, NUMERIC, Dataset


@pytest.fixture
def ricci_like_csv(tmp_path):
    """Small mixed-type file in the style of a 6-column promotion dataset."""
    rng = np.random.default_rng(0)
    n = 40
    df = pd.DataFrame({
        "position": rng.choice(["captain", "lieutenant"], n),
        "race": rng.choice(["caucasian", "african-american", "hispanic", "other"], n),
        "oral": np.round(rng.uniform(40, 100, n), 2),
        "written": np.round(rng.uniform(40, 100, n), 2),
        "combined": np.round(rng.uniform(40, 100, n), 2),
        "promoted": rng.choice(["yes", "no"], n),
    })
    path = tmp_path / "ricci_like.csv"
    df.to_csv(path, index=False)
    return path


@pytest.fixture
def ricci_like_config(tmp_path, ricci_like_csv):
    cfg = tmp_path / "ricci_like.yaml"
    cfg.write_text(f"""\
name: ricci_like
path: {ricci_like_csv}
target: promoted
target_positive: [yes]
quasi_identifiers: [position, race, combined]
protected:
  - attribute: race
    privileged_values: [caucasian]
""")
    return cfg


def tiny_dataset(rows, columns, target, qis=(), protected=(), kinds=None):
    """Build a Dataset from a list of row tuples."""
    df = pd.DataFrame(rows, columns=columns)
    if kinds is None:
        kinds = {
            c: (NUMERIC if pd.api.types.is_float_dtype(df[c]) else CATEGORICAL)
            for c in columns
        }
    return Dataset(name="tiny", df=df, target=target,
                   quasi_identifiers=tuple(qis), protected=tuple(protected),
                   kinds=kinds)
