#!/usr/bin/env python3
"""Regenerate the golden-run fixture under tests/data/golden/.

The golden test pins the exact bytes of a small verified run; rerun this after
an intentional behavior change (or a numpy/scikit-learn upgrade that moves
floating point results) and review the diff before committing.
"""

import shutil
from pathlib import Path

from triobench.harness import ExperimentConfig, report, run_experiment
from triobench.toydata import make_toy_dataset

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "data" / "golden"


def main():
    if GOLDEN.exists():
        shutil.rmtree(GOLDEN)
    GOLDEN.mkdir(parents=True)

    ds = make_toy_dataset(3, n_rows=300)
    ds.df.to_csv(GOLDEN / "toy_input.csv", index=False)

    work = GOLDEN / "_work"
    cfg_path = work / "toy.yaml"
    work.mkdir()
    cfg_path.write_text(f"""\
name: golden
path: {(GOLDEN / 'toy_input.csv').resolve()}
target: label
quasi_identifiers: [band, job, grp]
protected:
  - attribute: grp
    privileged_values: [1]
""")
    cfg = ExperimentConfig(
        dataset_config=str(cfg_path),
        out_dir=str(work / "run"),
        seed=2024,
        learners=("logit",),
        fairness=("agnostic",),
        grid="full",
        workers=1,
    )
    records, _ = run_experiment(cfg)
    report(records, work / "reports", seed=2024, digest=cfg.digest())

    shutil.copy(work / "run" / "results.csv", GOLDEN / "results.csv")
    for name in ("bayes_three_way.csv", "paths_performance_fairness.csv",
                 "paths_privacy_performance.csv"):
        shutil.copy(work / "reports" / name, GOLDEN / name)
    shutil.rmtree(work)
    print(f"golden fixture refreshed under {GOLDEN}")


if __name__ == "__main__":
    main()
