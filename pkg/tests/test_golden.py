"""Byte-identical replay of a small verified run.

Guards the whole pipeline (split, synthesis, training, evaluation, analysis)
against accidental behavior drift. If a change is intentional, or a numpy /
scikit-learn upgrade moves floating point results, regenerate with
``python3 scripts/make_golden.py`` and review the diff.
"""

from pathlib import Path

from triobench.harness import ExperimentConfig, report, run_experiment

GOLDEN = Path(__file__).resolve().parent / "data" / "golden"


def test_golden_run_is_byte_identical(tmp_path):
    cfg_path = tmp_path / "toy.yaml"
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
        out_dir=str(tmp_path / "run"),
        seed=2024,
        learners=("logit",),
        fairness=("agnostic",),
        grid="full",
        workers=1,
    )
    records, _ = run_experiment(cfg)
    report(records, tmp_path / "reports", seed=2024, digest=cfg.digest())

    fresh = {
        "results.csv": tmp_path / "run" / "results.csv",
        "bayes_three_way.csv": tmp_path / "reports" / "bayes_three_way.csv",
        "paths_performance_fairness.csv": tmp_path / "reports" / "paths_performance_fairness.csv",
        "paths_privacy_performance.csv": tmp_path / "reports" / "paths_privacy_performance.csv",
    }
    for name, path in fresh.items():
        assert path.read_bytes() == (GOLDEN / name).read_bytes(), f"{name} drifted"
