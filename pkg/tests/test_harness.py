import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from triobench.analysis import read_results
from triobench.datasets import CATEGORICAL, NUMERIC, Dataset, split
from triobench.harness import (
    ExperimentConfig,
    evaluate_solution,
    report,
    run_experiment,
)
from triobench.learning import (
    FittedModel,
    HyperGrid,
    LogisticModel,
    Encoder,
    grid_search,
)
from triobench.privacy import PrivateSmoteParams, original_variant, private_smote
from triobench.toydata import make_toy_dataset


def write_toy_config(tmp_path, seed=1, n_rows=300) -> Path:
    ds = make_toy_dataset(seed, n_rows=n_rows)
    csv_path = tmp_path / f"toy{seed}.csv"
    ds.df.to_csv(csv_path, index=False)
    cfg_path = tmp_path / f"toy{seed}.yaml"
    cfg_path.write_text(f"""\
name: toy{seed}
path: {csv_path}
target: label
quasi_identifiers: [band, job, grp]
protected:
  - attribute: grp
    privileged_values: [1]
""")
    return cfg_path


def toy_experiment(tmp_path, out_name="out", **overrides) -> ExperimentConfig:
    cfg_path = write_toy_config(tmp_path)
    defaults = dict(
        dataset_config=str(cfg_path),
        out_dir=str(tmp_path / out_name),
        seed=7,
        learners=("logit",),
        fairness=("agnostic", "eg"),
        grid="single",
        workers=1,
        eg_max_iter=10,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestRunExperiment:
    def test_single_combo_logit_yields_agnostic_and_aware_rows(self, tmp_path):
        cfg = toy_experiment(tmp_path, include_original=False)
        records, ledger = run_experiment(cfg)
        assert len(records) >= 2
        assert {r.fairness_method for r in records} == {"agnostic", "eg"}
        assert all(0 <= r.accuracy <= 1 for r in records)
        assert Path(cfg.out_dir, "results.csv").exists()

    def test_full_grid_has_27_variants(self, tmp_path):
        cfg = toy_experiment(tmp_path, grid="full", fairness=("agnostic",),
                             include_original=False)
        records, _ = run_experiment(cfg)
        smote_ids = {r.variant_id for r in records if r.method == "PrivateSMOTE"}
        assert len(smote_ids) == 27

    def test_rerun_retrains_nothing(self, tmp_path):
        cfg = toy_experiment(tmp_path)
        records, _ = run_experiment(cfg)
        model_files = sorted(Path(cfg.out_dir, "models").glob("*.json"))
        assert model_files
        mtimes = {p: p.stat().st_mtime_ns for p in model_files}
        records2, ledger2 = run_experiment(cfg)
        assert records2 == records
        assert {p: p.stat().st_mtime_ns for p in model_files} == mtimes

    def test_different_config_in_same_out_dir_rejected(self, tmp_path):
        cfg = toy_experiment(tmp_path)
        run_experiment(cfg)
        other = toy_experiment(tmp_path, seed=8)
        with pytest.raises(ValueError, match="different config"):
            run_experiment(other)

    def test_deterministic_across_runs_and_workers(self, tmp_path):
        cfg_a = toy_experiment(tmp_path, out_name="a")
        cfg_b = toy_experiment(tmp_path, out_name="b", workers=2)
        run_experiment(cfg_a)
        run_experiment(cfg_b)
        bytes_a = Path(cfg_a.out_dir, "results.csv").read_bytes()
        bytes_b = Path(cfg_b.out_dir, "results.csv").read_bytes()
        assert bytes_a == bytes_b

    def test_test_split_isolated_from_training(self, tmp_path):
        cfg = toy_experiment(tmp_path)
        from triobench.harness import prepare_dataset

        _, sp, _ = prepare_dataset(cfg)
        digest_before = hashlib.sha256(sp.test.df.to_csv(index=False).encode()).hexdigest()
        run_experiment(cfg)
        _, sp_again, _ = prepare_dataset(cfg)
        digest_after = hashlib.sha256(sp_again.test.df.to_csv(index=False).encode()).hexdigest()
        assert digest_before == digest_after

    def test_imported_variants_join_the_sweep(self, tmp_path):
        from triobench.harness import prepare_dataset

        cfg_probe = toy_experiment(tmp_path)
        _, sp, _ = prepare_dataset(cfg_probe)
        import_dir = tmp_path / "external"
        import_dir.mkdir()
        sp.train.df.to_csv(import_dir / "gan_variant.csv", index=False)
        (import_dir / "gan_variant.provenance.json").write_text(json.dumps(
            {"method": "TVAE", "params": {"epochs": 100}}))

        cfg = toy_experiment(tmp_path, out_name="imp", grid="single",
                             fairness=("agnostic",), include_original=False,
                             import_dir=str(import_dir))
        records, _ = run_experiment(cfg)
        imported = [r for r in records if r.method == "TVAE"]
        assert len(imported) == 1
        assert imported[0].variant_id == "gan_variant"
        assert imported[0].linkage_risk == 1.0  # identical file links fully

    def test_worker_env_override(self, monkeypatch):
        cfg = ExperimentConfig(dataset_config="x", out_dir="y", seed=1, workers=4)
        assert cfg.effective_workers() == 4
        monkeypatch.setenv("TRIOBENCH_WORKERS", "2")
        assert cfg.effective_workers() == 2

    def test_every_row_reproducible_from_ledger_artifacts(self, tmp_path):
        from triobench.learning import load_model
        from triobench.privacy import linkage_risk, read_variant
        from triobench.harness import prepare_dataset
        from triobench.learning import feature_matrix

        cfg = toy_experiment(tmp_path, include_original=False)
        records, ledger = run_experiment(cfg)
        _, sp, protected = prepare_dataset(cfg)
        rec = records[0]
        cell = ledger.entries[f"{rec.variant_id}__logit"]
        variant = read_variant(sp.train, cell["variant"])
        model = load_model(cell["models"][f"{rec.variant_id}__logit__{rec.fairness_method}"])
        replayed = evaluate_solution(model, sp.test, protected, sp.train, variant,
                                     rec.algorithm, rec.fairness_method)
        assert replayed == rec


class TestEvaluateSolution:
    def _separable_dataset(self, seed=0, n=200):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 2, n)
        x = 10.0 * y + rng.normal(scale=0.1, size=n)
        grp = rng.integers(0, 2, n)
        df = pd.DataFrame({"x": x, "grp": grp.astype(np.int64),
                           "label": y.astype(np.int64)})
        return Dataset(name="sep", df=df, target="label",
                       quasi_identifiers=("x",), protected=("grp",),
                       kinds={"x": NUMERIC, "grp": CATEGORICAL, "label": CATEGORICAL})

    def test_perfect_model_zero_match_variant(self):
        ds = self._separable_dataset()
        sp = split(ds, 3)
        model = grid_search(sp.train, "logit",
                            HyperGrid.single("logit", C=10000.0, max_iter=1_000_000), seed=1)
        variant = private_smote(sp.train, sp.train.quasi_identifiers,
                                PrivateSmoteParams(ratio=1, knn=1, noise_eps=0.1, seed=3))
        rec = evaluate_solution(model, sp.test, "grp", sp.train, variant, "Logit", "agnostic")
        assert rec.accuracy == 1.0
        assert rec.eq_odds_diff == 0.0
        assert rec.linkage_risk == 0.0

    def test_constant_positive_model(self):
        ds = self._separable_dataset(seed=5)
        sp = split(ds, 3)
        enc = Encoder.fit(sp.train)
        constant = FittedModel(
            kind="logit", params={"C": 1.0, "max_iter": 1},
            inner=LogisticModel(coef=np.zeros(len(enc.feature_names)), intercept=50.0,
                                C=1.0, max_iter=1, converged=True),
            encoder=enc)
        variant = original_variant(sp.train)
        rec = evaluate_solution(constant, sp.test, "grp", sp.train, variant,
                                "Logit", "agnostic")
        base_rate = sp.test.df["label"].mean()
        assert rec.accuracy == pytest.approx(base_rate)
        assert rec.eq_odds_diff == 0.0
        assert rec.linkage_risk == 1.0

    def test_undefined_fairness_becomes_null(self):
        ds = self._separable_dataset(seed=6)
        # make every group-1 row have label 1: cell (group=1, label=0) empty
        df = ds.df.copy()
        df.loc[df["grp"] == 1, "label"] = 1
        df.loc[0:1, ["grp", "label"]] = [[0, 0], [0, 1]]  # keep both classes overall
        ds = ds.with_df(df)
        sp = split(ds, 3)
        model = grid_search(sp.train, "logit",
                            HyperGrid.single("logit", C=1.0, max_iter=1_000_000), seed=1)
        variant = original_variant(sp.train)
        rec = evaluate_solution(model, sp.test, "grp", sp.train, variant,
                                "Logit", "agnostic")
        assert rec.eq_odds_diff is None


class TestReport:
    def test_report_structure(self, tmp_path):
        cfg = toy_experiment(tmp_path, grid="full", fairness=("agnostic",),
                             learners=("logit",))
        records, _ = run_experiment(cfg)
        out = tmp_path / "reports"
        written = report(records, out, seed=3, digest=cfg.digest())
        names = {p.name for p in written}
        assert len([n for n in names if n.startswith("paths_")]) == 6
        assert "bayes_three_way.csv" in names
        paths_file = out / "paths_performance_fairness.csv"
        body = paths_file.read_text().splitlines()
        assert body[0].startswith("family,n,win,draw,loss")
        bayes = (out / "bayes_three_way.csv").read_text().splitlines()
        families = {r.family for r in records}
        rows = [line.split(",") for line in bayes[1:]]
        assert {r[0] for r in rows} <= families
        # accuracy baselines are never zero, so the performance vector survives
        assert sum(1 for r in rows if r[1] == "performance") == len(families)
        assert len(rows) <= 3 * len(families)
        meta = json.loads((out / "report_meta.json").read_text())
        assert meta["config_digest"] == cfg.digest()

    def test_single_dataset_report_valid(self, tmp_path):
        cfg = toy_experiment(tmp_path, fairness=("agnostic",))
        records, _ = run_experiment(cfg)
        written = report(records, tmp_path / "r", seed=0)
        assert (tmp_path / "r" / "bayes_three_way.csv").exists()

    def test_report_bytes_deterministic(self, tmp_path):
        cfg = toy_experiment(tmp_path, grid="full", fairness=("agnostic",))
        records, _ = run_experiment(cfg)
        report(records, tmp_path / "r1", seed=3)
        report(records, tmp_path / "r2", seed=3)
        for name in ("paths_performance_fairness.csv", "bayes_three_way.csv"):
            assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
