"""End-to-end sweep: split, synthesize, score risk, train, evaluate, report.

One experiment covers a single dataset config: the original data is split
80/20, the training side is protected into a grid of synthetic variants, each
(variant x learner) cell is trained fairness-agnostically (grid search) and,
when requested, fairness-aware (exponentiated gradient reusing the winning
hyper-parameters), and every solution is scored on the untouched original test
split. Cells are independent and may run in parallel; the ledger records every
cell so reruns skip completed work.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import privacy
from .analysis import (
    PERFORMANCE,
    FAIRNESS,
    PRIVACY,
    SolutionRecord,
    VECTORS,
    optimization_path,
    read_results,
    three_way_comparison,
    write_results,
)
from .datasets import Dataset, Split, binarize_protected, load_dataset, load_schema_config, split
from .fairness import (
    EgParams,
    GroupedPredictions,
    UndefinedMetricError,
    equalized_odds_diff,
    exponentiated_gradient,
)
from .learning import (
    FittedModel,
    HyperGrid,
    feature_matrix,
    grid_search,
    group_vector,
    save_model,
)
from .seeding import derive_seed

log = logging.getLogger(__name__)

AGNOSTIC = "agnostic"
EG = "eg"

ALGO_LABELS = {"logit": "Logit", "rf": "RF", "xgb": "XGB"}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_config: str
    out_dir: str
    seed: int
    learners: tuple = ("logit", "rf")
    fairness: tuple = (AGNOSTIC, EG)
    grid: str = "full"  # full | single
    smote_ratio: int = 1
    smote_knn: int = 1
    smote_eps: float = 0.1
    import_dir: str | None = None
    include_original: bool = True
    workers: int | None = None
    eg_constraint: str = "eo"
    eg_eps: float = 0.01
    eg_max_iter: int = 50
    eg_eta: float = 2.0
    protected_eval: str | None = None
    max_rows: int | None = None

    def __post_init__(self):
        if not self.learners:
            raise ValueError("need at least one learner")
        if self.grid not in ("full", "single") and self.import_dir is None:
            raise ValueError("grid must be 'full' or 'single'")

    def digest(self) -> str:
        payload = dataclasses.asdict(self)
        payload.pop("workers", None)  # worker count must not change results
        payload.pop("out_dir", None)
        return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:16]

    def effective_workers(self) -> int:
        env = os.environ.get("TRIOBENCH_WORKERS")
        if env:
            return max(1, int(env))
        if self.workers:
            return max(1, self.workers)
        return os.cpu_count() or 1


@dataclass
class RunLedger:
    """Append-oriented JSON record of cell status; single-writer."""

    path: Path
    entries: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunLedger":
        path = Path(path)
        entries = {}
        if path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                entries = json.load(fh)
        return cls(path=path, entries=entries)

    def save(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.entries, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def mark(self, cell_id: str, **fields):
        self.entries[cell_id] = {**self.entries.get(cell_id, {}), **fields}
        self.save()

    def done(self, cell_id: str) -> bool:
        return self.entries.get(cell_id, {}).get("status") == "done"


def prepare_dataset(cfg: ExperimentConfig):
    """Load, binarize every protected attribute, optionally subsample, split."""
    schema = load_schema_config(cfg.dataset_config)
    ds = load_dataset(schema.path, schema)
    for rule in schema.protected:
        ds = binarize_protected(ds, rule)
    if cfg.max_rows and len(ds) > cfg.max_rows:
        frac = cfg.max_rows / len(ds)
        ds = split(ds, derive_seed(cfg.seed, "subsample"), train_fraction=frac).train
        log.info("subsampled %s to %d rows", ds.name, len(ds))
    protected_attr = (cfg.protected_eval or schema.protected_eval
                      or schema.protected[0].attribute)
    sp = split(ds, derive_seed(cfg.seed, "split"))
    return ds, sp, protected_attr


def build_variants(cfg: ExperimentConfig, train: Dataset) -> list:
    variants = []
    if cfg.include_original:
        variants.append(privacy.original_variant(train))
    if cfg.grid == "full":
        grid = privacy.full_grid(cfg.seed)
    else:
        grid = [privacy.PrivateSmoteParams(
            ratio=cfg.smote_ratio, knn=cfg.smote_knn, noise_eps=cfg.smote_eps,
            seed=derive_seed(cfg.seed, "privatesmote", cfg.smote_ratio,
                             cfg.smote_knn, cfg.smote_eps),
        )]
    for params in grid:
        variants.append(privacy.private_smote(train, train.quasi_identifiers, params))
    if cfg.import_dir:
        for csv_path in sorted(Path(cfg.import_dir).glob("*.csv")):
            sidecar = csv_path.with_suffix(".provenance.json")
            prov = {}
            method = "Imported"
            if sidecar.exists():
                with open(sidecar, "r", encoding="utf-8") as fh:
                    raw = json.load(fh)
                prov = raw.get("params", {})
                method = raw.get("method", "Imported")
            variants.append(privacy.import_variant(train, csv_path, prov, method=method))
    return variants


def evaluate_solution(model: FittedModel, test: Dataset, protected_attr: str,
                      original_train: Dataset, variant: privacy.SyntheticVariant,
                      algorithm: str, fairness_method: str) -> SolutionRecord:
    """Out-of-sample accuracy and equalized odds plus the variant's linkage risk."""
    fm = feature_matrix(test, model.encoder)
    pred = model.predict(fm)
    accuracy = float((pred == fm.y).mean())
    try:
        report = equalized_odds_diff(GroupedPredictions(
            y_pred=pred, y_true=fm.y, group=group_vector(test, protected_attr)))
        eq = report.equalized_odds_diff
    except UndefinedMetricError as exc:
        log.warning("fairness undefined for %s/%s: %s",
                    variant.provenance.variant_id, algorithm, exc)
        eq = None
    risk = privacy.linkage_risk(original_train, variant,
                                original_train.quasi_identifiers)
    return SolutionRecord(
        dataset=original_train.name,
        variant_id=variant.provenance.variant_id,
        method=variant.provenance.method,
        params=canonical_json(variant.provenance.params),
        algorithm=algorithm,
        fairness_method=fairness_method,
        accuracy=accuracy,
        eq_odds_diff=eq,
        linkage_risk=risk.at_risk_fraction,
    )


def _run_cell(args):
    """One (variant x learner) cell: grid search, optional EG, evaluation.

    Module-level so process pools can pickle it. Returns
    (cell_id, rows, model_payloads, error) where rows are result-row dicts.
    """
    (cfg, variant, learner, test, train, protected_attr) = args
    cell_id = f"{variant.provenance.variant_id}__{learner}"
    cell_seed = derive_seed(cfg.seed, "cell", variant.provenance.variant_id, learner)
    try:
        fitted = grid_search(variant.data, learner, seed=cell_seed)
        rows, models = [], {}
        if AGNOSTIC in cfg.fairness:
            rec = evaluate_solution(fitted, test, protected_attr, train, variant,
                                    ALGO_LABELS[learner], AGNOSTIC)
            rows.append(rec)
            models[f"{cell_id}__{AGNOSTIC}"] = fitted
        if EG in cfg.fairness:
            fm = feature_matrix(variant.data, fitted.encoder)
            groups = group_vector(variant.data, protected_attr)
            eg_model = exponentiated_gradient(fm, groups, EgParams(
                constraint=cfg.eg_constraint, eps=cfg.eg_eps,
                max_iter=cfg.eg_max_iter, eta=cfg.eg_eta,
                base_kind=learner, base_params=dict(fitted.params),
                seed=derive_seed(cell_seed, "eg"),
            ))
            rec = evaluate_solution(eg_model, test, protected_attr, train, variant,
                                    ALGO_LABELS[learner], EG)
            rows.append(rec)
            models[f"{cell_id}__{EG}"] = eg_model
        return cell_id, rows, models, None
    except Exception as exc:  # recorded, sweep continues
        log.exception("cell %s failed", cell_id)
        return cell_id, [], {}, f"{type(exc).__name__}: {exc}"


def _frame_digest(d: Dataset) -> str:
    return hashlib.sha256(d.df.to_csv(index=False).encode()).hexdigest()


def run_experiment(cfg: ExperimentConfig):
    """Execute the full sweep; returns (records, ledger).

    Deterministic for a given (config, seed): every sampled step draws from a
    seed derived from the run seed and the cell identity, and results are
    reduced in sorted order rather than completion order.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = cfg.digest()
    log.info("config digest %s", digest)
    ledger = RunLedger.load(out / "ledger.json")
    recorded_digest = ledger.entries.get("__meta__", {}).get("digest")
    if recorded_digest is not None and recorded_digest != digest:
        raise ValueError("output directory holds a run with a different config")
    ledger.mark("__meta__", digest=digest, seed=cfg.seed, status="meta")

    ds, sp, protected_attr = prepare_dataset(cfg)
    test_digest_before = _frame_digest(sp.test)
    sp.train.df.to_csv(out / "train.csv", index=False)
    sp.test.df.to_csv(out / "test.csv", index=False)

    variants = build_variants(cfg, sp.train)
    for v in variants:
        privacy.write_variant(v, out / "variants" / f"{v.provenance.variant_id}.csv")

    results_path = out / "results.csv"
    existing = {}
    if results_path.exists():
        for rec in read_results(results_path):
            existing[(rec.variant_id, rec.algorithm, rec.fairness_method)] = rec

    cells = []
    for v in variants:
        for learner in cfg.learners:
            cells.append((v, learner))
    pending = []
    records = []
    for v, learner in cells:
        cell_id = f"{v.provenance.variant_id}__{learner}"
        if ledger.done(cell_id):
            kept = [existing[k] for k in sorted(existing)
                    if k[0] == v.provenance.variant_id and k[1] == ALGO_LABELS[learner]]
            if kept:
                records.extend(kept)
                log.info("skipping completed cell %s", cell_id)
                continue
        pending.append((cfg, v, learner, sp.test, sp.train, protected_attr))

    workers = cfg.effective_workers()
    t0 = time.time()
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, pending))
    else:
        outcomes = [_run_cell(args) for args in pending]
    failures = 0
    for (args, (cell_id, rows, models, error)) in zip(pending, outcomes):
        if error is not None:
            failures += 1
            ledger.mark(cell_id, status="failed", error=error,
                        seed=derive_seed(cfg.seed, "cell",
                                         args[1].provenance.variant_id, args[2]))
            continue
        model_paths = {}
        for key, model in models.items():
            model_paths[key] = str(save_model(model, out / "models" / f"{key}.json"))
        records.extend(rows)
        ledger.mark(cell_id, status="done",
                    seed=derive_seed(cfg.seed, "cell",
                                     args[1].provenance.variant_id, args[2]),
                    models=model_paths,
                    variant=str(out / "variants" / f"{args[1].provenance.variant_id}.csv"),
                    wall_time=round(time.time() - t0, 3))

    assert _frame_digest(sp.test) == test_digest_before, "test split was mutated"
    records.sort(key=lambda r: (r.dataset, r.variant_id, r.algorithm, r.fairness_method))
    write_results(records, results_path)
    ledger.mark("__meta__", digest=digest, seed=cfg.seed, status="meta",
                failures=failures, n_records=len(records))
    return records, ledger


PATH_PAIRS = tuple(
    (v1, v2) for v1 in VECTORS for v2 in VECTORS if v1 != v2
)


def report(records, out_dir, seed: int = 0, rope_pp: float = 0.0,
           rope=(-1.0, 1.0), mc_samples: int = 30_000, digest: str | None = None):
    """Write every optimization-path table and the three-way posterior table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not records:
        raise ValueError("empty results table")
    written = []
    for v1, v2 in PATH_PAIRS:
        rep = optimization_path(records, v1, v2, rope_pp=rope_pp)
        path = out / f"paths_{v1}_{v2}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("family,n,win,draw,loss,companion,companion_win,companion_draw,companion_loss\n")
            for fam in rep.families:
                fh.write(",".join([
                    fam.family, str(fam.n), repr(fam.win), repr(fam.draw),
                    repr(fam.loss), rep.companion, repr(fam.companion_win),
                    repr(fam.companion_draw), repr(fam.companion_loss),
                ]) + "\n")
        written.append(path)
    comparisons = three_way_comparison(records, rope=rope, mc_samples=mc_samples,
                                       seed=seed)
    bayes_path = out / "bayes_three_way.csv"
    with open(bayes_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("family,vector,p_win,p_rope,p_loss,n_diffs,n_excluded\n")
        for (family, vector) in sorted(comparisons):
            c = comparisons[(family, vector)]
            fh.write(",".join([
                family, vector, repr(c.p_win), repr(c.p_rope), repr(c.p_loss),
                str(c.n_diffs), str(c.n_excluded),
            ]) + "\n")
    written.append(bayes_path)
    meta = {
        "seed": seed,
        "rope_pp": rope_pp,
        "rope": list(rope),
        "mc_samples": mc_samples,
        "config_digest": digest,
        "n_records": len(records),
    }
    with open(out / "report_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return written
