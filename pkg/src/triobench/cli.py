"""Command-line entry points: synthesize, risk, train, evaluate, run, paths, bayes, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import privacy
from .analysis import read_results, optimization_path, three_way_comparison
from .datasets import binarize_protected, load_dataset, load_schema_config, split
from .fairness import EgParams, GroupedPredictions, UndefinedMetricError, \
    equalized_odds_diff, exponentiated_gradient
from .harness import AGNOSTIC, EG, ALGO_LABELS, ExperimentConfig, canonical_json, \
    report as write_report, run_experiment
from .learning import feature_matrix, grid_search, group_vector, load_model, save_model
from .seeding import derive_seed

log = logging.getLogger(__name__)

VECTOR_ALIASES = {"acc": "performance", "fair": "fairness", "priv": "privacy",
                  "performance": "performance", "fairness": "fairness",
                  "privacy": "privacy"}


def _prepared_split(cfg_path, seed):
    schema = load_schema_config(cfg_path)
    ds = load_dataset(schema.path, schema)
    for rule in schema.protected:
        ds = binarize_protected(ds, rule)
    protected = schema.protected_eval or schema.protected[0].attribute
    return ds, split(ds, derive_seed(seed, "split")), protected


def cmd_synthesize(args) -> int:
    _, sp, _ = _prepared_split(args.dataset, args.seed)
    train = sp.train
    out = Path(args.out)
    if args.grid == "full":
        grid = privacy.full_grid(args.seed)
    else:
        grid = [privacy.PrivateSmoteParams(
            ratio=args.ratio, knn=args.knn, noise_eps=args.eps,
            seed=derive_seed(args.seed, "privatesmote", args.ratio, args.knn, args.eps))]
    for params in grid:
        variant = privacy.private_smote(train, train.quasi_identifiers, params)
        path = out / f"{variant.provenance.variant_id}.csv"
        privacy.write_variant(variant, path)
        print(f"wrote {path}")
    return 0


def cmd_risk(args) -> int:
    train_ds, sp, _ = _prepared_split(args.original, args.seed)
    train = sp.train
    variant_path = Path(args.variant)
    sidecar = variant_path.with_suffix(".provenance.json")
    if sidecar.exists():
        variant = privacy.read_variant(train, variant_path)
    else:
        variant = privacy.import_variant(train, variant_path, {})
    risk = privacy.linkage_risk(train, variant, train.quasi_identifiers)
    print(json.dumps({
        "variant": variant.provenance.variant_id,
        "matches": risk.matches,
        "single_outs": risk.n_single_outs,
        "at_risk_fraction": risk.at_risk_fraction,
    }, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    _, sp, protected = _prepared_split(args.dataset, args.seed)
    if args.variant == "original":
        train_data = sp.train
    else:
        variant = privacy.read_variant(sp.train, args.variant)
        train_data = variant.data
    fitted = grid_search(train_data, args.algo,
                         seed=derive_seed(args.seed, "train", args.algo))
    if args.fairness == EG:
        fm = feature_matrix(train_data, fitted.encoder)
        groups = group_vector(train_data, protected)
        fitted = exponentiated_gradient(fm, groups, EgParams(
            constraint=args.constraint, eps=args.eps,
            base_kind=args.algo, base_params=dict(fitted.params),
            seed=derive_seed(args.seed, "train", args.algo, "eg"),
        ))
    save_model(fitted, args.out)
    print(f"wrote {args.out} (kind={fitted.kind}, params={canonical_json(fitted.params)})")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    import pandas as pd

    from .datasets import Dataset, infer_kinds

    df = pd.read_csv(args.test, skipinitialspace=True).dropna().reset_index(drop=True)
    kinds = infer_kinds(df)
    test = Dataset(name=Path(args.test).stem, df=df, target=model.encoder.target,
                   quasi_identifiers=(args.protected,), protected=(args.protected,),
                   kinds=kinds)
    fm = feature_matrix(test, model.encoder)
    pred = model.predict(fm)
    record = {"accuracy": float((pred == fm.y).mean())}
    try:
        rep = equalized_odds_diff(GroupedPredictions(
            y_pred=pred, y_true=fm.y, group=group_vector(test, args.protected)))
        record.update({
            "equalized_odds_diff": rep.equalized_odds_diff,
            "tpr_diff": rep.tpr_diff,
            "fpr_diff": rep.fpr_diff,
            "demographic_parity_diff": rep.demographic_parity_diff,
        })
    except UndefinedMetricError as exc:
        record["equalized_odds_diff"] = None
        record["fairness_error"] = str(exc)
    print(json.dumps(record, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    cfg = ExperimentConfig(
        dataset_config=args.dataset,
        out_dir=args.out,
        seed=args.seed,
        learners=tuple(args.learners.split(",")),
        fairness=tuple(args.fairness.split(",")),
        grid=args.grid,
        smote_ratio=args.ratio, smote_knn=args.knn, smote_eps=args.eps,
        import_dir=args.import_dir,
        include_original=not args.no_original,
        workers=args.workers,
        max_rows=args.max_rows,
    )
    print(f"config digest {cfg.digest()}")
    records, ledger = run_experiment(cfg)
    failures = ledger.entries.get("__meta__", {}).get("failures", 0)
    print(f"{len(records)} solution records -> {Path(args.out) / 'results.csv'}")
    if args.report:
        write_report(records, Path(args.out) / "reports", seed=args.seed,
                     digest=cfg.digest())
        print(f"reports -> {Path(args.out) / 'reports'}")
    if failures:
        print(f"{failures} cells failed; see ledger", file=sys.stderr)
        return 1
    return 0


def cmd_paths(args) -> int:
    records = read_results(args.results)
    v1 = VECTOR_ALIASES[args.optimize]
    v2 = VECTOR_ALIASES[args.prioritize]
    rep = optimization_path(records, v1, v2, rope_pp=args.rope_pp)
    print(f"optimize={rep.optimized} prioritize={rep.prioritized} companion={rep.companion}")
    print("family,n,win,draw,loss,companion_win,companion_draw,companion_loss")
    for fam in rep.families:
        print(f"{fam.family},{fam.n},{fam.win:.4f},{fam.draw:.4f},{fam.loss:.4f},"
              f"{fam.companion_win:.4f},{fam.companion_draw:.4f},{fam.companion_loss:.4f}")
    return 0


def cmd_bayes(args) -> int:
    records = read_results(args.results)
    comparisons = three_way_comparison(records, rope=(args.rope_low, args.rope_high),
                                       mc_samples=args.mc_samples, seed=args.seed)
    print("family,vector,p_win,p_rope,p_loss,n_diffs")
    for (family, vector) in sorted(comparisons):
        c = comparisons[(family, vector)]
        print(f"{family},{vector},{c.p_win:.4f},{c.p_rope:.4f},{c.p_loss:.4f},{c.n_diffs}")
    return 0


def cmd_report(args) -> int:
    records = read_results(args.results)
    written = write_report(records, args.out, seed=args.seed, rope_pp=args.rope_pp,
                           rope=(args.rope_low, args.rope_high),
                           mc_samples=args.mc_samples)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triobench",
        description="Privacy / fairness / predictive-performance benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="generate protected variants of a training split")
    p.add_argument("--dataset", required=True, help="dataset schema config (YAML)")
    p.add_argument("--method", default="privatesmote", choices=["privatesmote"])
    p.add_argument("--grid", default="full", choices=["full", "single"])
    p.add_argument("--ratio", type=int, default=1)
    p.add_argument("--knn", type=int, default=1)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("risk", help="exact-match linkage risk of a variant file")
    p.add_argument("--original", required=True, help="dataset schema config (YAML)")
    p.add_argument("--variant", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("train", help="grid-search a learner on a variant (or the original)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--variant", default="original", help="variant CSV or 'original'")
    p.add_argument("--algo", required=True, choices=list(ALGO_LABELS))
    p.add_argument("--fairness", default=AGNOSTIC, choices=[AGNOSTIC, EG])
    p.add_argument("--constraint", default="eo", choices=["eo", "dp"])
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model record on a test CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--protected", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full sweep: synthesize, train, evaluate")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--learners", default="logit,rf")
    p.add_argument("--fairness", default="agnostic,eg")
    p.add_argument("--grid", default="full", choices=["full", "single"])
    p.add_argument("--ratio", type=int, default=1)
    p.add_argument("--knn", type=int, default=1)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--import-dir", dest="import_dir", default=None)
    p.add_argument("--no-original", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--max-rows", type=int, default=None,
                   help="stratified row cap applied before splitting")
    p.add_argument("--report", action="store_true", help="also write analysis reports")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("paths", help="optimization-path win/loss table")
    p.add_argument("--results", required=True)
    p.add_argument("--optimize", required=True, choices=sorted(VECTOR_ALIASES))
    p.add_argument("--prioritize", required=True, choices=sorted(VECTOR_ALIASES))
    p.add_argument("--rope-pp", type=float, default=0.0)
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("bayes", help="three-way posterior comparison table")
    p.add_argument("--results", required=True)
    p.add_argument("--rope-low", type=float, default=-1.0)
    p.add_argument("--rope-high", type=float, default=1.0)
    p.add_argument("--mc-samples", type=int, default=30_000)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_bayes)

    p = sub.add_parser("report", help="write all analysis tables for a results file")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rope-pp", type=float, default=0.0)
    p.add_argument("--rope-low", type=float, default=-1.0)
    p.add_argument("--rope-high", type=float, default=1.0)
    p.add_argument("--mc-samples", type=int, default=30_000)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
