"""Optimization-path and posterior win/draw/loss analyses over solution records.

Each solution is a (accuracy, equalized-odds difference, linkage-risk) triple:
higher accuracy is better, lower is better for the other two. Records group
into families (fairness method x synthesis method); analyses compare records
against per-dataset baselines and aggregate per family.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .seeding import derive_seed

log = logging.getLogger(__name__)

PERFORMANCE = "performance"
FAIRNESS = "fairness"
PRIVACY = "privacy"


@dataclass(frozen=True)
class Vector:
    name: str
    metric: str
    higher_is_better: bool


VECTORS = {
    PERFORMANCE: Vector(PERFORMANCE, "accuracy", True),
    FAIRNESS: Vector(FAIRNESS, "eq_odds_diff", False),
    PRIVACY: Vector(PRIVACY, "linkage_risk", False),
}


def _as_vector(v) -> Vector:
    return v if isinstance(v, Vector) else VECTORS[v]


@dataclass(frozen=True)
class SolutionRecord:
    dataset: str
    variant_id: str
    method: str  # synthesis method family
    params: str  # canonical parameter string
    algorithm: str
    fairness_method: str  # agnostic | eg | ...
    accuracy: float
    eq_odds_diff: float | None
    linkage_risk: float

    def __post_init__(self):
        for name in ("accuracy", "linkage_risk"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} out of [0,1]: {v}")
        if self.eq_odds_diff is not None and not (0.0 <= self.eq_odds_diff <= 1.0):
            raise ValueError(f"eq_odds_diff out of [0,1]: {self.eq_odds_diff}")

    @property
    def family(self) -> str:
        return f"{self.fairness_method}@{self.method}"

    def metric(self, vector) -> float:
        return getattr(self, _as_vector(vector).metric)

    def sort_key(self):
        return (self.variant_id, self.algorithm, self.fairness_method)


def percentage_diff(r_a: float, r_b: float) -> float:
    """(r_a - r_b) / r_b * 100. A zero baseline yields a signed-infinity
    sentinel (0.0 when both sides are equal); callers exclude non-finite
    values from posterior counts."""
    if r_a == r_b:
        return 0.0
    if r_b == 0:
        return math.inf if r_a > r_b else -math.inf
    return (r_a - r_b) / r_b * 100.0


def _usable(records, vectors) -> list:
    needed = {_as_vector(v).metric for v in vectors}
    if "eq_odds_diff" in needed:
        kept = [r for r in records if r.eq_odds_diff is not None]
        if len(kept) < len(records):
            log.info("excluding %d records without a fairness metric", len(records) - len(kept))
        return kept
    return list(records)


def _by_dataset(records) -> dict:
    out: dict = {}
    for r in records:
        out.setdefault(r.dataset, []).append(r)
    return out


def select_baseline(records, vector) -> dict:
    """Per dataset, the record that is best on the given vector.

    Ties break lexicographically on (variant_id, algorithm, fairness_method).
    """
    vec = _as_vector(vector)
    records = _usable(records, [vec])
    if not records:
        raise ValueError("no usable records")
    sign = -1.0 if vec.higher_is_better else 1.0
    out = {}
    for ds, recs in _by_dataset(records).items():
        out[ds] = min(recs, key=lambda r: (sign * r.metric(vec), r.sort_key()))
    return out


def classify_outcome(candidate: float, baseline: float, higher_is_better: bool,
                     rope_pp: float = 0.0) -> str:
    """win / draw / loss of a candidate metric against a baseline metric.

    Draws are percentage-difference magnitudes within rope_pp; outside the
    band the raw values decide, respecting orientation (so negating a metric
    and flipping the flag classifies identically).
    """
    if abs(percentage_diff(candidate, baseline)) <= rope_pp:
        return "draw"
    improved = candidate > baseline if higher_is_better else candidate < baseline
    return "win" if improved else "loss"


@dataclass(frozen=True)
class FamilyPathStats:
    family: str
    n: int
    win: float
    draw: float
    loss: float
    companion_win: float
    companion_draw: float
    companion_loss: float


@dataclass(frozen=True)
class PathReport:
    optimized: str  # V1: the vector the baseline is best at
    prioritized: str  # V2: the vector whose win/loss is tallied
    companion: str  # V3: the remaining vector
    rope_pp: float
    families: tuple  # of FamilyPathStats, sorted by family name


def optimization_path(records, optimized, prioritized, rope_pp: float = 0.0) -> PathReport:
    """Win/draw/loss probabilities of every non-baseline record's V2 metric
    against the V1-optimal baseline of its dataset, aggregated per family,
    with the same tally for the remaining vector V3."""
    v1, v2 = _as_vector(optimized), _as_vector(prioritized)
    if v1.name == v2.name:
        raise ValueError("optimized and prioritized vectors must differ")
    (v3,) = [v for v in VECTORS.values() if v.name not in (v1.name, v2.name)]
    records = _usable(records, [v1, v2, v3])
    baselines = select_baseline(records, v1)
    tallies: dict = {}
    for r in records:
        base = baselines[r.dataset]
        if r is base:
            continue
        t = tallies.setdefault(r.family, {"n": 0, "v2": {"win": 0, "draw": 0, "loss": 0},
                                          "v3": {"win": 0, "draw": 0, "loss": 0}})
        t["n"] += 1
        t["v2"][classify_outcome(r.metric(v2), base.metric(v2), v2.higher_is_better, rope_pp)] += 1
        t["v3"][classify_outcome(r.metric(v3), base.metric(v3), v3.higher_is_better, rope_pp)] += 1
    families = []
    for family in sorted(tallies):
        t = tallies[family]
        n = t["n"]
        families.append(FamilyPathStats(
            family=family, n=n,
            win=t["v2"]["win"] / n, draw=t["v2"]["draw"] / n, loss=t["v2"]["loss"] / n,
            companion_win=t["v3"]["win"] / n, companion_draw=t["v3"]["draw"] / n,
            companion_loss=t["v3"]["loss"] / n,
        ))
    return PathReport(optimized=v1.name, prioritized=v2.name, companion=v3.name,
                      rope_pp=rope_pp, families=tuple(families))


def average_rank_solution(records) -> dict:
    """Per dataset, the record with the lowest mean rank across the three
    vectors (rank 1 = best; ties share the mean rank; deterministic final
    tie-break on (variant_id, algorithm, fairness_method))."""
    records = _usable(records, VECTORS.values())
    if not records:
        raise ValueError("no usable records")
    out = {}
    for ds, recs in _by_dataset(records).items():
        mean_ranks = np.zeros(len(recs))
        for vec in VECTORS.values():
            vals = np.array([r.metric(vec) for r in recs], dtype=float)
            if vec.higher_is_better:
                vals = -vals
            mean_ranks += rankdata(vals, method="average")
        mean_ranks /= len(VECTORS)
        best = min(range(len(recs)), key=lambda i: (mean_ranks[i], recs[i].sort_key()))
        out[ds] = recs[best]
    return out


@dataclass(frozen=True)
class BayesComparison:
    """Posterior win/rope/loss probabilities of a candidate against a baseline."""

    p_win: float
    p_rope: float
    p_loss: float
    rope: tuple
    n_diffs: int
    n_excluded: int
    direction: str  # 'higher' or 'lower': which sign of diff favors the candidate

    def __post_init__(self):
        assert abs(self.p_win + self.p_rope + self.p_loss - 1.0) < 1e-9


def bayes_sign_test(diffs, rope=(-1.0, 1.0), prior_strength: float = 1.0,
                    mc_samples: int = 30_000, seed: int = 0,
                    direction: str = "higher") -> BayesComparison:
    """Dirichlet-multinomial sign test over percentage differences.

    Diffs are counted into (below rope, inside rope, above rope); the
    posterior is Dirichlet with prior pseudo-counts prior_strength/3 per
    component, and each probability is the Monte Carlo estimate of that
    component being the largest. ``direction`` maps the above-rope component
    onto a candidate win ('higher', for metrics where bigger diffs favor the
    candidate) or onto a loss ('lower').
    """
    low, high = rope
    if not low < high:
        raise ValueError("rope bounds must satisfy low < high")
    if direction not in ("higher", "lower"):
        raise ValueError("direction must be 'higher' or 'lower'")
    diffs = np.asarray(list(diffs), dtype=float)
    finite = diffs[np.isfinite(diffs)]
    n_excluded = len(diffs) - len(finite)
    if n_excluded:
        log.info("bayes sign test: excluded %d non-finite differences", n_excluded)
    if len(finite) == 0:
        raise ValueError("no finite differences to test")
    counts = np.array([
        int((finite < low).sum()),
        int(((finite >= low) & (finite <= high)).sum()),
        int((finite > high).sum()),
    ], dtype=float)
    alpha = counts + prior_strength / 3.0
    rng = np.random.default_rng(seed)
    draws = rng.dirichlet(alpha, size=mc_samples)
    winner = np.argmax(draws, axis=1)
    p_below, p_inside, p_above = (np.mean(winner == k) for k in range(3))
    if direction == "higher":
        p_win, p_loss = float(p_above), float(p_below)
    else:
        p_win, p_loss = float(p_below), float(p_above)
    return BayesComparison(
        p_win=p_win, p_rope=float(p_inside), p_loss=p_loss,
        rope=(low, high), n_diffs=int(len(finite)), n_excluded=int(n_excluded),
        direction=direction,
    )


def three_way_comparison(records, rope=(-1.0, 1.0), prior_strength: float = 1.0,
                         mc_samples: int = 30_000, seed: int = 0) -> dict:
    """Posterior comparison of each family's balanced solution to the
    per-vector optima.

    For every family, the candidate on each dataset is that family's best
    average-rank record; for every vector, the baseline is the dataset's
    vector-optimal record over all families. Per-dataset percentage
    differences (candidate vs baseline) feed one sign test per
    (family, vector); keys are (family, vector name).
    """
    records = _usable(records, VECTORS.values())
    if not records:
        raise ValueError("no usable records")
    baselines = {name: select_baseline(records, vec) for name, vec in VECTORS.items()}
    families = sorted({r.family for r in records})
    out = {}
    for family in families:
        fam_records = [r for r in records if r.family == family]
        candidates = average_rank_solution(fam_records)
        for name, vec in VECTORS.items():
            diffs = []
            for ds in sorted(candidates):
                if ds not in baselines[name]:
                    continue
                diffs.append(percentage_diff(
                    candidates[ds].metric(vec), baselines[name][ds].metric(vec)
                ))
            if not any(np.isfinite(d) for d in diffs):
                # zero-valued baselines make every diff a sentinel; nothing to test
                log.warning("three-way comparison: no finite %s diffs for %s; skipped",
                            name, family)
                continue
            out[(family, name)] = bayes_sign_test(
                diffs, rope=rope, prior_strength=prior_strength,
                mc_samples=mc_samples,
                seed=derive_seed(seed, "bayes", family, name),
                direction="higher" if vec.higher_is_better else "lower",
            )
    return out


# ---------------------------------------------------------------------------
# results table IO

RESULTS_COLUMNS = ("dataset", "variant_id", "method", "params", "algorithm",
                   "fairness_method", "accuracy", "eq_odds_diff", "linkage_risk")


def write_results(records, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_COLUMNS)
        for r in records:
            writer.writerow([
                r.dataset, r.variant_id, r.method, r.params, r.algorithm,
                r.fairness_method, repr(r.accuracy),
                "" if r.eq_odds_diff is None else repr(r.eq_odds_diff),
                repr(r.linkage_risk),
            ])
    return path


def read_results(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULTS_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: results table missing columns {sorted(missing)}")
        for row in reader:
            records.append(SolutionRecord(
                dataset=row["dataset"],
                variant_id=row["variant_id"],
                method=row["method"],
                params=row["params"],
                algorithm=row["algorithm"],
                fairness_method=row["fairness_method"],
                accuracy=float(row["accuracy"]),
                eq_odds_diff=float(row["eq_odds_diff"]) if row["eq_odds_diff"] else None,
                linkage_risk=float(row["linkage_risk"]),
            ))
    return records
