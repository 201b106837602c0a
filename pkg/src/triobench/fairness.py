"""Group fairness metrics and the exponentiated-gradient reduction.

Metrics operate on per-row (predicted label, true label, group) triples with
binary groups, 1 = privileged. The in-processing path reduces constrained
classification to a sequence of cost-sensitive problems solved by any
weight-capable learner, with multiplicative updates on the constraint
multipliers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .learning import (
    BOOST,
    LOGIT,
    RF,
    BoostModel,
    FeatureMatrix,
    FittedModel,
    ForestModel,
    LogisticModel,
    fit_boosting,
    fit_logistic,
    fit_random_forest,
)
from .seeding import derive_seed

log = logging.getLogger(__name__)

EQUALIZED_ODDS = "eo"
DEMOGRAPHIC_PARITY = "dp"


class UndefinedMetricError(ValueError):
    """A conditioning cell needed by a fairness rate is empty."""


@dataclass(frozen=True)
class GroupedPredictions:
    y_pred: np.ndarray
    y_true: np.ndarray
    group: np.ndarray

    def __post_init__(self):
        for name in ("y_pred", "y_true", "group"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if not set(np.unique(arr).tolist()) <= {0, 1}:
                raise ValueError(f"{name} must be binary 0/1")
            object.__setattr__(self, name, arr)
        if not (len(self.y_pred) == len(self.y_true) == len(self.group)):
            raise ValueError("prediction, label and group vectors differ in length")


def _rate(pred, mask, cell: str) -> float:
    if not mask.any():
        raise UndefinedMetricError(f"empty cell: {cell}")
    return float(pred[mask].mean())


def demographic_parity_diff(p: GroupedPredictions) -> float:
    """|P(pred=1 | group=1) - P(pred=1 | group=0)|."""
    r1 = _rate(p.y_pred, p.group == 1, "group=1")
    r0 = _rate(p.y_pred, p.group == 0, "group=0")
    return abs(r1 - r0)


@dataclass(frozen=True)
class FairnessReport:
    demographic_parity_diff: float
    tpr_diff: float
    fpr_diff: float
    equalized_odds_diff: float
    rates: dict  # rate kind -> {group: value}

    def __post_init__(self):
        assert self.equalized_odds_diff == max(self.tpr_diff, self.fpr_diff)


def equalized_odds_diff(p: GroupedPredictions) -> FairnessReport:
    """Absolute TPR and FPR gaps; the scalar is the larger of the two."""
    tpr = {g: _rate(p.y_pred, (p.group == g) & (p.y_true == 1), f"group={g},label=1")
           for g in (0, 1)}
    fpr = {g: _rate(p.y_pred, (p.group == g) & (p.y_true == 0), f"group={g},label=0")
           for g in (0, 1)}
    sel = {g: _rate(p.y_pred, p.group == g, f"group={g}") for g in (0, 1)}
    tpr_diff = abs(tpr[1] - tpr[0])
    fpr_diff = abs(fpr[1] - fpr[0])
    return FairnessReport(
        demographic_parity_diff=abs(sel[1] - sel[0]),
        tpr_diff=tpr_diff,
        fpr_diff=fpr_diff,
        equalized_odds_diff=max(tpr_diff, fpr_diff),
        rates={"selection_rate": sel, "tpr": tpr, "fpr": fpr},
    )


# ---------------------------------------------------------------------------
# exponentiated gradient

@dataclass(frozen=True)
class EgParams:
    constraint: str = EQUALIZED_ODDS
    eps: float = 0.01
    max_iter: int = 50
    eta: float = 2.0
    bound: float = 100.0  # cap on the l1 mass of the multipliers
    base_kind: str = LOGIT
    base_params: dict = field(default_factory=lambda: {"C": 1.0, "max_iter": 1_000_000})
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.constraint not in (EQUALIZED_ODDS, DEMOGRAPHIC_PARITY):
            raise ValueError(f"unknown constraint {self.constraint!r}")


def _moment_matrix(y: np.ndarray, g: np.ndarray, constraint: str):
    """Per-example coefficients of each signed constraint in P(pred=1) terms.

    Column k holds d(violation_k)/d(h_i): for the '+' side of event e,
    1/|e|*1{i in e} - 1/|base|*1{i in base}; the '-' side is its negation.
    Events are (group, label) cells for equalized odds and groups for
    demographic parity; the base is the matching label slice or everything.
    """
    n = len(y)
    cols, names = [], []
    if constraint == EQUALIZED_ODDS:
        events = [((g == a) & (y == v), y == v, f"g{a}y{v}")
                  for a in (0, 1) for v in (0, 1)]
    else:
        everything = np.ones(n, dtype=bool)
        events = [((g == a), everything, f"g{a}") for a in (0, 1)]
    for cond, base, name in events:
        if not cond.any():
            raise UndefinedMetricError(f"empty cell for constraint event {name}")
        mu = cond / cond.sum() - base / base.sum()
        cols.extend([mu, -mu])
        names.extend([f"{name}+", f"{name}-"])
    return np.column_stack(cols), names


_BASE_FITTERS = {
    LOGIT: lambda fm, params, seed: fit_logistic(
        fm, C=params.get("C", 1.0), max_iter=params.get("max_iter", 1_000_000)),
    RF: lambda fm, params, seed: fit_random_forest(
        fm, n_estimators=params.get("n_estimators", 100),
        max_depth=params.get("max_depth", 7), seed=seed % (2**31)),
    BOOST: lambda fm, params, seed: fit_boosting(
        fm, n_estimators=params.get("n_estimators", 100),
        max_depth=params.get("max_depth", 7),
        learning_rate=params.get("learning_rate", 0.1), seed=seed),
}


@dataclass(frozen=True)
class EgMixture:
    """Uniform mixture over the best prefix of cost-sensitive fits.

    Prediction uses the expected probability (mean of member probabilities),
    keeping evaluation deterministic.
    """

    members: tuple
    violation: float
    feasible: bool
    constraint: str
    eps: float
    history: dict  # per-round diagnostics

    uses_standardized = False  # members pick their own view
    supports_weights = False

    def predict_proba(self, fm: FeatureMatrix) -> np.ndarray:
        probs = np.stack([m.predict_proba(fm) for m in self.members])
        return probs.mean(axis=0)

    def to_dict(self) -> dict:
        member_types = {LogisticModel: "LogisticModel", ForestModel: "ForestModel",
                        BoostModel: "BoostModel"}
        return {
            "members": [
                {"type": member_types[type(m)], "data": m.to_dict()} for m in self.members
            ],
            "violation": self.violation,
            "feasible": self.feasible,
            "constraint": self.constraint,
            "eps": self.eps,
            "history": {k: list(v) for k, v in self.history.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EgMixture":
        types = {"LogisticModel": LogisticModel, "ForestModel": ForestModel,
                 "BoostModel": BoostModel}
        return cls(
            members=tuple(types[m["type"]].from_dict(m["data"]) for m in d["members"]),
            violation=float(d["violation"]),
            feasible=bool(d["feasible"]),
            constraint=d["constraint"],
            eps=float(d["eps"]),
            history={k: list(v) for k, v in d["history"].items()},
        )


def exponentiated_gradient(fm: FeatureMatrix, groups: np.ndarray,
                           params: EgParams) -> FittedModel:
    """Fairness-constrained training by multiplicative-weight reduction.

    Each round: form multipliers lambda from exponentiated cumulative
    violations (capped at ``bound`` with a slack coordinate), translate the
    Lagrangian into per-example costs of predicting 1, fit the base learner on
    the induced relabeled/reweighted problem, then push the multipliers along
    the new classifier's violations. The returned model is the uniform mixture
    over the prefix with the lowest randomized error among those whose maximum
    violation is within eps (or the lowest-violation prefix when none is,
    flagged as infeasible).
    """
    g = np.asarray(groups, dtype=np.int64)
    if not set(np.unique(g).tolist()) <= {0, 1} or len(set(np.unique(g))) < 2:
        raise ValueError("need both groups present, coded 0/1")
    y = fm.y.astype(float)
    n = len(y)
    M, names = _moment_matrix(fm.y, g, params.constraint)
    K = M.shape[1]
    fit_base = _BASE_FITTERS[params.base_kind]

    theta = np.zeros(K)
    members, gammas, errors = [], [], []
    lambda_history, viol_history = [], []
    for t in range(params.max_iter):
        shift = max(0.0, float(theta.max()))
        expth = np.exp(theta - shift)
        lam = params.bound * expth / (np.exp(-shift) + expth.sum())
        lambda_history.append(lam)
        # cost of predicting 1 minus cost of predicting 0, per example
        costs = (1.0 - 2.0 * y) / n + M @ lam
        relabel = (costs < 0).astype(np.int64)
        weights = np.abs(costs) * n
        if weights.max() <= 0:
            weights = np.ones(n)
        sub = fm.with_labels(relabel, weights=weights)
        model = fit_base(sub, params.base_params,
                         derive_seed(params.seed, "eg", t))
        h = (model.predict_proba(fm) >= 0.5).astype(float)
        gam = h @ M
        members.append(model)
        gammas.append(gam)
        errors.append(float(np.mean(h != y)))
        # step on the scale of the multiplier bound; raw eta overshoots badly
        theta = theta + (params.eta / params.bound) * (gam - params.eps)

    G = np.cumsum(np.stack(gammas), axis=0) / np.arange(1, len(gammas) + 1)[:, None]
    E = np.cumsum(errors) / np.arange(1, len(errors) + 1)
    viols = G.max(axis=1)
    viol_history = viols.tolist()
    feasible = viols <= params.eps
    if feasible.any():
        candidates = np.flatnonzero(feasible)
        best = int(candidates[np.argmin(E[candidates])])
        is_feasible = True
    else:
        best = int(np.argmin(viols))
        is_feasible = False
        log.warning("exponentiated gradient exhausted %d rounds with violation %.4f > eps %.4f",
                    params.max_iter, viols[best], params.eps)
    mixture = EgMixture(
        members=tuple(members[: best + 1]),
        violation=float(viols[best]),
        feasible=is_feasible,
        constraint=params.constraint,
        eps=params.eps,
        history={
            "violation": viol_history,
            "randomized_error": E.tolist(),
            "lambda_max": [float(l.max()) for l in lambda_history],
            "lambda_min": [float(l.min()) for l in lambda_history],
        },
    )
    return FittedModel(
        kind="eg",
        params={"constraint": params.constraint, "eps": params.eps,
                "max_iter": params.max_iter, "eta": params.eta,
                "base_kind": params.base_kind, "base_params": dict(params.base_params)},
        inner=mixture,
        encoder=fm.encoder,
        seed=params.seed,
        flags=() if is_feasible else ("constraint_not_met",),
    )
