"""Classifiers over the standard hyper-parameter grids with 2x5-fold selection.

Three learner kinds: L2 logistic regression (own objective, L-BFGS-B),
random forest (scikit-learn forests converted to portable arrays) and
gradient-boosted trees (own staged recipe: initial log-odds, per-stage
regression tree on the negative gradient, Newton leaf steps). All three
accept per-row weights so they can serve as cost-sensitive base learners.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from sklearn.ensemble import RandomForestClassifier
from sklearn.tree import DecisionTreeRegressor

from .datasets import CATEGORICAL, NUMERIC, Dataset
from .seeding import derive_seed
from .trees import TreeArrays

log = logging.getLogger(__name__)

LOGIT = "logit"
RF = "rf"
BOOST = "xgb"
KINDS = (LOGIT, RF, BOOST)

GRAD_TOL = 1e-6
LEAF_VALUE_CLIP = 10.0


# ---------------------------------------------------------------------------
# encoding

@dataclass(frozen=True)
class Encoder:
    """One-hot / standardization map fitted on a training set.

    Categorical columns expand to one indicator per training-observed level
    (unseen test levels map to the all-zero group); numeric columns pass
    through raw and, in the standardized view, centered/scaled by the
    training mean and sd (ddof=0; constant columns just centered).
    """

    target: str
    source_columns: tuple
    categories: dict  # categorical column -> tuple of levels
    standardization: dict  # numeric column -> (mean, sd)
    feature_names: tuple

    @classmethod
    def fit(cls, d: Dataset) -> "Encoder":
        source = d.feature_columns
        categories = {}
        standardization = {}
        names = []
        for col in source:
            if d.kinds[col] == CATEGORICAL:
                levels = tuple(np.unique(d.df[col].to_numpy()).tolist())
                categories[col] = levels
                names.extend(f"{col}={lvl}" for lvl in levels)
            else:
                vals = d.df[col].to_numpy(dtype=float)
                sd = float(vals.std())
                standardization[col] = (float(vals.mean()), sd if sd > 0 else 1.0)
                names.append(col)
        return cls(
            target=d.target,
            source_columns=source,
            categories=categories,
            standardization=standardization,
            feature_names=tuple(names),
        )

    def transform(self, d: Dataset, standardized: bool = False) -> np.ndarray:
        blocks = []
        for col in self.source_columns:
            if col in self.categories:
                vals = d.df[col].to_numpy()
                for lvl in self.categories[col]:
                    blocks.append((vals == lvl).astype(float))
            else:
                vals = d.df[col].to_numpy(dtype=float)
                if standardized:
                    mean, sd = self.standardization[col]
                    vals = (vals - mean) / sd
                blocks.append(vals)
        return np.column_stack(blocks) if blocks else np.zeros((len(d), 0))

    def labels(self, d: Dataset) -> np.ndarray:
        y = d.df[self.target].to_numpy()
        uniq = set(np.unique(y).tolist())
        if not uniq <= {0, 1}:
            raise ValueError(f"target must be binary 0/1, saw values {sorted(uniq)}")
        return y.astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "source_columns": list(self.source_columns),
            "categories": {k: list(v) for k, v in self.categories.items()},
            "standardization": {k: list(v) for k, v in self.standardization.items()},
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        return cls(
            target=d["target"],
            source_columns=tuple(d["source_columns"]),
            categories={k: tuple(v) for k, v in d["categories"].items()},
            standardization={k: tuple(v) for k, v in d["standardization"].items()},
            feature_names=tuple(d["feature_names"]),
        )


@dataclass(frozen=True)
class FeatureMatrix:
    """Raw and standardized design matrices plus labels and optional weights."""

    X: np.ndarray
    X_std: np.ndarray
    y: np.ndarray
    weights: np.ndarray | None = None
    encoder: Encoder | None = None

    def __post_init__(self):
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if (w < 0).any() or not np.isfinite(w).all():
                raise ValueError("weights must be finite and >= 0")

    def with_labels(self, y, weights=None) -> "FeatureMatrix":
        return replace(self, y=np.asarray(y, dtype=np.int64), weights=weights)


def encode(train: Dataset, test: Dataset, protected_attr: str):
    """Fit an encoder on train, apply to both, return group vectors separately.

    The protected attribute stays among the features (the fairness-agnostic
    baseline sees it); group membership is returned as its own pair of 0/1
    vectors for fairness evaluation.
    """
    enc = Encoder.fit(train)
    fms = []
    for d in (train, test):
        fms.append(
            FeatureMatrix(
                X=enc.transform(d, standardized=False),
                X_std=enc.transform(d, standardized=True),
                y=enc.labels(d),
                encoder=enc,
            )
        )
    groups = tuple(group_vector(d, protected_attr) for d in (train, test))
    return fms[0], fms[1], groups


def group_vector(d: Dataset, protected_attr: str) -> np.ndarray:
    g = d.df[protected_attr].to_numpy()
    uniq = set(np.unique(g).tolist())
    if not uniq <= {0, 1}:
        raise ValueError(f"protected attribute {protected_attr!r} must be binarized first")
    return g.astype(np.int64)


def feature_matrix(d: Dataset, encoder: Encoder) -> FeatureMatrix:
    return FeatureMatrix(
        X=encoder.transform(d, standardized=False),
        X_std=encoder.transform(d, standardized=True),
        y=encoder.labels(d),
        encoder=encoder,
    )


# ---------------------------------------------------------------------------
# logistic regression

def logistic_objective(beta, X, y, w, C):
    """Penalized loss sum_i w_i*(log(1+e^z) - y*z) + ||coef||^2/(2C), intercept free.

    Duplicating a row and doubling its weight change the objective
    identically, which is what makes weighted training exact.
    """
    coef, intercept = beta[:-1], beta[-1]
    z = X @ coef + intercept
    val = float(np.dot(w, np.logaddexp(0.0, z) - y * z) + 0.5 / C * coef @ coef)
    r = w * (expit(z) - y)
    grad = np.concatenate([X.T @ r + coef / C, [r.sum()]])
    return val, grad


@dataclass(frozen=True)
class LogisticModel:
    coef: np.ndarray
    intercept: float
    C: float
    max_iter: int
    converged: bool

    uses_standardized = True
    supports_weights = True

    def decision(self, fm: FeatureMatrix) -> np.ndarray:
        return fm.X_std @ self.coef + self.intercept

    def predict_proba(self, fm: FeatureMatrix) -> np.ndarray:
        return expit(self.decision(fm))

    def to_dict(self) -> dict:
        return {
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "C": self.C,
            "max_iter": self.max_iter,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(
            coef=np.asarray(d["coef"], dtype=float),
            intercept=float(d["intercept"]),
            C=float(d["C"]),
            max_iter=int(d["max_iter"]),
            converged=bool(d["converged"]),
        )


def fit_logistic(fm: FeatureMatrix, C: float, max_iter: int) -> LogisticModel:
    X, y = fm.X_std, fm.y.astype(float)
    w = np.ones(len(y)) if fm.weights is None else np.asarray(fm.weights, dtype=float)
    classes = np.unique(fm.y[w > 0] if (w > 0).any() else fm.y)
    if len(classes) < 2:
        log.debug("single-class logistic fit; returning constant model")
        p = float(classes[0]) if len(classes) else 0.0
        intercept = 50.0 if p == 1.0 else -50.0
        return LogisticModel(coef=np.zeros(X.shape[1]), intercept=intercept,
                             C=C, max_iter=max_iter, converged=True)
    res = minimize(
        logistic_objective,
        x0=np.zeros(X.shape[1] + 1),
        args=(X, y, w, C),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": int(max_iter), "maxfun": int(max_iter),
                 "gtol": GRAD_TOL, "ftol": 1e-16},
    )
    return LogisticModel(
        coef=res.x[:-1],
        intercept=float(res.x[-1]),
        C=C,
        max_iter=max_iter,
        converged=bool(res.status == 0),
    )


# ---------------------------------------------------------------------------
# random forest (scikit-learn fit, portable arrays for prediction)

@dataclass(frozen=True)
class ForestModel:
    trees: tuple  # of TreeArrays with class-frequency leaf values
    classes: tuple
    n_estimators: int
    max_depth: int
    seed: int

    uses_standardized = False
    supports_weights = True

    def predict_proba(self, fm: FeatureMatrix) -> np.ndarray:
        acc = np.zeros(len(fm.X))
        if 1 not in self.classes:
            return acc
        col = self.classes.index(1)
        for tree in self.trees:
            acc += tree.predict_value(fm.X)[:, col]
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "classes": list(self.classes),
            "n_estimators": self.n_estimators,
            "max_depth": self.max_depth,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(
            trees=tuple(TreeArrays.from_dict(t) for t in d["trees"]),
            classes=tuple(d["classes"]),
            n_estimators=int(d["n_estimators"]),
            max_depth=int(d["max_depth"]),
            seed=int(d["seed"]),
        )


def fit_random_forest(fm: FeatureMatrix, n_estimators: int, max_depth: int,
                      seed: int, bootstrap: bool = True,
                      feature_subsampling: str | None = "sqrt") -> ForestModel:
    """Bagged gini CART trees; probability is the mean leaf class frequency.

    ``bootstrap=False`` with ``feature_subsampling=None`` reduces to plain
    exhaustive CART (used by the single-tree oracle checks).
    """
    clf = RandomForestClassifier(
        n_estimators=n_estimators,
        max_depth=max_depth,
        max_features=feature_subsampling,
        bootstrap=bootstrap,
        random_state=seed,
        n_jobs=1,
    )
    clf.fit(fm.X, fm.y, sample_weight=fm.weights)
    return ForestModel(
        trees=tuple(TreeArrays.from_sklearn(est.tree_) for est in clf.estimators_),
        classes=tuple(int(c) for c in clf.classes_),
        n_estimators=n_estimators,
        max_depth=max_depth,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# gradient boosting (own recipe)

def _logistic_loss(y, raw, w):
    return float(np.dot(w, np.logaddexp(0.0, raw) - y * raw) / w.sum())


@dataclass(frozen=True)
class BoostModel:
    """Staged model: raw score F0 + lr * sum of regression-tree outputs."""

    f0: float
    learning_rate: float
    trees: tuple  # of TreeArrays with Newton-step leaf values
    n_estimators: int
    max_depth: int
    staged_train_loss: tuple  # loss before any stage, then after each stage

    uses_standardized = False
    supports_weights = True

    def raw_score(self, fm: FeatureMatrix, n_stages: int | None = None) -> np.ndarray:
        raw = np.full(len(fm.X), self.f0)
        for tree in self.trees[: len(self.trees) if n_stages is None else n_stages]:
            raw += self.learning_rate * tree.predict_value(fm.X)[:, 0]
        return raw

    def predict_proba(self, fm: FeatureMatrix) -> np.ndarray:
        return expit(self.raw_score(fm))

    def to_dict(self) -> dict:
        return {
            "f0": self.f0,
            "learning_rate": self.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
            "n_estimators": self.n_estimators,
            "max_depth": self.max_depth,
            "staged_train_loss": list(self.staged_train_loss),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostModel":
        return cls(
            f0=float(d["f0"]),
            learning_rate=float(d["learning_rate"]),
            trees=tuple(TreeArrays.from_dict(t) for t in d["trees"]),
            n_estimators=int(d["n_estimators"]),
            max_depth=int(d["max_depth"]),
            staged_train_loss=tuple(d["staged_train_loss"]),
        )


def fit_boosting(fm: FeatureMatrix, n_estimators: int, max_depth: int,
                 learning_rate: float, seed: int = 0) -> BoostModel:
    """Gradient boosting on the logistic loss.

    F0 is the weighted-base-rate log-odds; each stage fits a squared-error
    regression tree to the residual y - p and replaces every leaf value with
    the Newton step sum(w*r)/sum(w*p*(1-p)) over the leaf (clipped to
    +-LEAF_VALUE_CLIP); the staged score adds lr times the tree output.
    """
    X, y = fm.X, fm.y.astype(float)
    w = np.ones(len(y)) if fm.weights is None else np.asarray(fm.weights, dtype=float)
    if w.sum() == 0:
        w = np.ones(len(y))
    p0 = float(np.clip(np.dot(w, y) / w.sum(), 1e-12, 1 - 1e-12))
    f0 = float(np.log(p0 / (1 - p0)))
    raw = np.full(len(y), f0)
    losses = [_logistic_loss(y, raw, w)]
    trees = []
    for m in range(n_estimators):
        p = expit(raw)
        residual = y - p
        hess = p * (1 - p)
        reg = DecisionTreeRegressor(max_depth=max_depth,
                                    random_state=derive_seed(seed, "stage", m) % (2**31))
        reg.fit(X, residual, sample_weight=w)
        leaf_of_row = reg.apply(X)
        leaf_values = {}
        for leaf in np.unique(leaf_of_row):
            members = leaf_of_row == leaf
            num = float(np.dot(w[members], residual[members]))
            den = float(np.dot(w[members], hess[members]))
            step = num / den if den > 1e-12 else 0.0
            leaf_values[int(leaf)] = float(np.clip(step, -LEAF_VALUE_CLIP, LEAF_VALUE_CLIP))
        tree = TreeArrays.from_sklearn(reg.tree_).with_leaf_values(leaf_values)
        trees.append(tree)
        raw = raw + learning_rate * tree.predict_value(X)[:, 0]
        losses.append(_logistic_loss(y, raw, w))
    return BoostModel(
        f0=f0,
        learning_rate=learning_rate,
        trees=tuple(trees),
        n_estimators=n_estimators,
        max_depth=max_depth,
        staged_train_loss=tuple(losses),
    )


# ---------------------------------------------------------------------------
# grids and model selection

RF_GRID = {"n_estimators": (100, 250, 500), "max_depth": (4, 7, 10)}
BOOST_GRID = {"n_estimators": (100, 250, 500), "max_depth": (4, 7, 10),
              "learning_rate": (0.1, 0.01)}
LOGIT_GRID = {"C": (0.001, 1.0, 10000.0), "max_iter": (1_000_000, 10_000_000)}


@dataclass(frozen=True)
class HyperGrid:
    kind: str
    points: tuple  # of dicts, in enumeration order

    @classmethod
    def for_kind(cls, kind: str) -> "HyperGrid":
        spec = {RF: RF_GRID, BOOST: BOOST_GRID, LOGIT: LOGIT_GRID}[kind]
        keys = list(spec)
        points = tuple(
            dict(zip(keys, combo)) for combo in itertools.product(*(spec[k] for k in keys))
        )
        return cls(kind=kind, points=points)

    @classmethod
    def single(cls, kind: str, **point) -> "HyperGrid":
        return cls(kind=kind, points=(dict(point),))


def _complexity(point: dict) -> int:
    return int(point.get("n_estimators", point.get("max_iter", 0)))


def fit_kind(kind: str, fm: FeatureMatrix, point: dict, seed: int):
    if kind == LOGIT:
        return fit_logistic(fm, C=point["C"], max_iter=point["max_iter"])
    if kind == RF:
        return fit_random_forest(fm, n_estimators=point["n_estimators"],
                                 max_depth=point["max_depth"], seed=seed % (2**31))
    if kind == BOOST:
        return fit_boosting(fm, n_estimators=point["n_estimators"],
                            max_depth=point["max_depth"],
                            learning_rate=point["learning_rate"], seed=seed)
    raise ValueError(f"unknown learner kind {kind!r}")


@dataclass(frozen=True)
class FittedModel:
    """A selected model plus the encoder that built its feature space."""

    kind: str
    params: dict
    inner: object
    encoder: Encoder | None = None
    cv_score: float | None = None
    seed: int | None = None
    flags: tuple = ()

    def predict_proba(self, fm: FeatureMatrix) -> np.ndarray:
        return self.inner.predict_proba(fm)

    def predict(self, fm: FeatureMatrix) -> np.ndarray:
        return (self.predict_proba(fm) >= 0.5).astype(np.int64)

    def score_dataset(self, d: Dataset) -> np.ndarray:
        if self.encoder is None:
            raise ValueError("model has no encoder attached")
        return self.predict_proba(feature_matrix(d, self.encoder))

    def predict_dataset(self, d: Dataset) -> np.ndarray:
        return (self.score_dataset(d) >= 0.5).astype(np.int64)


def train_logistic(fm: FeatureMatrix, C: float, max_iter: int) -> FittedModel:
    inner = fit_logistic(fm, C, max_iter)
    return FittedModel(kind=LOGIT, params={"C": C, "max_iter": max_iter},
                       inner=inner, encoder=fm.encoder)


def train_random_forest(fm: FeatureMatrix, n_estimators: int, max_depth: int,
                        seed: int, **kw) -> FittedModel:
    inner = fit_random_forest(fm, n_estimators, max_depth, seed, **kw)
    return FittedModel(kind=RF, params={"n_estimators": n_estimators, "max_depth": max_depth},
                       inner=inner, encoder=fm.encoder, seed=seed)


def train_boosting(fm: FeatureMatrix, n_estimators: int, max_depth: int,
                   learning_rate: float, seed: int = 0) -> FittedModel:
    inner = fit_boosting(fm, n_estimators, max_depth, learning_rate, seed)
    return FittedModel(
        kind=BOOST,
        params={"n_estimators": n_estimators, "max_depth": max_depth,
                "learning_rate": learning_rate},
        inner=inner, encoder=fm.encoder, seed=seed,
    )


def stratified_folds(y: np.ndarray, n_folds: int, rng) -> list:
    """Disjoint covering folds, stratified by dealing each class round-robin.

    Per class (ordered as by ``numpy.unique``): shuffle that class's row
    positions with ``rng.permutation`` and deal them to folds 0..n_folds-1 in
    turn. Fold index arrays come back sorted.
    """
    folds = [[] for _ in range(n_folds)]
    for cls in np.unique(y):
        rows = np.flatnonzero(y == cls)
        rows = rows[rng.permutation(len(rows))]
        for j, row in enumerate(rows):
            folds[j % n_folds].append(int(row))
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def grid_search(train: Dataset, kind: str, grid: HyperGrid | None = None,
                seed: int = 0, n_folds: int = 5, n_repeats: int = 2) -> FittedModel:
    """Select hyper-parameters by mean accuracy over repeated stratified CV.

    Two repetitions of 5-fold CV with shuffle seeds derived from ``seed``;
    encoders are fitted per training fold. Ties break toward fewer
    estimators/iterations, then lower grid index. A repetition whose folds
    would leave some training part without both classes is skipped (flagged).
    The winner is refitted on the full training set.
    """
    if len(train) < 10:
        raise ValueError("grid search needs at least 10 rows")
    grid = grid or HyperGrid.for_kind(kind)
    y_all = Encoder.fit(train).labels(train)
    scores = np.zeros(len(grid.points))
    n_scored = 0
    flags = []
    for rep in range(n_repeats):
        rng = np.random.default_rng(derive_seed(seed, "cv", rep))
        folds = stratified_folds(y_all, n_folds, rng)
        ok = all(
            len(np.unique(np.delete(y_all, fold))) == 2 for fold in folds
        )
        if not ok:
            flags.append(f"skipped_repetition_{rep}")
            continue
        for fold_id, fold in enumerate(folds):
            val_mask = np.zeros(len(train), dtype=bool)
            val_mask[fold] = True
            ds_tr = train.with_df(train.df.loc[~val_mask])
            ds_va = train.with_df(train.df.loc[val_mask])
            enc = Encoder.fit(ds_tr)
            fm_tr = feature_matrix(ds_tr, enc)
            fm_va = feature_matrix(ds_va, enc)
            for gi, point in enumerate(grid.points):
                model = fit_kind(kind, fm_tr, point,
                                 seed=derive_seed(seed, "cvfit", rep, fold_id, gi))
                pred = (model.predict_proba(fm_va) >= 0.5).astype(np.int64)
                scores[gi] += float((pred == fm_va.y).mean())
            n_scored += 1
    if n_scored == 0:
        raise ValueError("all CV repetitions degenerate; cannot select a model")
    means = scores / n_scored
    best = min(
        range(len(grid.points)),
        key=lambda i: (-means[i], _complexity(grid.points[i]), i),
    )
    point = grid.points[best]
    enc = Encoder.fit(train)
    fm = feature_matrix(train, enc)
    inner = fit_kind(kind, fm, point, seed=derive_seed(seed, "final"))
    return FittedModel(
        kind=kind, params=dict(point), inner=inner, encoder=enc,
        cv_score=float(means[best]), seed=seed, flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# model records (structured text persistence)

_INNER_TYPES = {
    "LogisticModel": LogisticModel,
    "ForestModel": ForestModel,
    "BoostModel": BoostModel,
}


def _inner_to_dict(inner) -> dict:
    name = type(inner).__name__
    if name in _INNER_TYPES:
        return {"type": name, "data": inner.to_dict()}
    if name == "EgMixture":  # defined in fairness module; avoid circular import
        return {"type": name, "data": inner.to_dict()}
    raise ValueError(f"cannot serialize inner model {name}")


def _inner_from_dict(d: dict):
    name = d["type"]
    if name in _INNER_TYPES:
        return _INNER_TYPES[name].from_dict(d["data"])
    if name == "EgMixture":
        from .fairness import EgMixture

        return EgMixture.from_dict(d["data"])
    raise ValueError(f"unknown inner model type {name}")


def save_model(model: FittedModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "format": "triobench-model/1",
        "kind": model.kind,
        "params": model.params,
        "cv_score": model.cv_score,
        "seed": model.seed,
        "flags": list(model.flags),
        "encoder": model.encoder.to_dict() if model.encoder else None,
        "inner": _inner_to_dict(model.inner),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True)
        fh.write("\n")
    return path


def load_model(path) -> FittedModel:
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("format") != "triobench-model/1":
        raise ValueError(f"{path}: not a model record")
    return FittedModel(
        kind=record["kind"],
        params=record["params"],
        inner=_inner_from_dict(record["inner"]),
        encoder=Encoder.from_dict(record["encoder"]) if record["encoder"] else None,
        cv_score=record["cv_score"],
        seed=record["seed"],
        flags=tuple(record["flags"]),
    )
