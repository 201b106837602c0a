"""Array-encoded binary decision trees with an sklearn-compatible traversal.

Fitted ensembles are converted into this form right after training so that
prediction is a pure function of plain arrays and models round-trip through
JSON text records without loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True)
class TreeArrays:
    """One tree: node i sends ``x[feature[i]] <= threshold[i]`` to
    ``children_left[i]``, else to ``children_right[i]``; leaves carry a value
    row (class distribution for classifiers, a scalar for regressors)."""

    children_left: np.ndarray
    children_right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray  # (n_nodes, value_dim)

    @classmethod
    def from_sklearn(cls, tree) -> "TreeArrays":
        """Convert a fitted ``sklearn.tree`` structure (``.tree_``)."""
        value = tree.value.reshape(tree.node_count, -1).astype(float).copy()
        # classifier values are (weighted) class counts; normalize to frequencies
        if value.shape[1] > 1:
            value = value / value.sum(axis=1, keepdims=True)
        return cls(
            children_left=tree.children_left.astype(np.int64).copy(),
            children_right=tree.children_right.astype(np.int64).copy(),
            feature=tree.feature.astype(np.int64).copy(),
            threshold=tree.threshold.astype(float).copy(),
            value=value,
        )

    def leaf_ids(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            left = self.children_left[node]
            active = left != LEAF
            if not active.any():
                return node
            rows = np.flatnonzero(active)
            feats = self.feature[node[rows]]
            thresh = self.threshold[node[rows]]
            go_left = X[rows, feats] <= thresh
            node[rows] = np.where(go_left, left[rows], self.children_right[node[rows]])

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.leaf_ids(X)]

    def with_leaf_values(self, leaf_values: dict) -> "TreeArrays":
        """New tree with leaf node values overwritten (regression trees)."""
        value = self.value.copy()
        for node, val in leaf_values.items():
            value[node, 0] = val
        return TreeArrays(
            children_left=self.children_left,
            children_right=self.children_right,
            feature=self.feature,
            threshold=self.threshold,
            value=value,
        )

    def to_dict(self) -> dict:
        return {
            "children_left": self.children_left.tolist(),
            "children_right": self.children_right.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeArrays":
        return cls(
            children_left=np.asarray(d["children_left"], dtype=np.int64),
            children_right=np.asarray(d["children_right"], dtype=np.int64),
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            value=np.asarray(d["value"], dtype=float),
        )
