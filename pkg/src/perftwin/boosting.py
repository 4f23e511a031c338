"""Multi-output gradient-boosted regression trees (squared error, exact splits).

A plain stagewise GBDT: every tree is fitted to the current residual matrix,
splits minimise the per-node squared error summed over all outputs, and leaf
vectors are the mean residual scaled by the learning rate.  It stands in for
a commodity boosting library; there is no ordered boosting, no categorical
handling and no early stopping.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyTrainingSet, ShapeMismatch

FORMAT = "perftwin-gbdt"
VERSION = 1


@dataclass(frozen=True)
class BoostParams:
    n_iterations: int = 5000
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 1
    seed: int = 42  # recorded only: exact split search draws no random numbers

    def __post_init__(self):
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class Tree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_outputs)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            go_left = X[rows, np.maximum(f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)


def _best_split(Xn: np.ndarray, Rn: np.ndarray, min_leaf: int):
    """Best (feature, threshold, split position) or None.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    n, d = Xn.shape
    if n < 2 * min_leaf or n < 2:
        return None
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    left_sum = np.cumsum(Rn[order], axis=0)[:-1]  # (n-1, d, n_outputs)
    total = Rn.sum(axis=0)
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    gain = (
        np.einsum("ijk,ijk->ij", left_sum, left_sum) / n_left
        + np.square(total - left_sum).sum(axis=-1) / n_right
        - total @ total / n
    )
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    flat = gain.T.ravel()
    best = int(np.argmax(flat))
    scale = max(float(np.square(Rn).sum()), 1.0)
    if not np.isfinite(flat[best]) or flat[best] <= 1e-12 * scale:
        return None
    f, pos = divmod(best, n - 1)
    lo, hi = xs[pos, f], xs[pos + 1, f]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return f, float(thr)


def fit_tree(X: np.ndarray, R: np.ndarray, max_depth: int, min_samples_leaf: int, learning_rate: float):
    """Fit one tree to residuals ``R``; returns the tree and its training-row leaf values."""
    feature, threshold, left, right, value = [], [], [], [], []
    fitted = np.empty_like(R)

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(None)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        split = _best_split(X[idx], R[idx], min_samples_leaf) if depth < max_depth else None
        if split is None:
            leaf = learning_rate * R[idx].mean(axis=0)
            value[node] = leaf
            fitted[idx] = leaf
            continue
        f, thr = split
        mask = X[idx, f] <= thr
        l, r = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = f, thr, l, r
        value[node] = np.zeros(R.shape[1])
        # push right first so the left subtree is numbered first
        stack.append((r, idx[~mask], depth + 1))
        stack.append((l, idx[mask], depth + 1))

    tree = Tree(
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(value, dtype=float).reshape(len(feature), R.shape[1]),
    )
    return tree, fitted


@dataclass(frozen=True, eq=False)
class TreeEnsemble:
    base_prediction: np.ndarray
    trees: tuple
    n_features: int
    params: BoostParams = field(default_factory=BoostParams)
    loss_history: tuple = ()

    @property
    def n_outputs(self) -> int:
        return len(self.base_prediction)

    def __post_init__(self):
        # all trees flattened into one node table so prediction walks every
        # tree at once
        feats, thrs, lefts, rights, vals, roots = [], [], [], [], [], []
        offset = 0
        for t in self.trees:
            roots.append(offset)
            feats.append(t.feature)
            thrs.append(t.threshold)
            lefts.append(np.where(t.left >= 0, t.left + offset, -1))
            rights.append(np.where(t.right >= 0, t.right + offset, -1))
            vals.append(t.value)
            offset += len(t.feature)
        empty_i = np.empty(0, dtype=np.intp)
        object.__setattr__(self, "_flat", (
            np.concatenate(feats) if feats else empty_i,
            np.concatenate(thrs) if thrs else np.empty(0),
            np.concatenate(lefts) if lefts else empty_i,
            np.concatenate(rights) if rights else empty_i,
            np.concatenate(vals) if vals else np.empty((0, self.n_outputs)),
            np.array(roots, dtype=np.intp),
        ))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.tile(self.base_prediction, (len(X), 1))
        feat, thr, left, right, val, roots = self._flat
        if len(roots):
            node = np.broadcast_to(roots, (len(X), len(roots))).copy()
            rows = np.arange(len(X))[:, None]
            while True:
                f = feat[node]
                inner = f >= 0
                if not inner.any():
                    break
                go_left = X[rows, np.maximum(f, 0)] <= thr[node]
                node = np.where(inner, np.where(go_left, left[node], right[node]), node)
            # sum tree by tree for an order matching fit-time accumulation
            leaf_vals = val[node]  # (rows, trees, outputs)
            for t in range(leaf_vals.shape[1]):
                out += leaf_vals[:, t]
        return out[0] if single else out

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "n_features": self.n_features,
            "n_outputs": self.n_outputs,
            "params": asdict(self.params),
            "base_prediction": self.base_prediction.tolist(),
            "loss_history": list(self.loss_history),
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        if d.get("format") != FORMAT:
            raise ValueError(f"not a {FORMAT} document")
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported {FORMAT} version {d.get('version')}")
        n_out = d["n_outputs"]
        trees = tuple(
            Tree(
                np.array(t["feature"], dtype=np.intp),
                np.array(t["threshold"], dtype=float),
                np.array(t["left"], dtype=np.intp),
                np.array(t["right"], dtype=np.intp),
                np.array(t["value"], dtype=float).reshape(-1, n_out),
            )
            for t in d["trees"]
        )
        return cls(
            np.array(d["base_prediction"], dtype=float),
            trees,
            d["n_features"],
            BoostParams(**d["params"]),
            tuple(d.get("loss_history", ())),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "TreeEnsemble":
        return cls.from_dict(json.loads(text))


def multi_rmse(Y: np.ndarray, P: np.ndarray) -> float:
    """Root of the per-row squared error summed over outputs."""
    return float(np.sqrt(np.square(Y - P).sum(axis=1).mean()))


def fit_ensemble(X, Y, params: BoostParams = BoostParams()) -> TreeEnsemble:
    """Greedy stagewise fit of ``params.n_iterations`` trees to ``(X, Y)``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2:
        raise ShapeMismatch("X and Y must be 2-D")
    if len(X) != len(Y):
        raise ShapeMismatch(f"X has {len(X)} rows but Y has {len(Y)}")
    if len(X) == 0:
        raise EmptyTrainingSet("no training rows")

    base = Y.mean(axis=0)
    pred = np.tile(base, (len(Y), 1))
    losses = [float(np.square(Y - pred).sum(axis=1).mean())]
    trees = []
    for _ in range(params.n_iterations):
        residual = Y - pred
        tree, fitted = fit_tree(X, residual, params.max_depth, params.min_samples_leaf, params.learning_rate)
        trees.append(tree)
        pred = pred + fitted
        losses.append(float(np.square(Y - pred).sum(axis=1).mean()))
    return TreeEnsemble(base, tuple(trees), X.shape[1], params, tuple(losses))


def predict_ensemble(e: TreeEnsemble, x) -> np.ndarray:
    return e.predict(x)


def grid_search(
    X_train, Y_train, X_val, Y_val,
    depths: Sequence[int] = (2, 4, 6, 8),
    learning_rates: Sequence[float] = (0.01, 0.05, 0.1),
    base: BoostParams = BoostParams(),
):
    """Pick depth and learning rate by validation MultiRMSE.

    Returns ``(best_params, scores)`` where ``scores`` maps (depth, lr) to the
    validation error.
    """
    scores = {}
    best: Optional[tuple] = None
    for depth, lr in itertools.product(depths, learning_rates):
        params = BoostParams(base.n_iterations, lr, depth, base.min_samples_leaf, base.seed)
        model = fit_ensemble(X_train, Y_train, params)
        err = multi_rmse(np.asarray(Y_val, dtype=float), model.predict(X_val))
        scores[(depth, lr)] = err
        if best is None or err < best[0]:
            best = (err, params)
    return best[1], scores
