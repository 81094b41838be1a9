"""CART on binary features and a bagged random forest with Gini importance."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..errors import ModelFormatError, RadpipeError


@dataclass(frozen=True)
class Leaf:
    cls: int
    counts: tuple[int, int]


@dataclass(frozen=True)
class Split:
    feature: int
    left: "Node"   # x[feature] == 0
    right: "Node"  # x[feature] == 1
    impurity_decrease: float
    n_samples: int


Node = Union[Leaf, Split]


def _gini(n0, n1):
    # callers only pass non-empty children
    n = n0 + n1
    p0, p1 = n0 / n, n1 / n
    return 1.0 - p0 * p0 - p1 * p1


def _leaf(y: np.ndarray) -> Leaf:
    n1 = int(y.sum())
    n0 = len(y) - n1
    return Leaf(1 if n1 > n0 else 0, (n0, n1))


def _check(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X has shape {X.shape} but y has {y.shape[0]} entries")
    if X.shape[0] == 0:
        raise RadpipeError("cannot fit a tree on empty data")
    if not np.isin(X, (0, 1)).all() or not np.isin(y, (0, 1)).all():
        raise ValueError("tree learners need 0/1 features and labels")
    return X.astype(np.uint8), y.astype(np.int64)


def fit_tree(X, y, max_depth: int | None = None, min_samples_split: int = 2,
             rng: np.random.Generator | None = None, mtry: int | None = None,
             accept_zero_gain: bool = True) -> Node:
    """Grow a CART tree on 0/1 features.

    At each node the split with the largest Gini decrease wins, ties going to
    the lowest feature index. When ``rng`` and ``mtry`` are given, only
    ``mtry`` features drawn from those not constant in the node are scored.
    With ``accept_zero_gain`` an impure node whose best decrease is zero still
    splits on the first feature that separates its rows; this lets
    unlimited-depth trees fit any conflict-free training set (XOR included).
    """
    X, y = _check(X, y)
    if min_samples_split < 2:
        raise ValueError("min_samples_split must be >= 2")
    if mtry is not None and rng is None:
        raise ValueError("feature subsampling needs an rng")
    Xf = X.astype(np.float64)

    def grow(idx: np.ndarray, depth: int) -> Node:
        yi = y[idx]
        n = len(idx)
        n1 = int(yi.sum())
        if n1 == 0 or n1 == n or n < min_samples_split or (max_depth is not None and depth >= max_depth):
            return _leaf(yi)
        Xi = Xf[idx]
        right_n = Xi.sum(axis=0)
        cand = np.flatnonzero((right_n > 0) & (right_n < n))
        if len(cand) == 0:
            return _leaf(yi)
        if mtry is not None and mtry < len(cand):
            cand = np.sort(rng.choice(cand, size=mtry, replace=False))
        right_1 = yi.astype(np.float64) @ Xi[:, cand]
        right_0 = right_n[cand] - right_1
        left_1 = n1 - right_1
        left_0 = (n - n1) - right_0
        nl = left_0 + left_1
        nr = right_0 + right_1
        parent = 1.0 - (n1 / n) ** 2 - ((n - n1) / n) ** 2
        gain = parent - (nl / n) * _gini(left_0, left_1) - (nr / n) * _gini(right_0, right_1)
        gain = np.round(gain, 12)
        best = int(np.argmax(gain))
        if gain[best] <= 0.0:
            if not accept_zero_gain:
                return _leaf(yi)
            best = 0
        f = int(cand[best])
        mask = X[idx, f] == 1
        return Split(f, grow(idx[~mask], depth + 1), grow(idx[mask], depth + 1),
                     float(max(gain[best], 0.0)), n)

    return grow(np.arange(X.shape[0]), 0)


def predict_tree(node: Node, X) -> np.ndarray:
    X = np.asarray(X)
    out = np.zeros(X.shape[0], dtype=np.int64)

    def walk(nd: Node, idx: np.ndarray) -> None:
        if not len(idx):
            return
        if isinstance(nd, Leaf):
            out[idx] = nd.cls
            return
        mask = X[idx, nd.feature] == 1
        walk(nd.left, idx[~mask])
        walk(nd.right, idx[mask])

    walk(node, np.arange(X.shape[0]))
    return out


def tree_importances(node: Node, n_features: int) -> np.ndarray:
    """Unnormalized sample-weighted impurity decrease per feature."""
    imp = np.zeros(n_features)
    total = node.n_samples if isinstance(node, Split) else sum(node.counts)
    stack = [node]
    while stack:
        nd = stack.pop()
        if isinstance(nd, Split):
            imp[nd.feature] += nd.n_samples / total * nd.impurity_decrease
            stack.extend((nd.right, nd.left))
    return imp


def tree_depth(node: Node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


# -- forest --------------------------------------------------------------

@dataclass
class Forest:
    trees: list[Node]
    seeds: list[int]
    mtry: int
    n_features: int
    importances: np.ndarray

    def votes(self, X) -> np.ndarray:
        X = np.asarray(X)
        return np.stack([predict_tree(t, X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        ones = self.votes(X).sum(axis=0)
        return (2 * ones > len(self.trees)).astype(np.int64)


def default_mtry(p: int) -> int:
    return max(1, math.ceil(math.sqrt(p)))


def fit_forest(X, y, n_trees: int = 100, mtry: int | None = None, max_depth: int | None = None,
               seed: int = 0, bootstrap: bool = True, min_samples_split: int = 2,
               n_jobs: int = 1) -> Forest:
    """Bagged CART trees; tree ``i`` draws its rows and split features from seed ``seed + i``.

    Trees are independent, so ``n_jobs > 1`` grows them on a thread pool and
    yields exactly the sequential result.
    """
    X, y = _check(X, y)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n, p = X.shape
    m = default_mtry(p) if mtry is None else int(mtry)
    if not 1 <= m <= max(p, 1):
        raise ValueError(f"mtry must be in [1, {p}], got {m}")
    seeds = [seed + i for i in range(n_trees)]

    def one(s: int) -> Node:
        rng = np.random.default_rng(s)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        return fit_tree(X[rows], y[rows], max_depth=max_depth, min_samples_split=min_samples_split,
                        rng=rng, mtry=m if m < p else None)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(one, seeds))
    else:
        trees = [one(s) for s in seeds]
    imp = np.zeros(p)
    for t in trees:
        imp += tree_importances(t, p)
    total = imp.sum()
    if total > 0:
        imp = imp / total
    return Forest(trees, seeds, m, p, imp)


# -- flat encoding for model files ---------------------------------------

def tree_to_doc(node: Node) -> dict:
    """Preorder arrays; ``feature == -1`` marks a leaf."""
    cols: dict[str, list] = {"feature": [], "left": [], "right": [], "cls": [],
                             "n0": [], "n1": [], "gain": [], "n_samples": []}

    def emit(nd: Node) -> int:
        i = len(cols["feature"])
        for k in cols:
            cols[k].append(0)
        if isinstance(nd, Leaf):
            cols["feature"][i] = -1
            cols["cls"][i] = nd.cls
            cols["n0"][i], cols["n1"][i] = nd.counts
            cols["gain"][i] = 0.0
            cols["n_samples"][i] = sum(nd.counts)
        else:
            cols["feature"][i] = nd.feature
            cols["gain"][i] = nd.impurity_decrease
            cols["n_samples"][i] = nd.n_samples
            cols["left"][i] = emit(nd.left)
            cols["right"][i] = emit(nd.right)
        return i

    emit(node)
    cols["gain"] = [float(g) for g in cols["gain"]]
    return cols


def tree_from_doc(doc: dict) -> Node:
    try:
        feat = doc["feature"]

        def build(i: int) -> Node:
            if feat[i] == -1:
                return Leaf(int(doc["cls"][i]), (int(doc["n0"][i]), int(doc["n1"][i])))
            return Split(int(feat[i]), build(doc["left"][i]), build(doc["right"][i]),
                         float(doc["gain"][i]), int(doc["n_samples"][i]))

        return build(0)
    except (KeyError, IndexError, TypeError) as exc:
        raise ModelFormatError(f"malformed tree: {exc}") from None
