"""Bagged Gini decision trees."""

import numpy as np

from ..dataset import N_CLASSES
from ..rng import SplitMix64
from .base import StandardizedClassifier


def _best_split(Xc, y, min_leaf):
    """Lowest weighted Gini split over the columns of ``Xc``.

    Returns ``(column, threshold)`` or None. Ties go to the lowest column,
    then the lowest threshold.
    """
    n = Xc.shape[0]
    order = np.argsort(Xc, axis=0, kind="stable")
    Xs = np.take_along_axis(Xc, order, axis=0)
    onehot = np.eye(N_CLASSES)[y]
    left = np.cumsum(onehot[order], axis=0)[:-1]
    right = onehot.sum(axis=0) - left
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    # n times the weighted Gini impurity of the two children
    score = ((n_left - (left * left).sum(axis=2) / n_left)
             + (n_right - (right * right).sum(axis=2) / n_right))
    valid = (Xs[1:] > Xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    score = np.where(valid, score, np.inf)
    flat = score.T.ravel()
    k = int(np.argmin(flat))
    if not np.isfinite(flat[k]):
        return None
    col, pos = divmod(k, n - 1)
    lo, hi = Xs[pos, col], Xs[pos + 1, col]
    threshold = lo + (hi - lo) / 2.0
    if not lo <= threshold < hi:
        threshold = lo
    return col, float(threshold)


class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, counts):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(-1, N_CLASSES)
        self.leaf_class = np.argmax(self.counts, axis=1)

    @property
    def n_nodes(self):
        return len(self.feature)

    def apply(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                return node
            go_left = X[rows, np.where(internal, feat, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X):
        return self.leaf_class[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["feature"], data["threshold"], data["left"], data["right"], data["counts"])


def grow_tree(X, y, rng, max_features, max_depth=None, min_samples_leaf=1):
    n_features = X.shape[1]
    n_try = min(max_features, n_features)
    feature, threshold, left, right, counts = [-1], [0.0], [-1], [-1], [None]
    stack = [(np.arange(len(y)), 0, 0)]
    while stack:
        idx, depth, node = stack.pop()
        yy = y[idx]
        node_counts = np.bincount(yy, minlength=N_CLASSES)
        counts[node] = node_counts
        if (np.count_nonzero(node_counts) <= 1
                or (max_depth is not None and depth >= max_depth)
                or len(idx) < 2 * min_samples_leaf):
            continue
        if n_try >= n_features:
            cols = np.arange(n_features)
        else:
            cols = np.sort(np.array(rng.permutation(n_features)[:n_try]))
        found = _best_split(X[np.ix_(idx, cols)], yy, min_samples_leaf)
        if found is None:
            continue
        col, thr = found
        f = int(cols[col])
        mask = X[idx, f] <= thr
        l_id, r_id = len(feature), len(feature) + 1
        for _ in range(2):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts.append(None)
        feature[node], threshold[node], left[node], right[node] = f, thr, l_id, r_id
        stack.append((idx[~mask], depth + 1, r_id))
        stack.append((idx[mask], depth + 1, l_id))
    return Tree(feature, threshold, left, right, counts)


class ForestClassifier(StandardizedClassifier):
    """Random forest of bootstrap-trained Gini trees.

    Tree ``t`` draws its bootstrap sample (and any per-node feature subsets)
    from ``SplitMix64(seed + t)``, so trees are independent of training order.
    With ``max_features`` at least the feature count every split sees every
    feature and the ensemble is plain bagging.
    """

    model_kind = "forest"

    def __init__(self, n_trees=200, max_features=63, max_depth=None, min_samples_leaf=1,
                 seed=0, standardize=True):
        self.n_trees = n_trees
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed
        self.standardize = standardize

    def _check_params(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 1 <= self.max_features <= 63:
            raise ValueError("max_features must lie in [1, 63]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def _fit(self, X, y):
        self._check_params()
        n = len(y)
        self.trees_ = []
        for t in range(self.n_trees):
            rng = SplitMix64(self.seed + t)
            boot = np.array([rng.randbelow(n) for _ in range(n)], dtype=np.int64)
            self.trees_.append(grow_tree(X[boot], y[boot], rng, self.max_features,
                                         self.max_depth, self.min_samples_leaf))

    def _votes(self, X):
        votes = np.zeros((len(X), N_CLASSES), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees_:
            np.add.at(votes, (rows, tree.predict(X)), 1)
        return votes

    def predict_votes(self, X):
        return self._votes(self._prepare(X))

    def _predict_codes(self, X):
        return np.argmax(self._votes(X), axis=1)

    def predict_proba(self, X):
        votes = self.predict_votes(X)
        return votes / votes.sum(axis=1, keepdims=True)

    def _payload(self):
        return {"trees": [t.to_dict() for t in self.trees_]}

    def _load_payload(self, payload):
        self.trees_ = [Tree.from_dict(t) for t in payload["trees"]]
