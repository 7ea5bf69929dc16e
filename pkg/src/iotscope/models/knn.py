"""k-nearest-neighbour classification with brute-force and k-d tree search."""

import heapq

import numpy as np

from ..dataset import N_CLASSES
from ..exceptions import TooFewSamples
from .base import StandardizedClassifier

KDTREE_MAX_DIMS = 20


def minkowski_distances(X, q, p):
    """Distances from ``q`` to every row of ``X``.

    Both search strategies go through this function so equal inputs give
    bit-identical distances and identical tie-breaking.
    """
    return np.sum(np.abs(X - q) ** p, axis=1) ** (1.0 / p)


def brute_force_neighbors(X, q, k, p):
    d = minkowski_distances(X, q, p)
    order = np.argsort(d, kind="stable")[:k]
    return d[order], order


class KDTree:
    def __init__(self, X, leaf_size=16):
        self.X = X
        self.leaf_size = leaf_size
        # node: (indices) for leaves, (dim, split_value, left, right) otherwise
        self.root = self._build(np.arange(len(X)))

    def _build(self, idx):
        if len(idx) <= self.leaf_size:
            return ("leaf", idx)
        pts = self.X[idx]
        dim = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        order = np.argsort(pts[:, dim], kind="stable")
        mid = len(idx) // 2
        split = float(pts[order[mid], dim])
        left = idx[order[:mid]]
        right = idx[order[mid:]]
        return ("node", dim, split, self._build(left), self._build(right))

    def query(self, q, k, p):
        heap = []  # entries (-dist, -index): the root is the current worst neighbour

        def worst():
            return (-heap[0][0], -heap[0][1])

        def visit(node):
            if node[0] == "leaf":
                idx = node[1]
                dists = minkowski_distances(self.X[idx], q, p)
                for d, i in zip(dists.tolist(), idx.tolist()):
                    if len(heap) < k:
                        heapq.heappush(heap, (-d, -i))
                    elif (d, i) < worst():
                        heapq.heapreplace(heap, (-d, -i))
                return
            _, dim, split, left, right = node
            diff = q[dim] - split
            near, far = (left, right) if diff < 0 else (right, left)
            visit(near)
            # equal bound may still hide an equal distance with a lower index;
            # the slack absorbs rounding in the pow/root of the distance
            if len(heap) < k or abs(diff) * (1.0 - 1e-12) <= worst()[0]:
                visit(far)

        visit(self.root)
        found = sorted((-d, -i) for d, i in heap)
        return np.array([d for d, _ in found]), np.array([i for _, i in found], dtype=np.int64)


class KNNClassifier(StandardizedClassifier):
    """Uniform-weight k-NN over standardised features.

    Neighbours are ranked by Minkowski distance with ties to the lower
    training index; the vote goes to the most frequent class, then to the
    smaller summed neighbour distance, then to the lower class code.
    ``algorithm='auto'`` uses a k-d tree for at most 20 features and brute
    force otherwise.
    """

    model_kind = "knn"

    def __init__(self, k=5, weights="uniform", algorithm="auto", p=2.0, standardize=True):
        self.k = k
        self.weights = weights
        self.algorithm = algorithm
        self.p = p
        self.standardize = standardize

    def _fit(self, X, y):
        if self.weights != "uniform":
            raise ValueError("only uniform weights are supported")
        if self.p < 1:
            raise ValueError("Minkowski p must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if len(y) < self.k:
            raise TooFewSamples(f"{len(y)} training samples for k={self.k}")
        self.X_ = X
        self.y_ = y
        self._build_index()

    def _build_index(self):
        algo = self.algorithm
        if algo == "auto":
            algo = "kd_tree" if self.X_.shape[1] <= KDTREE_MAX_DIMS else "brute"
        if algo not in ("kd_tree", "brute"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        self.algorithm_ = algo
        self.tree_ = KDTree(self.X_) if algo == "kd_tree" else None

    @property
    def n_samples_fit_(self):
        return len(self.y_)

    def _query(self, q):
        if self.tree_ is not None:
            return self.tree_.query(q, self.k, self.p)
        return brute_force_neighbors(self.X_, q, self.k, self.p)

    def _kneighbors(self, X):
        dist = np.empty((len(X), self.k))
        ind = np.empty((len(X), self.k), dtype=np.int64)
        for r, q in enumerate(X):
            dist[r], ind[r] = self._query(q)
        return dist, ind

    def kneighbors(self, X):
        return self._kneighbors(self._prepare(X))

    def _vote(self, dist, ind):
        labels = self.y_[ind]
        counts = np.bincount(labels, minlength=N_CLASSES)
        sums = np.bincount(labels, weights=dist, minlength=N_CLASSES)
        best = max(range(N_CLASSES), key=lambda c: (counts[c], -sums[c], -c))
        return best

    def _predict_codes(self, X):
        dist, ind = self._kneighbors(X)
        return np.array([self._vote(d, i) for d, i in zip(dist, ind)], dtype=np.int64)

    def predict_proba(self, X):
        _, ind = self.kneighbors(X)
        labels = self.y_[ind]
        return np.stack([np.bincount(r, minlength=N_CLASSES) for r in labels]) / self.k

    def _payload(self):
        return {"X": self.X_.tolist(), "y": self.y_.tolist()}

    def _load_payload(self, payload):
        self.X_ = np.array(payload["X"], dtype=np.float64)
        self.y_ = np.array(payload["y"], dtype=np.int64)
        self._build_index()
