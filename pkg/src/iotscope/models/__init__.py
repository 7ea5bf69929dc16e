"""Forest, MLP and KNN classifiers plus functional wrappers over them.

The ``train_*`` functions take a :class:`~iotscope.dataset.Dataset`, fit a
scaler on it and return the fitted estimator; the ``predict_*`` functions
classify one raw (unscaled) feature vector.
"""

import numpy as np

from ..exceptions import EmptyDataset
from .forest import ForestClassifier
from .knn import KNNClassifier
from .mlp import MLPClassifier
from .persistence import MODEL_KINDS, dumps_model, load_model, save_model

MODEL_ALIASES = {"rf": "forest", "forest": "forest", "mlp": "mlp", "knn": "knn"}

__all__ = [
    "ForestClassifier", "MLPClassifier", "KNNClassifier", "make_model",
    "train_forest", "predict_forest", "train_mlp", "predict_mlp", "train_knn", "predict_knn",
    "save_model", "load_model", "dumps_model", "MODEL_KINDS",
]


def make_model(kind, **params):
    try:
        cls = MODEL_KINDS[MODEL_ALIASES[kind]]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}") from None
    return cls(**params)


def _fit(model, train):
    if len(train) == 0:
        raise EmptyDataset("training dataset is empty")
    return model.fit(train.X, train.y)


def _row(v):
    return np.asarray(v, dtype=np.float64).reshape(1, -1)


def train_forest(train, **params):
    return _fit(ForestClassifier(**params), train)


def predict_forest(model, v):
    votes = model.predict_votes(_row(v))[0]
    return int(np.argmax(votes)), votes


def train_mlp(train, **params):
    return _fit(MLPClassifier(**params), train)


def predict_mlp(model, v):
    probs = model.predict_proba(_row(v))[0]
    return int(np.argmax(probs)), probs


def train_knn(train, **params):
    return _fit(KNNClassifier(**params), train)


def predict_knn(model, v):
    dist, ind = model.kneighbors(_row(v))
    return int(model._vote(dist[0], ind[0])), ind[0]
