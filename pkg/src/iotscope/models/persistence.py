"""Versioned JSON model files: {format_version, model_kind, params, scaler, payload}."""

import json

import numpy as np

from ..dataset import N_CLASSES, Scaler
from ..exceptions import CorruptModelFile, SchemaVersionMismatch
from .forest import ForestClassifier
from .knn import KNNClassifier
from .mlp import MLPClassifier

FORMAT_VERSION = 1
MODEL_KINDS = {
    "forest": ForestClassifier,
    "mlp": MLPClassifier,
    "knn": KNNClassifier,
}


def model_to_dict(model):
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": model.model_kind,
        "params": model.get_params(),
        "n_features": int(model.n_features_in_),
        "scaler": model.scaler_.to_dict() if model.scaler_ is not None else None,
        "payload": model._payload(),
    }


def dumps_model(model):
    # repr-based float output is the shortest string that round-trips exactly
    return json.dumps(model_to_dict(model), separators=(",", ":"), allow_nan=False) + "\n"


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def model_from_dict(doc):
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CorruptModelFile("missing format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise SchemaVersionMismatch(
            f"model file version {doc['format_version']!r}, expected {FORMAT_VERSION}")
    try:
        cls = MODEL_KINDS[doc["model_kind"]]
        model = cls(**doc["params"])
        model.classes_ = np.arange(N_CLASSES)
        model.n_features_in_ = int(doc["n_features"])
        model.scaler_ = Scaler.from_dict(doc["scaler"]) if doc["scaler"] is not None else None
        model._load_payload(doc["payload"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelFile(f"invalid model document: {exc}") from None
    return model


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModelFile(f"{path}: {exc}") from None
    return model_from_dict(doc)
