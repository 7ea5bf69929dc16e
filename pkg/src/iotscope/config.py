"""Pipeline defaults and the optional JSON override file named by IOTSCOPE_CONFIG.

Example override file::

    {
      "flow": {"idle_timeout_s": 60, "bulk_min_packets": 3},
      "split": {"fraction": 0.8, "seed": 1},
      "models": {"forest": {"n_trees": 100}},
      "grids": {"knn": {"k": [1, 3, 5]}}
    }
"""

import copy
import json
import os
from dataclasses import dataclass, field, fields

from .evaluation import DEFAULT_GRIDS
from .exceptions import ConfigError
from .flowmeter import FlowConfig
from .models import make_model

ENV_VAR = "IOTSCOPE_CONFIG"

# Forest: 200 trees considering all 63 features per split. MLP: one hidden
# layer of 100 ReLU units trained with Adam. KNN: k=5, uniform, auto, Minkowski.
DEFAULT_MODEL_PARAMS = {
    "forest": {"n_trees": 200, "max_features": 63, "max_depth": None, "min_samples_leaf": 1},
    "mlp": {"hidden_layers": 1, "hidden_neurons": 100, "activation": "relu", "optimizer": "adam",
            "learning_rate": 1e-3, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8,
            "batch_size": 32, "max_epochs": 200},
    "knn": {"k": 5, "weights": "uniform", "algorithm": "auto", "p": 2.0},
}


@dataclass
class Config:
    flow: FlowConfig = field(default_factory=FlowConfig)
    split_fraction: float = 0.7
    split_seed: int = 0
    models: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_MODEL_PARAMS))
    grids: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_GRIDS))
    folds: int = 5

    def validate(self):
        if not 0 < self.split_fraction < 1:
            raise ConfigError("split.fraction must lie in (0, 1)")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        for kind, params in self.models.items():
            try:
                make_model(kind, **params)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"models.{kind}: {exc}") from None
        for kind, grid in self.grids.items():
            if kind not in DEFAULT_MODEL_PARAMS:
                raise ConfigError(f"grids: unknown model kind {kind!r}")
            if not grid or any(not isinstance(v, list) or not v for v in grid.values()):
                raise ConfigError(f"grids.{kind}: every parameter needs a nonempty list")
        return self


def _merge(cfg, doc):
    unknown = set(doc) - {"flow", "split", "models", "grids", "folds"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    if "flow" in doc:
        names = {f.name for f in fields(FlowConfig)}
        bad = set(doc["flow"]) - names
        if bad:
            raise ConfigError(f"unknown flow settings: {sorted(bad)}")
        try:
            cfg.flow = FlowConfig(**{**cfg.flow.__dict__, **doc["flow"]})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"flow: {exc}") from None
    split = doc.get("split", {})
    cfg.split_fraction = float(split.get("fraction", cfg.split_fraction))
    cfg.split_seed = int(split.get("seed", cfg.split_seed))
    for kind, params in doc.get("models", {}).items():
        kind = {"rf": "forest"}.get(kind, kind)
        if kind not in cfg.models:
            raise ConfigError(f"models: unknown model kind {kind!r}")
        cfg.models[kind].update(params)
    for kind, grid in doc.get("grids", {}).items():
        cfg.grids[{"rf": "forest"}.get(kind, kind)] = grid
    cfg.folds = int(doc.get("folds", cfg.folds))
    return cfg


def load_config(path=None):
    """Defaults, overridden by ``path`` or the file named in IOTSCOPE_CONFIG."""
    cfg = Config()
    path = path or os.environ.get(ENV_VAR)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        _merge(cfg, doc)
    return cfg.validate()
