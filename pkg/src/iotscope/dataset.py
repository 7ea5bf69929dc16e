"""Category labels, labeled datasets, stratified splitting and scaling."""

import csv
import enum
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ClassTooSmall, EmptyDataset, ParseError
from .flowmeter import FEATURE_NAMES, N_FEATURES, feature_row, format_real
from .rng import SplitMix64

SCHEMA_VERSION = 1


class CategoryLabel(enum.IntEnum):
    Surveillance = 0
    Hub = 1
    EnergyManagement = 2
    Appliance = 3
    StreamingDevices = 4
    NonIoT = 5

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        try:
            return cls[str(value)]
        except KeyError:
            names = ", ".join(c.name for c in cls)
            raise ValueError(f"unknown category {value!r}; expected one of {names}") from None


N_CLASSES = len(CategoryLabel)


@dataclass
class Dataset:
    """Feature matrix with integer class codes and per-row provenance."""

    X: np.ndarray = field(default_factory=lambda: np.empty((0, N_FEATURES)))
    y: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    origins: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        X = np.asarray(self.X, dtype=np.float64)
        self.X = X.reshape(len(self.y), -1) if X.ndim != 2 else X
        if len(self.X) != len(self.y):
            raise ValueError("X and y must have the same number of rows")
        if not self.origins:
            self.origins = [f"row:{i}" for i in range(len(self.y))]
        if len(self.origins) != len(self.y):
            raise ValueError("origins must have one entry per sample")

    def __len__(self):
        return len(self.y)

    def class_counts(self):
        counts = np.bincount(self.y, minlength=N_CLASSES)
        return {CategoryLabel(c): int(n) for c, n in enumerate(counts) if n}

    def subset(self, indices):
        indices = list(indices)
        return Dataset(self.X[indices], self.y[indices], [self.origins[i] for i in indices],
                       self.schema_version)

    @staticmethod
    def concat(datasets):
        datasets = list(datasets)
        if not datasets:
            return Dataset()
        return Dataset(
            np.vstack([d.X for d in datasets]),
            np.concatenate([d.y for d in datasets]),
            [o for d in datasets for o in d.origins],
        )


def label_flows(features, label, origin="capture"):
    """Attach one category label to every feature vector of a capture."""
    label = CategoryLabel.parse(label)
    rows = [feature_row(f) if isinstance(f, dict) else list(f) for f in features]
    X = np.array(rows, dtype=np.float64).reshape(len(rows), N_FEATURES)
    y = np.full(len(rows), int(label), dtype=np.int64)
    return Dataset(X, y, [f"{origin}#{i}" for i in range(len(rows))])


def load_device_map(path):
    """Read a JSON ``{ip: category}`` map used to label mixed captures."""
    with open(path) as fh:
        raw = json.load(fh)
    return {ip: CategoryLabel.parse(label) for ip, label in raw.items()}


def label_by_device_map(flows, features, device_map, origin="capture"):
    """Label flows whose endpoints appear in ``device_map``; others are dropped."""
    rows, labels, origins = [], [], []
    for i, (flow, feats) in enumerate(zip(flows, features)):
        ips = (flow.key.endpoint_lo[0], flow.key.endpoint_hi[0])
        hits = [device_map[ip] for ip in ips if ip in device_map]
        if hits:
            rows.append(feature_row(feats))
            labels.append(int(hits[0]))
            origins.append(f"{origin}#{i}")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), N_FEATURES)
    return Dataset(X, np.array(labels, dtype=np.int64), origins)


def round_half_up(fraction, n):
    """round(fraction * n) with halves rounded up, using the decimal value of fraction."""
    product = Decimal(repr(float(fraction))) * n
    return int(product.to_integral_value(rounding=ROUND_HALF_UP))


def stratified_split(ds, train_fraction=0.7, seed=0):
    """Per-class seeded shuffle; the first round(fraction * n_c) go to train.

    Classes are processed in code order from a single generator seeded with
    ``seed``. Every class keeps at least one test sample.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    counts = np.bincount(ds.y, minlength=N_CLASSES)
    for code, n in enumerate(counts):
        if 0 < n < 2:
            raise ClassTooSmall(f"class {CategoryLabel(code).name} has {n} sample(s); need >= 2")
    rng = SplitMix64(seed)
    train_idx, test_idx = [], []
    for code in range(N_CLASSES):
        members = [int(i) for i in np.flatnonzero(ds.y == code)]
        if not members:
            continue
        rng.shuffle(members)
        n_train = min(round_half_up(train_fraction, len(members)), len(members) - 1)
        train_idx.extend(sorted(members[:n_train]))
        test_idx.extend(sorted(members[n_train:]))
    return ds.subset(sorted(train_idx)), ds.subset(sorted(test_idx))


class Scaler(TransformerMixin, BaseEstimator):
    """Per-column standardisation with population standard deviation.

    Zero-variance columns are stored with scale 1 so they are only centred.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise EmptyDataset("cannot fit a scaler on zero samples")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        self.scale_ = std
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return np.asarray(X, dtype=np.float64) * self.scale_ + self.mean_

    def to_dict(self):
        return {"means": self.mean_.tolist(), "stds": self.scale_.tolist()}

    @classmethod
    def from_dict(cls, data):
        scaler = cls()
        scaler.mean_ = np.array(data["means"], dtype=np.float64)
        scaler.scale_ = np.array(data["stds"], dtype=np.float64)
        scaler.n_features_in_ = len(scaler.mean_)
        return scaler


def fit_scaler(train):
    if len(train) == 0:
        raise EmptyDataset("training dataset is empty")
    return Scaler().fit(train.X)


def apply_scaler(scaler, v):
    v = np.asarray(v, dtype=np.float64)
    return scaler.transform(v.reshape(1, -1))[0] if v.ndim == 1 else scaler.transform(v)


# --- CSV persistence -----------------------------------------------------

def write_dataset_csv(path, ds):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(FEATURE_NAMES) + ["label"])
        for row, code in zip(ds.X, ds.y):
            writer.writerow([format_real(v) for v in row] + [CategoryLabel(int(code)).name])


def read_dataset_csv(path):
    """Load a labeled flow CSV; the ``label`` column is mandatory."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if tuple(header[:N_FEATURES]) != FEATURE_NAMES or header[N_FEATURES:] != ["label"]:
            raise ParseError(f"{path}: header does not match the flow schema plus 'label'")
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != N_FEATURES + 1:
                raise ParseError(
                    f"{path}:{lineno}: expected {N_FEATURES + 1} fields, got {len(rec)}")
            try:
                rows.append([float(v) for v in rec[:N_FEATURES]])
                labels.append(int(CategoryLabel.parse(rec[N_FEATURES])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    X = np.array(rows, dtype=np.float64).reshape(len(rows), N_FEATURES)
    origins = [f"{path}:{i + 2}" for i in range(len(rows))]
    return Dataset(X, np.array(labels, dtype=np.int64), origins)
