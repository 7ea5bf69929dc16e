import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..dataset import N_CLASSES, Scaler
from ..exceptions import EmptyDataset


class StandardizedClassifier(ClassifierMixin, BaseEstimator):
    """Shared fit/predict plumbing: fit a Scaler on the training rows, then
    hand standardised data to ``_fit``/``_predict_codes``.

    Class codes are fixed at 0..5, so ``classes_`` never depends on which
    labels happen to be present in the training set.
    """

    model_kind = None

    def _validate_fit(self, X, y):
        if len(X) == 0:
            raise EmptyDataset("training dataset is empty")
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        y = y.astype(np.int64)
        if y.min() < 0 or y.max() >= N_CLASSES:
            raise ValueError(f"class codes must lie in [0, {N_CLASSES})")
        return X, y

    def fit(self, X, y):
        X, y = self._validate_fit(X, y)
        self.classes_ = np.arange(N_CLASSES)
        self.n_features_in_ = X.shape[1]
        if self.standardize:
            self.scaler_ = Scaler().fit(X)
            X = self.scaler_.transform(X)
        else:
            self.scaler_ = None
        self._fit(X, y)
        return self

    def _prepare(self, X):
        check_is_fitted(self, "classes_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.scaler_.transform(X) if self.scaler_ is not None else X

    def predict(self, X):
        return self._predict_codes(self._prepare(X))
