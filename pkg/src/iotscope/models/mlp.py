"""Single-hidden-layer ReLU perceptron trained with Adam on softmax cross-entropy."""

import math

import numpy as np

from ..dataset import N_CLASSES
from ..exceptions import DivergenceDetected
from ..rng import SplitMix64
from .base import StandardizedClassifier


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params, X):
    pre = X @ params["W1"] + params["b1"]
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ params["W2"] + params["b2"]
    return pre, hidden, logits


def loss_and_gradients(params, X, Y):
    """Mean cross-entropy over the batch and its gradient for each parameter.

    ``Y`` is one-hot with one row per sample.
    """
    n = len(X)
    pre, hidden, logits = forward(params, X)
    probs = softmax(logits)
    loss = -np.sum(Y * np.log(np.clip(probs, 1e-300, None))) / n
    d_logits = (probs - Y) / n
    d_hidden = (d_logits @ params["W2"].T) * (pre > 0)
    grads = {
        "W2": hidden.T @ d_logits,
        "b2": d_logits.sum(axis=0),
        "W1": X.T @ d_hidden,
        "b1": d_hidden.sum(axis=0),
    }
    return float(loss), grads


def init_params(n_in, n_hidden, n_out, rng):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights drawn row-major, zero biases."""
    def uniform(rows, cols):
        bound = 1.0 / math.sqrt(rows)
        values = [rng.uniform(-bound, bound) for _ in range(rows * cols)]
        return np.array(values).reshape(rows, cols)

    return {
        "W1": uniform(n_in, n_hidden),
        "b1": np.zeros(n_hidden),
        "W2": uniform(n_hidden, n_out),
        "b2": np.zeros(n_out),
    }


class MLPClassifier(StandardizedClassifier):
    """Feed-forward classifier: ReLU hidden layer, softmax output over 6 classes.

    Mini-batch Adam for a fixed number of epochs; the sample order is
    reshuffled every epoch from the same seeded generator used for the
    initial weights.
    """

    model_kind = "mlp"
    _PARAM_NAMES = ("W1", "b1", "W2", "b2")

    def __init__(self, hidden_layers=1, hidden_neurons=100, activation="relu", optimizer="adam",
                 learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8, batch_size=32,
                 max_epochs=200, seed=0, standardize=True):
        self.hidden_layers = hidden_layers
        self.hidden_neurons = hidden_neurons
        self.activation = activation
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.seed = seed
        self.standardize = standardize

    def _check_params(self):
        if self.hidden_layers != 1:
            raise ValueError("only a single hidden layer is supported")
        if self.activation != "relu" or self.optimizer != "adam":
            raise ValueError("only activation='relu' with optimizer='adam' is supported")
        if self.hidden_neurons < 1 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("hidden_neurons and batch_size must be >= 1, max_epochs >= 0")

    def _fit(self, X, y):
        self._check_params()
        rng = SplitMix64(self.seed)
        params = init_params(X.shape[1], self.hidden_neurons, N_CLASSES, rng)
        m = {k: np.zeros_like(v) for k, v in params.items()}
        v = {k: np.zeros_like(p) for k, p in params.items()}
        Y = np.eye(N_CLASSES)[y]
        n = len(y)
        step = 0
        self.loss_curve_ = []
        # overflow is caught below as a non-finite loss
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(self.max_epochs):
                order = np.array(rng.permutation(n))
                total = 0.0
                for start in range(0, n, self.batch_size):
                    batch = order[start:start + self.batch_size]
                    loss, grads = loss_and_gradients(params, X[batch], Y[batch])
                    if not math.isfinite(loss):
                        raise DivergenceDetected(f"loss became {loss} at step {step}")
                    total += loss * len(batch)
                    step += 1
                    c1 = 1.0 - self.beta1 ** step
                    c2 = 1.0 - self.beta2 ** step
                    for k in self._PARAM_NAMES:
                        g = grads[k]
                        m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g
                        v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g
                        denom = np.sqrt(v[k] / c2) + self.epsilon
                        params[k] = params[k] - self.learning_rate * (m[k] / c1) / denom
                self.loss_curve_.append(total / n)
        self.params_ = params

    def _logits(self, X):
        return forward(self.params_, X)[2]

    def predict_proba(self, X):
        return softmax(self._logits(self._prepare(X)))

    def _predict_codes(self, X):
        return np.argmax(self._logits(X), axis=1)

    def _payload(self):
        return {k: self.params_[k].tolist() for k in self._PARAM_NAMES}

    def _load_payload(self, payload):
        self.params_ = {k: np.array(payload[k], dtype=np.float64) for k in self._PARAM_NAMES}
