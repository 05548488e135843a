"""
Black-box prediction function f(.) that counterfactuals are generated for.

The engine only needs `Predictor.predict_batch`; any callable mapping a
normalized feature matrix to probabilities can be wrapped as a scorer.
"""

import json
import logging
import os
from typing import Callable, List, Tuple
import numpy as np
from scipy.special import expit
from sklearn.metrics import accuracy_score

from config.mcce_consts import CUTOFF
from data_class.experiment_params import MLPConfig
from tabular.dataset import Dataset, Instance

logger = logging.getLogger(__name__)

Scorer = Callable[[np.ndarray], np.ndarray]


# ==========================================
# SCORERS
# ==========================================

class LogisticScorer:
    def __init__(self, weights, bias: float = 0.0):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return expit(np.atleast_2d(X) @ self.weights + self.bias)

    def to_dict(self) -> dict:
        return {"kind": "logistic", "weights": self.weights.tolist(), "bias": self.bias}


class MLPScorer:
    """Fully connected network: ReLU hidden layers, one sigmoid output unit."""

    def __init__(self, weights: List[np.ndarray], biases: List[np.ndarray]):
        if len(weights) != len(biases):
            raise ValueError("MLP needs one bias vector per weight matrix.")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    @classmethod
    def initialize(cls, layer_sizes: List[int], rng: np.random.Generator) -> "MLPScorer":
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            biases.append(np.full(fan_out, 0.01))
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def _forward(self, X: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        activations = [X]
        hidden = X
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            hidden = np.maximum(hidden @ W + b, 0.0)
            activations.append(hidden)
        logits = (hidden @ self.weights[-1] + self.biases[-1])[:, 0]
        return activations, logits

    def __call__(self, X: np.ndarray) -> np.ndarray:
        _, logits = self._forward(np.atleast_2d(X))
        return expit(logits)

    def loss_and_gradients(self, X: np.ndarray, y: np.ndarray) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
        """Mean binary cross-entropy and its analytic gradients w.r.t. every weight and bias."""
        X = np.atleast_2d(X)
        y = np.asarray(y, dtype=np.float64)
        n = X.shape[0]
        activations, logits = self._forward(X)
        # log(1 + e^z) - y*z is BCE written on the logit, stable for large |z|
        loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))

        delta = ((expit(logits) - y) / n)[:, None]
        grad_w: List[np.ndarray] = [None] * len(self.weights)
        grad_b: List[np.ndarray] = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            grad_w[layer] = activations[layer].T @ delta
            grad_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (activations[layer] > 0)
        return loss, grad_w, grad_b

    def to_dict(self) -> dict:
        return {
            "kind": "mlp",
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }


# ==========================================
# PREDICTOR
# ==========================================

class Predictor:
    """A scorer on normalized vectors plus the decision cutoff c."""

    def __init__(self, scorer: Scorer, cutoff: float = CUTOFF):
        if not 0.0 < cutoff < 1.0:
            raise ValueError(f"Cutoff must lie in (0, 1), got {cutoff}")
        self.scorer = scorer
        self.cutoff = float(cutoff)

    def predict_batch(self, ds: Dataset, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(rows)
        if rows.shape[0] == 0:
            return np.zeros(0)
        probs = np.asarray(self.scorer(ds.normalize_matrix(rows)), dtype=np.float64).reshape(-1)
        if probs.shape[0] != rows.shape[0]:
            raise ValueError(f"Scorer returned {probs.shape[0]} scores for {rows.shape[0]} rows.")
        if np.any((probs < 0.0) | (probs > 1.0)) or np.isnan(probs).any():
            raise ValueError("Scorer output must be probabilities in [0, 1].")
        return probs

    def valid_mask(self, ds: Dataset, rows: np.ndarray) -> np.ndarray:
        return self.predict_batch(ds, rows) > self.cutoff


def predict(p: Predictor, ds: Dataset, x: Instance) -> float:
    return float(p.predict_batch(ds, x)[0])


def is_valid(p: Predictor, ds: Dataset, e: Instance) -> bool:
    """True iff f(e) > c (strict)."""
    return predict(p, ds, e) > p.cutoff


# ==========================================
# TRAINING
# ==========================================

def train_mlp(ds: Dataset, labels: np.ndarray, cfg: MLPConfig, cutoff: float = CUTOFF) -> Predictor:
    """
    Mini-batch SGD on binary cross-entropy. Deterministic given cfg.seed.

    Raises:
        ValueError: labels length differs from the dataset or holds one class only.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape[0] != ds.n_rows:
        raise ValueError(f"Got {labels.shape[0]} labels for {ds.n_rows} rows.")
    if np.unique(labels).size < 2:
        raise ValueError("Cannot train on degenerate labels: only one class present.")

    X = ds.normalized_values()
    rng = np.random.default_rng(cfg.seed)
    network = MLPScorer.initialize([X.shape[1], *cfg.hidden_sizes, 1], rng)

    for epoch in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        epoch_loss = 0.0
        for start in range(0, X.shape[0], cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grad_w, grad_b = network.loss_and_gradients(X[batch], labels[batch])
            epoch_loss += loss * batch.size
            for layer in range(len(network.weights)):
                network.weights[layer] -= cfg.learning_rate * grad_w[layer]
                network.biases[layer] -= cfg.learning_rate * grad_b[layer]
        logger.debug("epoch %d/%d loss %.5f", epoch + 1, cfg.epochs, epoch_loss / X.shape[0])

    accuracy = accuracy_score(labels > 0.5, network(X) > cutoff)
    logger.info("Trained MLP %s, training accuracy %.3f", network.layer_sizes, accuracy)
    return Predictor(network, cutoff)


# ==========================================
# PERSISTENCE
# ==========================================

def save_predictor(p: Predictor, path: str) -> None:
    if not hasattr(p.scorer, "to_dict"):
        raise ValueError("Only built-in scorers (mlp, logistic) can be saved.")
    payload = p.scorer.to_dict()
    payload["cutoff"] = p.cutoff
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)


def load_predictor(path: str) -> Predictor:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Model file not found: {path}")
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)

    kind = payload.get("kind")
    if kind == "mlp":
        scorer = MLPScorer(
            [np.array(w, dtype=np.float64) for w in payload["weights"]],
            [np.array(b, dtype=np.float64) for b in payload["biases"]],
        )
        if scorer.layer_sizes != payload["layer_sizes"]:
            raise ValueError(f"Model file {path}: layer sizes do not match the weight shapes.")
    elif kind == "logistic":
        scorer = LogisticScorer(payload["weights"], payload["bias"])
    else:
        raise ValueError(f"Model file {path}: unknown model kind '{kind}'.")
    return Predictor(scorer, payload.get("cutoff", CUTOFF))
