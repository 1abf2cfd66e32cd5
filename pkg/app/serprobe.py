"""
Emotion Probe
Linear softmax classifier over utterance feature vectors.

Design:
- Multinomial logistic regression, full-batch gradient descent
- Objective: mean cross-entropy + (l2 / 2) |W|^2 (biases unpenalized)
- Inputs standardized with training statistics stored in the model
- Optional Gaussian noise augmentation in standardized space, one fixed-seed
  draw per epoch
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import DegenerateLabels, DimensionMismatch, InvalidRange
from .models import ProbeModel, Standardization, TrainConfig, normalize_label
from .ranking import Features, as_matrix, as_vector

logger = logging.getLogger(__name__)


def cross_entropy_loss(
    weights: np.ndarray,
    biases: np.ndarray,
    x: np.ndarray,
    targets: np.ndarray,
    l2_penalty: float = 0.0,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Loss and gradients for one batch.

    `targets` is the one-hot (n x K) label matrix. Returns
    (loss, dL/dW with shape K x d, dL/db with shape K).
    """
    n = x.shape[0]
    logits = x @ weights.T + biases
    log_probs = log_softmax(logits, axis=1)
    loss = -float(np.sum(targets * log_probs)) / n + 0.5 * l2_penalty * float(np.sum(weights * weights))

    residual = (np.exp(log_probs) - targets) / n
    grad_w = residual.T @ x + l2_penalty * weights
    grad_b = residual.sum(axis=0)
    return loss, grad_w, grad_b


def _encode(labels: Sequence[str]) -> Tuple[List[str], np.ndarray]:
    normalized = [normalize_label(label) for label in labels]
    classes = sorted(set(normalized))
    index = {label: k for k, label in enumerate(classes)}
    targets = np.zeros((len(normalized), len(classes)))
    targets[np.arange(len(normalized)), [index[label] for label in normalized]] = 1.0
    return classes, targets


@dataclass
class ProbeFit:
    weights: np.ndarray
    biases: np.ndarray
    history: List[float] = field(default_factory=list)


def gradient_descent(x: np.ndarray, targets: np.ndarray, config: TrainConfig) -> ProbeFit:
    """Full-batch descent from zero parameters; `history` holds the loss per epoch"""
    n_classes = targets.shape[1]
    weights = np.zeros((n_classes, x.shape[1]))
    biases = np.zeros(n_classes)
    rng = np.random.default_rng(config.seed)
    history = []

    for epoch in range(config.epochs):
        batch = x
        if config.noise_sigma > 0:
            batch = x + rng.normal(0.0, config.noise_sigma, size=x.shape)
        loss, grad_w, grad_b = cross_entropy_loss(weights, biases, batch, targets, config.l2_penalty)
        history.append(loss)
        weights = weights - config.learning_rate * grad_w
        biases = biases - config.learning_rate * grad_b
        if epoch % 100 == 0:
            logger.debug(f"epoch {epoch}: loss={loss:.6f}")

    return ProbeFit(weights=weights, biases=biases, history=history)


def train_probe(features: Features, labels: Sequence[str], config: Optional[TrainConfig] = None) -> ProbeModel:
    """Fit the probe on labeled feature vectors; labels are ordered alphabetically"""
    config = config or TrainConfig()
    x = as_matrix(features)
    if x.shape[0] != len(labels):
        raise DimensionMismatch(f"{x.shape[0]} feature rows but {len(labels)} labels")

    classes, targets = _encode(labels)
    if len(classes) < 2:
        raise DegenerateLabels(f"Probe training needs at least 2 classes, got {classes}")

    standardization = Standardization.fit(x)
    standardized = standardization.apply(x)
    fit = gradient_descent(standardized, targets, config)
    final_loss, _, _ = cross_entropy_loss(fit.weights, fit.biases, standardized, targets, config.l2_penalty)

    logger.info(
        f"Probe trained on {x.shape[0]} samples / {len(classes)} classes, "
        f"final loss {final_loss:.6f}"
    )
    return ProbeModel(
        weights=fit.weights,
        biases=fit.biases,
        emotion_labels=classes,
        standardization=standardization,
        final_loss=final_loss,
    )


def classify(model: ProbeModel, x) -> np.ndarray:
    """Class probabilities in `model.emotion_labels` order"""
    vector = as_vector(x)
    if vector.shape != (model.standardization.dim,):
        raise DimensionMismatch(
            f"Expected {model.standardization.dim} features, got {vector.size}"
        )
    logits = model.weights @ model.standardization.apply(vector) + model.biases
    return softmax(logits)


def predict_label(model: ProbeModel, x) -> str:
    return model.emotion_labels[int(np.argmax(classify(model, x)))]


def probe_accuracy(model: ProbeModel, features: Features, labels: Sequence[str]) -> float:
    x = as_matrix(features)
    if x.shape[0] == 0:
        raise DegenerateLabels("Accuracy needs at least one labeled sample")
    predicted = [predict_label(model, row) for row in x]
    return float(np.mean([p == normalize_label(t) for p, t in zip(predicted, labels)]))


def probability_sweep(model: ProbeModel, start, end, steps: int) -> np.ndarray:
    """Classify `steps` evenly spaced points from start to end (steps x K)"""
    if steps < 2:
        raise InvalidRange(f"A sweep needs at least 2 steps, got {steps}")
    a = as_vector(start)
    b = as_vector(end)
    if a.shape != b.shape:
        raise DimensionMismatch(f"Sweep endpoints differ in size: {a.size} vs {b.size}")
    return np.vstack([
        classify(model, (1.0 - t) * a + t * b) for t in np.linspace(0.0, 1.0, steps)
    ])
