"""
Relative Ranking
Learns one linear ranking function f(x) = W x per emotion pair.

Design:
- Ordered pairs: every sample of set A must outrank every sample of set B
- Similar pairs: samples within A (and within B) should score equally
- Squared slacks make the primal once-differentiable, so it is minimized
  directly with Newton steps (no QP solver)
- Pair constraints are applied through sparse difference operators, so the
  O(|A||B|) pair matrix of feature differences is never materialized
- Features are standardized inside the model; a model file is self-contained
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, sparse

from .errors import (
    DidNotConverge,
    DimensionMismatch,
    EmptyEmotionSet,
    InvalidTradeoff,
    MissingPairModel,
)
from .models import (
    AttributeSource,
    EmotionAttributeVector,
    FeatureVector,
    RankingModel,
    RankingProblem,
    SolverOptions,
    Standardization,
    normalize_label,
    pair_id,
)

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
MIN_STEP = 1e-12
DEGENERATE_ATTRIBUTE = 0.5

Features = Union[np.ndarray, Sequence[FeatureVector], Sequence[np.ndarray]]


def as_matrix(features: Features) -> np.ndarray:
    """Stack FeatureVectors (or raw rows) into an (n x d) float matrix"""
    if isinstance(features, np.ndarray):
        matrix = np.asarray(features, dtype=np.float64)
        return matrix.reshape(0, 0) if matrix.size == 0 else np.atleast_2d(matrix)
    rows = [np.asarray(getattr(f, "values", f), dtype=np.float64) for f in features]
    if not rows:
        return np.zeros((0, 0))
    return np.vstack(rows)


def as_vector(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


# ═══════════════════════════════════════════════════════════
# Problem construction
# ═══════════════════════════════════════════════════════════

def _within_pairs(n: int, offset: int) -> np.ndarray:
    i, j = np.triu_indices(n, k=1)
    return np.column_stack((i + offset, j + offset)).astype(np.int64)


def build_problem(
    features_a: Features,
    features_b: Features,
    c: float = 0.1,
    emotion_pair: Tuple[str, str] = ("a", "b"),
    similar_pair_cap: float = 4.0,
    seed: int = 0,
) -> RankingProblem:
    """
    Build the ranking problem for one emotion pair.

    Rows of A come first in the data matrix, rows of B follow. Similar pairs are
    subsampled (fixed seed) to at most `similar_pair_cap` x the ordered-pair count.
    """
    if not c > 0:
        raise InvalidTradeoff(f"Trade-off C must be positive, got {c}")

    a = as_matrix(features_a)
    b = as_matrix(features_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyEmotionSet(
            f"Both emotion sets need samples ({emotion_pair[0]}: {a.shape[0]}, "
            f"{emotion_pair[1]}: {b.shape[0]})"
        )
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"Feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")

    n_a, n_b = a.shape[0], b.shape[0]
    raw = np.vstack((a, b))
    standardization = Standardization.fit(raw)

    rows_a, rows_b = np.meshgrid(np.arange(n_a), n_a + np.arange(n_b), indexing="ij")
    ordered = np.column_stack((rows_a.ravel(), rows_b.ravel())).astype(np.int64)

    similar = np.vstack((_within_pairs(n_a, 0), _within_pairs(n_b, n_a)))
    cap = int(similar_pair_cap * ordered.shape[0])
    if similar.shape[0] > cap:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(similar.shape[0], size=cap, replace=False))
        logger.debug(f"Subsampled similar pairs {similar.shape[0]} -> {cap}")
        similar = similar[keep]

    return RankingProblem(
        emotion_pair=emotion_pair,
        data=standardization.apply(raw),
        standardization=standardization,
        ordered_pairs=ordered,
        similar_pairs=similar.reshape(-1, 2),
        c_tradeoff=c,
        n_a=n_a,
        n_b=n_b,
    )


# ═══════════════════════════════════════════════════════════
# Primal objective
# ═══════════════════════════════════════════════════════════

def _difference_operator(pairs: np.ndarray, n_rows: int) -> sparse.csr_matrix:
    """Sparse K x n operator whose row k computes x_i - x_j for pair k"""
    pairs = pairs.reshape(-1, 2)
    k = pairs.shape[0]
    rows = np.repeat(np.arange(k), 2)
    cols = pairs.ravel()
    vals = np.tile([1.0, -1.0], k)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(k, n_rows))


class PrimalObjective:
    """(1/2)|W|^2 + C (sum xi^2 + sum gamma^2) with its gradient and Hessian"""

    def __init__(self, problem: RankingProblem):
        self.data = problem.data
        self.c = problem.c_tradeoff
        n = self.data.shape[0]
        self.ordered = _difference_operator(problem.ordered_pairs, n)
        self.similar = _difference_operator(problem.similar_pairs, n)
        self._similar_gram = (self.similar.T @ self.similar).tocsr()

    def _margins(self, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        scores = self.data @ w
        return self.ordered @ scores, self.similar @ scores

    def value(self, w: np.ndarray) -> float:
        ordered, similar = self._margins(w)
        xi = np.maximum(0.0, 1.0 - ordered)
        return float(0.5 * w @ w + self.c * (xi @ xi + similar @ similar))

    def gradient(self, w: np.ndarray) -> np.ndarray:
        ordered, similar = self._margins(w)
        xi = np.maximum(0.0, 1.0 - ordered)
        pulled = self.similar.T @ similar - self.ordered.T @ xi
        return w + 2.0 * self.c * (self.data.T @ pulled)

    def hessian(self, w: np.ndarray) -> np.ndarray:
        ordered, _ = self._margins(w)
        active = self.ordered[ordered < 1.0]
        gram = (active.T @ active).tocsr() + self._similar_gram
        return np.eye(w.size) + 2.0 * self.c * (self.data.T @ (gram @ self.data))


def primal_objective(problem: RankingProblem, w: np.ndarray) -> float:
    return PrimalObjective(problem).value(np.asarray(w, dtype=np.float64))


def primal_gradient(problem: RankingProblem, w: np.ndarray) -> np.ndarray:
    return PrimalObjective(problem).gradient(np.asarray(w, dtype=np.float64))


@dataclass
class SolverResult:
    weights: np.ndarray
    objective: float
    converged: bool
    iterations: int
    gradient_norm: float
    threshold: float
    history: List[float] = field(default_factory=list)


def minimize_primal(problem: RankingProblem, options: Optional[SolverOptions] = None) -> SolverResult:
    """
    Newton iterations with Armijo backtracking, starting from W = 0.

    Converged when |grad| < tolerance * max(1, |grad at W=0|). The objective is
    non-increasing across iterations; `history` records it per iteration.
    """
    options = options or SolverOptions()
    objective = PrimalObjective(problem)

    w = np.zeros(problem.dim)
    value = objective.value(w)
    grad = objective.gradient(w)
    threshold = options.tolerance * max(1.0, float(np.linalg.norm(grad)))
    history = [value]
    iterations = 0

    while np.linalg.norm(grad) >= threshold and iterations < options.max_iter:
        step = linalg.solve(objective.hessian(w), -grad, assume_a="pos")
        slope = float(grad @ step)

        t = 1.0
        candidate = w + step
        candidate_value = objective.value(candidate)
        while candidate_value > value + ARMIJO * t * slope and t > MIN_STEP:
            t *= 0.5
            candidate = w + t * step
            candidate_value = objective.value(candidate)
        if candidate_value > value:
            logger.debug("Line search stalled at numerical precision")
            break

        w, value = candidate, candidate_value
        grad = objective.gradient(w)
        iterations += 1
        history.append(value)
        logger.debug(f"iter {iterations}: objective={value:.9g} |grad|={np.linalg.norm(grad):.3g}")

    gradient_norm = float(np.linalg.norm(grad))
    return SolverResult(
        weights=w,
        objective=value,
        converged=gradient_norm < threshold,
        iterations=iterations,
        gradient_norm=gradient_norm,
        threshold=threshold,
        history=history,
    )


def solve(problem: RankingProblem, options: Optional[SolverOptions] = None) -> RankingModel:
    """Fit W for one emotion pair and record the score bounds used for normalization"""
    options = options or SolverOptions()
    result = minimize_primal(problem, options)

    scores = problem.data @ result.weights
    model = RankingModel(
        emotion_pair=problem.emotion_pair,
        weights=result.weights,
        standardization=problem.standardization,
        score_min=float(scores.min()),
        score_max=float(scores.max()),
        c=problem.c_tradeoff,
        converged=result.converged,
        objective=result.objective,
        iterations=result.iterations,
        gradient_norm=result.gradient_norm,
        convergence_threshold=result.threshold,
    )

    label = pair_id(*problem.emotion_pair)
    if not result.converged:
        message = (
            f"Ranker {label} did not converge in {result.iterations} iterations "
            f"(|grad|={result.gradient_norm:.3g}, threshold {result.threshold:.3g})"
        )
        if options.strict:
            raise DidNotConverge(message, model=model)
        logger.warning(message)
    else:
        logger.info(
            f"Ranker {label}: objective={result.objective:.6g} "
            f"after {result.iterations} iterations"
        )
    return model


# ═══════════════════════════════════════════════════════════
# Scoring
# ═══════════════════════════════════════════════════════════

def rank_score(model: RankingModel, x) -> float:
    """f(x) = W . standardize(x)"""
    vector = as_vector(x)
    if vector.shape != model.weights.shape:
        raise DimensionMismatch(
            f"Expected {model.weights.size} features, got {vector.size}"
        )
    return float(model.weights @ model.standardization.apply(vector))


def normalize_attribute(model: RankingModel, raw_score: float) -> float:
    """Map a raw score to [0, 1] using the training bounds (clamped)"""
    span = model.score_max - model.score_min
    if span <= 1e-12 * max(1.0, abs(model.score_max)):
        return DEGENERATE_ATTRIBUTE
    return float(np.clip((raw_score - model.score_min) / span, 0.0, 1.0))


def _index_models(models: Iterable[RankingModel]) -> Dict[Tuple[str, str], RankingModel]:
    return {tuple(m.emotion_pair): m for m in models}


def pair_attribute(models: Iterable[RankingModel], x, primary: str, reference: str) -> float:
    """
    Attribute of x for (primary, reference); a model trained in the opposite
    orientation answers with 1 - attribute.
    """
    index = models if isinstance(models, dict) else _index_models(models)
    if (primary, reference) in index:
        model = index[(primary, reference)]
        return normalize_attribute(model, rank_score(model, x))
    if (reference, primary) in index:
        model = index[(reference, primary)]
        return 1.0 - normalize_attribute(model, rank_score(model, x))
    raise MissingPairModel(f"No ranking model for pair {pair_id(primary, reference)}")


def predict_attribute_vector(
    models: Iterable[RankingModel],
    x,
    primary: str,
    references: Sequence[str],
) -> EmotionAttributeVector:
    """One normalized attribute per (primary, reference) pair"""
    primary = normalize_label(primary)
    index = _index_models(models)
    entries = {}
    for reference in references:
        reference = normalize_label(reference)
        entries[pair_id(primary, reference)] = pair_attribute(index, x, primary, reference)
    return EmotionAttributeVector(primary=primary, entries=entries, source=AttributeSource.PREDICTED)


# ═══════════════════════════════════════════════════════════
# Training helpers
# ═══════════════════════════════════════════════════════════

def enumerate_pairs(emotion_set: Sequence[str], primary: str, all_pairs: bool = False) -> List[Tuple[str, str]]:
    """(primary, e) for every other emotion, plus every remaining pair if requested"""
    pairs = [(primary, e) for e in emotion_set if e != primary]
    if all_pairs:
        others = [e for e in emotion_set if e != primary]
        for i, a in enumerate(others):
            for b in others[i + 1:]:
                pairs.append((a, b))
    return pairs


def train_pair_model(
    features_a: Features,
    features_b: Features,
    emotion_pair: Tuple[str, str],
    options: Optional[SolverOptions] = None,
) -> RankingModel:
    options = options or SolverOptions()
    problem = build_problem(
        features_a,
        features_b,
        c=options.c,
        emotion_pair=emotion_pair,
        similar_pair_cap=options.similar_pair_cap,
        seed=options.seed,
    )
    logger.info(
        f"Training {pair_id(*emotion_pair)}: {problem.n_a}+{problem.n_b} samples, "
        f"{len(problem.ordered_pairs)} ordered / {len(problem.similar_pairs)} similar pairs"
    )
    return solve(problem, options)


def pairwise_accuracy(model: RankingModel, features_a: Features, features_b: Features) -> float:
    """Fraction of (a, b) pairs with f(a) > f(b); the held-out ranking accuracy"""
    a = as_matrix(features_a)
    b = as_matrix(features_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyEmotionSet("Pairwise accuracy needs samples on both sides")
    scores_a = model.standardization.apply(a) @ model.weights
    scores_b = model.standardization.apply(b) @ model.weights
    return float(np.mean(scores_a[:, np.newaxis] > scores_b[np.newaxis, :]))
