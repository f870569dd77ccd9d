"""Local linear and logistic surrogate explainers.

Both explainers fit a simple model to the black box's outputs on masked
variants of one instance, weighted by proximity to the original:

* the linear variant regresses the Fake-class probability with weighted
  ridge (intercept unpenalized) and reports the top-k signed token weights,
  positive meaning "pushes toward Fake";
* the logistic variant fits a weighted logistic surrogate by IRLS and
  reports a signed decision score: the surrogate's Fake logit at the full
  instance. Score above zero means the surrogate calls the instance Fake,
  and the reported probability is the logistic of the score for the
  predicted class. The intercept appears in the weight table as BIAS.

Feature sparsity is realized by refitting on the k features with the
largest full-fit weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .classifier import ProbVector
from .corpus import Label, TokenizerConfig
from .errors import DegenerateDesignError
from .perturbation import (
    InterpretableInstance,
    PerturbationConfig,
    decompose,
    mask_proximities,
    predict_unique,
    realize,
    sample_masks,
)

BIAS_FEATURE = "BIAS"

KIND_LINEAR = "linear"
KIND_LOGISTIC = "logistic"


@dataclass(frozen=True)
class TokenWeight:
    token: str
    position: int | None
    weight: float


@dataclass
class SurrogateFit:
    masks: np.ndarray
    targets: np.ndarray
    sample_weights: np.ndarray
    l2: float
    coefficients: np.ndarray
    intercept: float
    kind: str = KIND_LINEAR


@dataclass
class LimeExplanation:
    text: str
    class_probs: ProbVector
    weights: list[TokenWeight]
    intercept: float
    local_fit: float
    top_k: list[str]
    seed: int

    @property
    def prediction(self) -> Label:
        return self.class_probs.label

    def top_positions(self) -> set[int]:
        return {w.position for w in self.weights}

    def to_record(self) -> dict:
        return {
            "method": "lime",
            "text": self.text,
            "prediction": self.prediction.value,
            "class_probs": [self.class_probs.p_real, self.class_probs.p_fake],
            "intercept": self.intercept,
            "weights": [
                {"token": w.token, "position": w.position, "weight": w.weight} for w in self.weights
            ],
            "fidelity": self.local_fit,
            "seed": self.seed,
        }


@dataclass
class Eli5Explanation:
    text: str
    prediction: Label
    probability: float
    score: float
    weight_table: list[TokenWeight]
    class_probs: ProbVector
    fidelity: float
    seed: int

    def top_positions(self, k: int | None = None) -> set[int]:
        tokens = [w for w in self.weight_table if w.position is not None]
        tokens.sort(key=lambda w: (-abs(w.weight), w.position))
        if k is not None:
            tokens = tokens[:k]
        return {w.position for w in tokens}

    def to_record(self) -> dict:
        return {
            "method": "eli5",
            "text": self.text,
            "prediction": self.prediction.value,
            "class_probs": [self.class_probs.p_real, self.class_probs.p_fake],
            "score": self.score,
            "intercept": next(w.weight for w in self.weight_table if w.position is None),
            "weights": [
                {"token": w.token, "position": w.position, "weight": w.weight}
                for w in self.weight_table
                if w.position is not None
            ],
            "fidelity": self.fidelity,
            "seed": self.seed,
        }


def _check_design(masks: np.ndarray, sample_weights: np.ndarray) -> None:
    if masks.ndim != 2 or masks.shape[0] < 2:
        raise DegenerateDesignError("need at least two perturbation rows")
    if np.unique(masks, axis=0).shape[0] < 2:
        raise DegenerateDesignError("all masks are identical")
    if np.any(sample_weights < 0) or not np.any(sample_weights > 0):
        raise ValueError("sample weights must be nonnegative and not all zero")


def fit_weighted_linear(
    masks: np.ndarray,
    targets: np.ndarray,
    sample_weights: np.ndarray,
    l2: float = 1.0,
) -> SurrogateFit:
    """Solve the weighted ridge normal equations; intercept unpenalized.

    Minimizes sum_i w_i (y_i - b0 - b.z_i)^2 + l2 * ||b||^2.
    """
    masks = np.asarray(masks, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    sample_weights = np.asarray(sample_weights, dtype=np.float64)
    _check_design(masks, sample_weights)
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")

    n, d = masks.shape
    design = np.hstack([np.ones((n, 1)), masks])
    weighted = design * sample_weights[:, None]
    gram = design.T @ weighted
    penalty = np.diag([0.0] + [l2] * d)
    rhs = weighted.T @ targets
    try:
        theta = np.linalg.solve(gram + penalty, rhs)
    except np.linalg.LinAlgError:
        theta, *_ = np.linalg.lstsq(gram + penalty, rhs, rcond=None)
    return SurrogateFit(
        masks=masks,
        targets=targets,
        sample_weights=sample_weights,
        l2=l2,
        coefficients=theta[1:],
        intercept=float(theta[0]),
        kind=KIND_LINEAR,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def fit_weighted_logistic(
    masks: np.ndarray,
    targets: np.ndarray,
    sample_weights: np.ndarray,
    l2: float = 1.0,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> SurrogateFit:
    """Ridge-penalized weighted logistic fit by iteratively reweighted
    least squares (Newton steps); targets may be soft labels in [0, 1]."""
    masks = np.asarray(masks, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    sample_weights = np.asarray(sample_weights, dtype=np.float64)
    _check_design(masks, sample_weights)

    n, d = masks.shape
    design = np.hstack([np.ones((n, 1)), masks])
    penalty = np.diag([0.0] + [l2] * d)
    theta = np.zeros(d + 1)
    for _ in range(max_iter):
        eta = design @ theta
        p = _sigmoid(eta)
        gradient = design.T @ (sample_weights * (p - targets)) + penalty @ theta
        curvature = sample_weights * p * (1.0 - p)
        hessian = design.T @ (design * curvature[:, None]) + penalty
        try:
            step = np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hessian + 1e-10 * np.eye(d + 1), gradient, rcond=None)[0]
        theta = theta - step
        if np.max(np.abs(step)) <= tol:
            break
    return SurrogateFit(
        masks=masks,
        targets=targets,
        sample_weights=sample_weights,
        l2=l2,
        coefficients=theta[1:],
        intercept=float(theta[0]),
        kind=KIND_LOGISTIC,
    )


def surrogate_fidelity(
    fit: SurrogateFit,
    masks: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
) -> float:
    """Proximity-weighted goodness of the surrogate on its own design.

    Linear fits return the weighted R^2; logistic fits return the weighted
    agreement between the surrogate's decision and the black box's argmax.
    """
    masks = np.asarray(masks, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    eta = fit.intercept + masks @ fit.coefficients
    total = weights.sum()
    if fit.kind == KIND_LOGISTIC:
        agree = (eta > 0) == (targets >= 0.5)
        return float((weights * agree).sum() / total)
    residual = targets - eta
    sse = float((weights * residual**2).sum())
    mean = float((weights * targets).sum() / total)
    sst = float((weights * (targets - mean) ** 2).sum())
    # Targets constant up to round-off: a surrogate matching the constant is
    # a perfect fit, not a division-by-noise artifact.
    if sst <= 1e-18 * total:
        return 1.0 if sse <= 1e-18 * total else 0.0
    return 1.0 - sse / sst


def _enumerate_masks(d: int) -> np.ndarray:
    if d > 16:
        raise ValueError(f"exhaustive enumeration over 2^{d} masks is not practical")
    codes = np.arange(2**d, dtype=np.uint32)
    return ((codes[:, None] >> np.arange(d)[None, :]) & 1).astype(np.int8)


def _prepare(
    predictor: Callable[[Sequence[str]], list[ProbVector]],
    text: str,
    config: PerturbationConfig,
    tokenizer: TokenizerConfig,
    exhaustive: bool,
    threads: int,
) -> tuple[InterpretableInstance, np.ndarray, np.ndarray, np.ndarray, ProbVector]:
    instance = decompose(text, tokenizer)
    if exhaustive:
        masks = _enumerate_masks(instance.d)
    else:
        masks = sample_masks(instance.d, config.n_samples, config.seed)
    texts = [realize(instance, mask, config.mask_policy) for mask in masks]
    probs = predict_unique(predictor, texts, threads=threads)
    targets = np.array([p.p_fake for p in probs], dtype=np.float64)
    weights = mask_proximities(masks, config.kernel_width)
    original = predict_unique(predictor, [text], threads=1)[0]
    return instance, masks, targets, weights, original


def _select_top_k(coefficients: np.ndarray, k: int) -> list[int]:
    order = sorted(range(len(coefficients)), key=lambda i: (-abs(coefficients[i]), i))
    return sorted(order[: max(1, min(k, len(coefficients)))])


def lime_explain(
    predictor: Callable[[Sequence[str]], list[ProbVector]],
    text: str,
    config: PerturbationConfig = PerturbationConfig(),
    k: int = 5,
    l2: float = 1.0,
    tokenizer: TokenizerConfig = TokenizerConfig(),
    exhaustive: bool = False,
    threads: int = 1,
) -> LimeExplanation:
    """Explain one prediction with a weighted ridge surrogate.

    Samples masked variants, queries the predictor once per unique
    realization, regresses the Fake probability on the masks with
    proximity weights, then refits on the k largest-weight features.
    Deterministic for fixed (text, predictor, config, seed).
    """
    instance, masks, targets, weights, original = _prepare(
        predictor, text, config, tokenizer, exhaustive, threads
    )
    full = fit_weighted_linear(masks, targets, weights, l2)
    selected = _select_top_k(full.coefficients, k)
    restricted = fit_weighted_linear(masks[:, selected], targets, weights, l2)
    local_fit = surrogate_fidelity(restricted, masks[:, selected], targets, weights)

    pairs = sorted(
        zip(selected, restricted.coefficients),
        key=lambda item: (-abs(item[1]), item[0]),
    )
    token_weights = [
        TokenWeight(token=instance.tokens[pos], position=pos, weight=float(w)) for pos, w in pairs
    ]
    return LimeExplanation(
        text=text,
        class_probs=original,
        weights=token_weights,
        intercept=restricted.intercept,
        local_fit=local_fit,
        top_k=[tw.token for tw in token_weights],
        seed=config.seed,
    )


def eli5_explain(
    predictor: Callable[[Sequence[str]], list[ProbVector]],
    text: str,
    config: PerturbationConfig = PerturbationConfig(),
    k: int = 5,
    l2: float = 1.0,
    tokenizer: TokenizerConfig = TokenizerConfig(),
    threads: int = 1,
) -> Eli5Explanation:
    """Explain one prediction with a weighted logistic surrogate.

    The score is the surrogate's Fake logit at the full instance, i.e.
    intercept plus the sum of the reported token weights; positive score
    means Fake and the shown probability is the logistic of the score for
    the predicted class.
    """
    instance, masks, targets, weights, original = _prepare(
        predictor, text, config, tokenizer, False, threads
    )
    full = fit_weighted_logistic(masks, targets, weights, l2)
    selected = _select_top_k(full.coefficients, k)
    restricted = fit_weighted_logistic(masks[:, selected], targets, weights, l2)
    fidelity = surrogate_fidelity(restricted, masks[:, selected], targets, weights)

    score = float(restricted.intercept + restricted.coefficients.sum())
    prediction = Label.FAKE if score > 0 else Label.REAL
    fake_probability = float(_sigmoid(np.array([score]))[0])
    probability = fake_probability if prediction is Label.FAKE else 1.0 - fake_probability

    table = [TokenWeight(token=BIAS_FEATURE, position=None, weight=restricted.intercept)]
    pairs = sorted(
        zip(selected, restricted.coefficients),
        key=lambda item: (-abs(item[1]), item[0]),
    )
    table.extend(
        TokenWeight(token=instance.tokens[pos], position=pos, weight=float(w)) for pos, w in pairs
    )
    return Eli5Explanation(
        text=text,
        prediction=prediction,
        probability=probability,
        score=score,
        weight_table=table,
        class_probs=original,
        fidelity=fidelity,
        seed=config.seed,
    )
