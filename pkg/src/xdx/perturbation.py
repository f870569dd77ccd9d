"""Token-presence perturbation engine shared by all explainers.

An instance is decomposed into d positional word features; perturbations
are binary masks over those positions (1 = token kept). Masks are drawn so
the number of removed tokens is uniform over {0..d-1}, which represents
small and large perturbations equally and never produces the all-empty
text for d >= 2. Proximity to the original instance is an exponential
kernel over the cosine distance between the mask and the all-ones vector:

    proximity(z) = exp(-D(z)^2 / sigma^2),  D(z) = 100 * (1 - sqrt(s/d))

where s is the number of kept tokens. For the all-ones mask D = 0 and the
proximity is exactly 1.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import TokenizerConfig, content_tokens
from .errors import MaskLengthMismatchError, NoContentTokensError, PredictorFailureError

MASK_POLICY_DROP = "drop"
MASK_POLICY_UNK = "replace_with_unk"
UNK_TOKEN = "unk"


@dataclass(frozen=True)
class InterpretableInstance:
    """A text decomposed into its positional word features."""

    original_text: str
    tokens: tuple[str, ...]

    @property
    def d(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class PerturbationSample:
    mask: tuple[int, ...]
    realized_text: str
    proximity: float


@dataclass(frozen=True)
class PerturbationConfig:
    n_samples: int = 500
    kernel_width: float = 25.0
    mask_policy: str = MASK_POLICY_DROP
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.kernel_width <= 0:
            raise ValueError("kernel_width must be positive")
        if self.mask_policy not in (MASK_POLICY_DROP, MASK_POLICY_UNK):
            raise ValueError(f"unknown mask policy {self.mask_policy!r}")


def decompose(text: str, tokenizer: TokenizerConfig = TokenizerConfig()) -> InterpretableInstance:
    """Turn a text into an interpretable instance; duplicates stay distinct."""
    tokens = content_tokens(text, tokenizer)
    if not tokens:
        raise NoContentTokensError(f"no content tokens in {text!r}")
    return InterpretableInstance(original_text=text, tokens=tuple(tokens))


def sample_masks(d: int, n_samples: int, seed: int | np.random.Generator = 0) -> np.ndarray:
    """Draw n binary masks of length d, removal count uniform over {0..d-1}.

    For d = 1 the removal count is uniform over {0, 1}, so the single-token
    instance still gets both the kept and the removed variant.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if d == 1:
        return rng.integers(0, 2, size=(n_samples, 1)).astype(np.int8)
    removed = rng.integers(0, d, size=n_samples)
    perms = np.argsort(rng.random((n_samples, d)), axis=1)
    masks = np.empty((n_samples, d), dtype=np.int8)
    masks[np.arange(n_samples)[:, None], perms] = (
        np.arange(d)[None, :] >= removed[:, None]
    ).astype(np.int8)
    return masks


def expected_keep_probability(d: int) -> float:
    """Exact per-position keep probability of the removal-count scheme."""
    if d == 1:
        return 0.5
    removed_counts = np.arange(d)
    return float(np.mean(1.0 - removed_counts / d))


def realize(instance: InterpretableInstance, mask: Sequence[int], policy: str = MASK_POLICY_DROP) -> str:
    """Render the masked instance as text.

    drop: kept tokens joined by single spaces. replace_with_unk: removed
    tokens become the literal token ``unk``.
    """
    if len(mask) != instance.d:
        raise MaskLengthMismatchError(f"mask length {len(mask)} != d {instance.d}")
    if policy == MASK_POLICY_DROP:
        return " ".join(tok for tok, keep in zip(instance.tokens, mask) if keep)
    if policy == MASK_POLICY_UNK:
        return " ".join(tok if keep else UNK_TOKEN for tok, keep in zip(instance.tokens, mask))
    raise ValueError(f"unknown mask policy {policy!r}")


def proximity(mask: Sequence[int], kernel_width: float = 25.0) -> float:
    mask = np.asarray(mask)
    kept = float(np.count_nonzero(mask))
    d = mask.shape[-1]
    distance = 100.0 * (1.0 - np.sqrt(kept / d))
    return float(np.exp(-(distance**2) / kernel_width**2))


def mask_proximities(masks: np.ndarray, kernel_width: float = 25.0) -> np.ndarray:
    kept = np.count_nonzero(masks, axis=1).astype(float)
    d = masks.shape[1]
    distances = 100.0 * (1.0 - np.sqrt(kept / d))
    return np.exp(-(distances**2) / kernel_width**2)


def perturb(
    instance: InterpretableInstance, config: PerturbationConfig
) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Sample masks and return (masks, realized texts, proximities)."""
    masks = sample_masks(instance.d, config.n_samples, config.seed)
    texts = [realize(instance, mask, config.mask_policy) for mask in masks]
    return masks, texts, mask_proximities(masks, config.kernel_width)


def generate_samples(
    instance: InterpretableInstance, config: PerturbationConfig
) -> list[PerturbationSample]:
    masks, texts, weights = perturb(instance, config)
    return [
        PerturbationSample(mask=tuple(int(v) for v in mask), realized_text=text, proximity=float(w))
        for mask, text, w in zip(masks, texts, weights)
    ]


def call_predictor(
    predictor: Callable[[Sequence[str]], list],
    texts: Sequence[str],
    threads: int = 1,
    chunk_size: int = 256,
) -> list:
    """Query a predictor over texts, optionally chunked across threads.

    Results are reassembled in input order, so the output is independent
    of the thread count. Predictor exceptions surface as PredictorFailure.
    """
    texts = list(texts)
    if not texts:
        return []
    try:
        if threads <= 1 or len(texts) <= chunk_size:
            return list(predictor(texts))
        chunks = [texts[i : i + chunk_size] for i in range(0, len(texts), chunk_size)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda chunk: list(predictor(chunk)), chunks))
        return [item for part in parts for item in part]
    except Exception as exc:  # noqa: BLE001 - contract: wrap black-box failures
        if isinstance(exc, PredictorFailureError):
            raise
        raise PredictorFailureError(f"predictor failed: {exc}") from exc


def predict_unique(
    predictor: Callable[[Sequence[str]], list],
    texts: Sequence[str],
    threads: int = 1,
) -> list:
    """Query the predictor once per unique text and map results back."""
    unique = list(dict.fromkeys(texts))
    results = call_predictor(predictor, unique, threads=threads)
    by_text = dict(zip(unique, results))
    return [by_text[t] for t in texts]
