"""Shapley-value attributions over token-presence features.

A coalition is a subset of token positions; its value is the predictor's
output (Fake log-odds by default, clamped to +-16, or the raw probability)
on the text realized with only those tokens kept. Attributions phi_i are
classic Shapley values of that set game:

    phi_i = sum over S not containing i of
            |S|! (d - |S| - 1)! / d! * (v(S + {i}) - v(S))

Exact mode enumerates all 2^d coalitions (d <= 12) and doubles as the
test oracle via :func:`brute_force_shapley`. Sampled mode solves a
kernel-weighted least squares over sampled interior coalitions with
weights (d-1) / (C(d,s) * s * (d-s)) and the two boundary values v(empty)
and v(full) enforced exactly, so base_value + sum(phi) equals fx by
construction. With every interior coalition included the kernel solution
coincides with the exact values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .classifier import ProbVector
from .corpus import Label, TokenizerConfig
from .errors import DimensionTooLargeError, OutOfRangeError
from .perturbation import InterpretableInstance, decompose, predict_unique, realize

MODE_EXACT = "exact"
MODE_SAMPLED = "sampled"

TARGET_LOG_ODDS = "log_odds"
TARGET_PROBABILITY = "probability"

EXACT_MODE_MAX_D = 12
LOG_ODDS_CLAMP = 16.0


@dataclass(frozen=True)
class ShapConfig:
    mode: str = MODE_EXACT
    n_coalitions: int = 2048
    target: str = TARGET_LOG_ODDS
    seed: int = 0
    background_texts: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.mode not in (MODE_EXACT, MODE_SAMPLED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.target not in (TARGET_LOG_ODDS, TARGET_PROBABILITY):
            raise ValueError(f"unknown target {self.target!r}")
        if self.n_coalitions < 1:
            raise ValueError("n_coalitions must be positive")


@dataclass
class ShapExplanation:
    text: str
    tokens: tuple[str, ...]
    prediction: Label
    fx: float
    base_value: float
    phi: np.ndarray
    additivity_residual: float
    mode: str
    seed: int
    coalition_values: dict[int, float] | None = None  # exact mode only, bitmask -> v

    def top_positions(self, k: int) -> set[int]:
        order = sorted(range(len(self.phi)), key=lambda i: (-abs(self.phi[i]), i))
        return set(order[:k])

    def to_record(self) -> dict:
        return {
            "method": "shap",
            "text": self.text,
            "prediction": self.prediction.value,
            "fx": self.fx,
            "base_value": self.base_value,
            "phi": [
                {"token": tok, "position": i, "value": float(v)}
                for i, (tok, v) in enumerate(zip(self.tokens, self.phi))
            ],
            "residual": self.additivity_residual,
            "mode": self.mode,
            "seed": self.seed,
        }


def _to_target(prob: ProbVector, target: str) -> float:
    if target == TARGET_PROBABILITY:
        return prob.p_fake
    p = min(max(prob.p_fake, 1e-300), 1.0 - 1e-16)
    return float(np.clip(math.log(p / (1.0 - p)), -LOG_ODDS_CLAMP, LOG_ODDS_CLAMP))


def coalition_value(
    predictor: Callable[[Sequence[str]], list[ProbVector]],
    instance: InterpretableInstance,
    subset: Sequence[int],
    target: str = TARGET_LOG_ODDS,
) -> float:
    """Value of one coalition: predictor output with only ``subset`` kept."""
    positions = set(subset)
    if positions and (min(positions) < 0 or max(positions) >= instance.d):
        raise ValueError(f"subset {sorted(positions)} outside 0..{instance.d - 1}")
    mask = [1 if i in positions else 0 for i in range(instance.d)]
    text = realize(instance, mask)
    return _to_target(predict_unique(predictor, [text])[0], target)


def _values_for_bitmasks(
    predictor, instance: InterpretableInstance, bitmasks: Sequence[int], target: str, threads: int
) -> np.ndarray:
    d = instance.d
    texts = []
    for code in bitmasks:
        mask = [(code >> i) & 1 for i in range(d)]
        texts.append(realize(instance, mask))
    probs = predict_unique(predictor, texts, threads=threads)
    return np.array([_to_target(p, target) for p in probs], dtype=np.float64)


def shap_kernel_weight(d: int, s: int) -> float:
    """Kernel regression weight for coalitions of size s out of d."""
    if s <= 0 or s >= d:
        raise OutOfRangeError(f"coalition size {s} must satisfy 1 <= s <= {d - 1}")
    return (d - 1) / (math.comb(d, s) * s * (d - s))


def brute_force_shapley(
    predictor: Callable[[Sequence[str]], list[ProbVector]],
    instance: InterpretableInstance,
    target: str = TARGET_LOG_ODDS,
    threads: int = 1,
) -> np.ndarray:
    """Shapley values by full enumeration; the independent oracle (d <= 12)."""
    values = _all_coalition_values(predictor, instance, target, threads)
    return _shapley_from_table(values, instance.d)


def _all_coalition_values(predictor, instance, target: str, threads: int) -> np.ndarray:
    d = instance.d
    if d > EXACT_MODE_MAX_D:
        raise DimensionTooLargeError(f"d={d} exceeds exact-mode limit {EXACT_MODE_MAX_D}")
    return _values_for_bitmasks(predictor, instance, range(2**d), target, threads)


def _shapley_from_table(values: np.ndarray, d: int) -> np.ndarray:
    size_weight = [
        math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) for s in range(d)
    ]
    popcount = np.array([bin(code).count("1") for code in range(2**d)])
    phi = np.zeros(d)
    for i in range(d):
        bit = 1 << i
        without = np.nonzero((np.arange(2**d) & bit) == 0)[0]
        gains = values[without | bit] - values[without]
        weights = np.array([size_weight[popcount[code]] for code in without])
        phi[i] = float(weights @ gains)
    return phi


def shap_explain(
    predictor: Callable[[Sequence[str]], list[ProbVector]],
    text: str,
    config: ShapConfig = ShapConfig(),
    tokenizer: TokenizerConfig = TokenizerConfig(),
    threads: int = 1,
) -> ShapExplanation:
    """Attribute the prediction on ``text`` to its tokens.

    Exact mode enumerates every coalition; sampled mode uses the kernel
    regression with the additivity constraint enforced exactly. With a
    background configured, the empty-coalition value is the mean target
    over the background texts instead of the fully masked text.
    """
    instance = decompose(text, tokenizer)
    d = instance.d
    rng = np.random.default_rng(config.seed)

    if config.mode == MODE_EXACT:
        values = _all_coalition_values(predictor, instance, config.target, threads)
        if config.background_texts is not None:
            values = values.copy()
            values[0] = _background_value(predictor, config, threads)
        phi = _shapley_from_table(values, d)
        base, fx = float(values[0]), float(values[-1])
        table = {code: float(values[code]) for code in range(2**d)}
    else:
        base = (
            _background_value(predictor, config, threads)
            if config.background_texts is not None
            else _values_for_bitmasks(predictor, instance, [0], config.target, threads)[0]
        )
        fx = _values_for_bitmasks(predictor, instance, [2**d - 1], config.target, threads)[0]
        phi = _kernel_shap(predictor, instance, config, base, fx, rng, threads)
        base, fx = float(base), float(fx)
        table = None

    residual = abs(fx - base - float(phi.sum()))
    prediction = predict_unique(predictor, [text])[0].label
    return ShapExplanation(
        text=text,
        tokens=instance.tokens,
        prediction=prediction,
        fx=fx,
        base_value=base,
        phi=phi,
        additivity_residual=residual,
        mode=config.mode,
        seed=config.seed,
        coalition_values=table,
    )


def _background_value(predictor, config: ShapConfig, threads: int) -> float:
    probs = predict_unique(predictor, list(config.background_texts), threads=threads)
    return float(np.mean([_to_target(p, config.target) for p in probs]))


def _kernel_shap(
    predictor,
    instance: InterpretableInstance,
    config: ShapConfig,
    base: float,
    fx: float,
    rng: np.random.Generator,
    threads: int,
) -> np.ndarray:
    d = instance.d
    delta = fx - base
    if d == 1:
        return np.array([delta])

    interior = 2**d - 2
    if interior <= config.n_coalitions:
        bitmasks = list(range(1, 2**d - 1))
        weights = np.array(
            [shap_kernel_weight(d, bin(code).count("1")) for code in bitmasks]
        )
    else:
        bitmasks, weights = _sample_coalitions(d, config.n_coalitions, rng)

    values = _values_for_bitmasks(predictor, instance, bitmasks, config.target, threads)
    Z = ((np.array(bitmasks)[:, None] >> np.arange(d)[None, :]) & 1).astype(np.float64)
    y = values - base

    # Enforce sum(phi) = delta by eliminating the last feature.
    reduced = Z[:, :-1] - Z[:, -1:]
    target = y - Z[:, -1] * delta
    sqrt_w = np.sqrt(weights)
    beta, *_ = np.linalg.lstsq(reduced * sqrt_w[:, None], target * sqrt_w, rcond=None)
    return np.append(beta, delta - beta.sum())


def _sample_coalitions(d: int, n: int, rng: np.random.Generator) -> tuple[list[int], np.ndarray]:
    sizes = np.arange(1, d)
    size_mass = (d - 1) / (sizes * (d - sizes))
    size_probs = size_mass / size_mass.sum()
    drawn = rng.choice(sizes, size=n, p=size_probs)
    counts: dict[int, int] = {}
    for s in drawn:
        positions = rng.choice(d, size=int(s), replace=False)
        code = 0
        for pos in positions:
            code |= 1 << int(pos)
        counts[code] = counts.get(code, 0) + 1
    bitmasks = sorted(counts)
    return bitmasks, np.array([counts[c] for c in bitmasks], dtype=np.float64)


def empirical_dummy_positions(values: dict[int, float], d: int, atol: float = 1e-12) -> list[int]:
    """Positions whose presence never changes the coalition value."""
    dummies = []
    for i in range(d):
        bit = 1 << i
        if all(
            abs(values[code | bit] - values[code]) <= atol
            for code in values
            if not code & bit
        ):
            dummies.append(i)
    return dummies


def dummy_violation(explanation: ShapExplanation) -> float | None:
    """Largest |phi| assigned to an empirically inert token; exact mode only."""
    if explanation.coalition_values is None:
        return None
    dummies = empirical_dummy_positions(explanation.coalition_values, len(explanation.tokens))
    if not dummies:
        return 0.0
    return float(max(abs(explanation.phi[i]) for i in dummies))
