"""High-precision if-then anchor rules via beam search with bandit bounds.

An anchor is a set of token positions whose forced presence (nearly)
guarantees the model keeps its original prediction under perturbation.
Candidate rules are grown one position at a time; at each size the best
``beam_width`` rules are identified with a KL-LUCB best-arm loop, and the
search stops at the first rule whose Bernoulli-KL lower confidence bound
on precision reaches tau - epsilon. If the sampling budget runs out the
best-effort rule is returned with ``found=False`` instead of erroring, so
batch reports never abort.

Precision of a rule is estimated on perturbations drawn from the shared
mask distribution with the rule's positions forced to one; coverage is the
fraction of unconditioned perturbations that already satisfy the rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .classifier import ProbVector
from .corpus import Label, TokenizerConfig
from .perturbation import (
    InterpretableInstance,
    decompose,
    predict_unique,
    realize,
    sample_masks,
)


@dataclass(frozen=True)
class AnchorRule:
    positions: frozenset[int] = frozenset()

    def sorted_positions(self) -> tuple[int, ...]:
        return tuple(sorted(self.positions))

    def tokens(self, instance: InterpretableInstance) -> list[str]:
        return [instance.tokens[i] for i in self.sorted_positions()]


@dataclass(frozen=True)
class PrecisionEstimate:
    mean: float
    lower: float
    upper: float
    n_samples: int


@dataclass(frozen=True)
class AnchorConfig:
    precision_threshold: float = 0.95  # tau
    confidence: float = 0.1  # delta
    tolerance: float = 0.15  # epsilon
    beam_width: int = 2
    batch_size: int = 32
    max_perturbations: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.precision_threshold <= 1:
            raise ValueError("precision_threshold must be in (0, 1]")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must be in (0, 1)")
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must be in (0, 1)")


@dataclass
class AnchorResult:
    text: str
    anchor: list[str]
    positions: tuple[int, ...]
    prediction: Label
    precision: float
    coverage: float
    found: bool
    estimate: PrecisionEstimate
    seed: int

    def rendered(self) -> str:
        if not self.found and not self.anchor:
            return "No anchor found"
        joined = " AND ".join(self.anchor) if self.anchor else "(empty rule)"
        return joined if self.found else f"No anchor found (best effort: {joined})"

    def top_positions(self) -> set[int]:
        return set(self.positions)

    def to_record(self) -> dict:
        return {
            "method": "anchor",
            "text": self.text,
            "prediction": self.prediction.value,
            "anchor": list(self.anchor),
            "precision": self.precision,
            "coverage": self.coverage,
            "found": self.found,
            "seed": self.seed,
        }


# --- Bernoulli KL confidence bounds -----------------------------------------


def _kl_bernoulli(p: float, q: float) -> float:
    eps = 1e-15
    p = min(max(p, 0.0), 1.0)
    q = min(max(q, eps), 1.0 - eps)
    total = 0.0
    if p > 0:
        total += p * math.log(p / q)
    if p < 1:
        total += (1 - p) * math.log((1 - p) / (1 - q))
    return total


def kl_bernoulli_bounds(mean: float, n: int, delta: float, tol: float = 1e-6) -> tuple[float, float]:
    """Confidence interval {q : KL(mean || q) <= log(1/delta) / n}.

    Solved by bisection on each side of the mean to tolerance 1e-6.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    level = math.log(1.0 / delta) / n

    lower = _bisect(lambda q: _kl_bernoulli(mean, q), mean, level, 0.0, mean, tol)
    upper = _bisect(lambda q: _kl_bernoulli(mean, q), mean, level, mean, 1.0, tol)
    return lower, upper


def _bisect(kl, mean: float, level: float, lo: float, hi: float, tol: float) -> float:
    """Find the q on [lo, hi] farthest from the mean with kl(q) <= level."""
    if hi - lo <= tol:
        return lo if hi <= mean else hi
    searching_down = hi <= mean
    boundary = lo if searching_down else hi
    if kl(boundary) <= level:
        return boundary
    inner, outer = (hi, lo) if searching_down else (lo, hi)
    for _ in range(100):
        mid = 0.5 * (inner + outer)
        if kl(mid) <= level:
            inner = mid
        else:
            outer = mid
        if abs(inner - outer) <= tol:
            break
    return inner


# --- sampling ----------------------------------------------------------------


@dataclass
class _ArmStats:
    pulls: int = 0
    successes: int = 0

    @property
    def mean(self) -> float:
        return self.successes / self.pulls if self.pulls else 0.0


class _RuleSampler:
    """Draws rule-conditioned perturbations and scores predictor agreement."""

    def __init__(self, predictor, instance, original_label, rng, batch_size, threads):
        self.predictor = predictor
        self.instance = instance
        self.original_label = original_label
        self.rng = rng
        self.batch_size = batch_size
        self.threads = threads

    def pull(self, rule: frozenset[int], stats: _ArmStats, n: int | None = None) -> None:
        size = n or self.batch_size
        masks = sample_masks(self.instance.d, size, self.rng)
        if rule:
            masks[:, sorted(rule)] = 1
        texts = [realize(self.instance, mask) for mask in masks]
        probs = predict_unique(self.predictor, texts, threads=self.threads)
        agree = sum(1 for p in probs if p.label is self.original_label)
        stats.pulls += size
        stats.successes += agree


def estimate_precision(
    rule: Sequence[int] | AnchorRule,
    predictor: Callable[[Sequence[str]], list[ProbVector]],
    instance: InterpretableInstance,
    config: AnchorConfig = AnchorConfig(),
    n_samples: int | None = None,
    threads: int = 1,
) -> PrecisionEstimate:
    """Empirical precision of a rule with KL confidence bounds."""
    positions = rule.positions if isinstance(rule, AnchorRule) else frozenset(rule)
    if positions and (min(positions) < 0 or max(positions) >= instance.d):
        raise ValueError(f"rule positions {sorted(positions)} outside 0..{instance.d - 1}")
    rng = np.random.default_rng(config.seed)
    original_label = predict_unique(predictor, [instance.original_text])[0].label
    sampler = _RuleSampler(predictor, instance, original_label, rng, config.batch_size, threads)
    stats = _ArmStats()
    sampler.pull(frozenset(positions), stats, n=n_samples or config.max_perturbations)
    lower, upper = kl_bernoulli_bounds(stats.mean, stats.pulls, config.confidence)
    return PrecisionEstimate(mean=stats.mean, lower=lower, upper=upper, n_samples=stats.pulls)


# --- search -------------------------------------------------------------------


def find_anchor(
    predictor: Callable[[Sequence[str]], list[ProbVector]],
    text: str,
    config: AnchorConfig = AnchorConfig(),
    tokenizer: TokenizerConfig = TokenizerConfig(),
    threads: int = 1,
) -> AnchorResult:
    """Search for the smallest rule whose precision lower bound clears
    tau - epsilon; ties prefer higher coverage, then lexicographic positions."""
    instance = decompose(text, tokenizer)
    d = instance.d
    rng = np.random.default_rng(config.seed)
    original = predict_unique(predictor, [text])[0]
    sampler = _RuleSampler(predictor, instance, original.label, rng, config.batch_size, threads)

    coverage_pool = sample_masks(d, config.max_perturbations, rng)
    threshold = config.precision_threshold - config.tolerance
    stats: dict[frozenset[int], _ArmStats] = {}

    def coverage(rule: frozenset[int]) -> float:
        if not rule:
            return 1.0
        return float(np.all(coverage_pool[:, sorted(rule)] == 1, axis=1).mean())

    def qualify(rule: frozenset[int], delta: float) -> tuple[bool, PrecisionEstimate]:
        """Sample until the bound decides against tau - epsilon or budget ends."""
        arm = stats.setdefault(rule, _ArmStats())
        if arm.pulls == 0:
            sampler.pull(rule, arm)
        while True:
            lower, upper = kl_bernoulli_bounds(arm.mean, arm.pulls, delta)
            if lower >= threshold or upper < threshold or arm.pulls >= config.max_perturbations:
                return lower >= threshold, PrecisionEstimate(arm.mean, lower, upper, arm.pulls)

            sampler.pull(rule, arm)

    def result(rule, found, estimate) -> AnchorResult:
        ordered = tuple(sorted(rule))
        return AnchorResult(
            text=text,
            anchor=[instance.tokens[i] for i in ordered],
            positions=ordered,
            prediction=original.label,
            precision=estimate.mean,
            coverage=coverage(rule),
            found=found,
            estimate=estimate,
            seed=config.seed,
        )

    # The empty rule is the smallest possible anchor; a predictor that is
    # stable under any perturbation needs no conditions at all.
    empty = frozenset()
    ok, estimate = qualify(empty, config.confidence)
    if ok:
        return result(empty, True, estimate)
    best_rule, best_estimate = empty, estimate

    beam: list[frozenset[int]] = [empty]
    max_size = d - 1 if d >= 2 else 1
    for _ in range(max_size):
        candidates = sorted(
            {base | {j} for base in beam for j in range(d) if j not in base},
            key=lambda rule: tuple(sorted(rule)),
        )
        if not candidates:
            break
        delta_round = config.confidence / len(candidates)
        for rule in candidates:
            arm = stats.setdefault(rule, _ArmStats())
            if arm.pulls == 0:
                sampler.pull(rule, arm)

        _lucb(candidates, stats, sampler, config, delta_round)
        ranked = sorted(
            candidates,
            key=lambda rule: (-stats[rule].mean, -coverage(rule), tuple(sorted(rule))),
        )
        beam = ranked[: config.beam_width]

        qualified: list[tuple[frozenset[int], PrecisionEstimate]] = []
        for rule in beam:
            ok, estimate = qualify(rule, delta_round)
            if ok:
                qualified.append((rule, estimate))
            if estimate.mean > best_estimate.mean:
                best_rule, best_estimate = rule, estimate
        if qualified:
            rule, estimate = min(
                qualified, key=lambda item: (-coverage(item[0]), tuple(sorted(item[0])))
            )
            return result(rule, True, estimate)

    return result(best_rule, False, best_estimate)


def _lucb(
    candidates: list[frozenset[int]],
    stats: dict[frozenset[int], _ArmStats],
    sampler: _RuleSampler,
    config: AnchorConfig,
    delta: float,
) -> None:
    """KL-LUCB refinement: sample the ambiguous boundary arms until the top
    beam_width set separates from the rest (or budgets run out)."""
    width = min(config.beam_width, len(candidates))
    if width == len(candidates):
        return
    while True:
        order = sorted(candidates, key=lambda rule: (-stats[rule].mean, tuple(sorted(rule))))
        top, rest = order[:width], order[width:]
        bounds = {rule: kl_bernoulli_bounds(stats[rule].mean, stats[rule].pulls, delta) for rule in order}
        weakest = min(top, key=lambda rule: bounds[rule][0])
        challenger = max(rest, key=lambda rule: bounds[rule][1])
        if bounds[weakest][0] >= bounds[challenger][1]:
            return
        progressed = False
        for rule in (weakest, challenger):
            if stats[rule].pulls < config.max_perturbations:
                sampler.pull(rule, stats[rule])
                progressed = True
        if not progressed:
            return
