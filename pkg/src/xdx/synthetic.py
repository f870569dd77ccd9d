"""Synthetic corpora for desk-scale cross-domain experiments.

Each domain owns a disjoint content vocabulary; only function words are
shared across domains. A document carries an informative token of its own
label with probability equal to the signal strength, so a bag-of-words
learner tops out near (1 + signal) / 2 within the domain and near chance
on a domain whose informative vocabulary it never saw.
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, Label, Sample

FUNCTION_WORDS = ("the", "a", "of", "to", "and", "in", "on", "for", "with", "that")

DEFAULT_TARGET_DOMAIN = "d0"
DEFAULT_MIXED_DOMAINS = ("d1", "d2", "d3")


def _domain_vocab(domain: str, n_informative: int, n_neutral: int) -> dict[str, list[str]]:
    return {
        "fake": [f"{domain}scam{i}" for i in range(n_informative)],
        "real": [f"{domain}fact{i}" for i in range(n_informative)],
        "neutral": [f"{domain}word{i}" for i in range(n_neutral)],
    }


def _make_domain_samples(
    domain: str,
    n: int,
    signal: float,
    n_informative: int,
    n_neutral: int,
    rng: np.random.Generator,
) -> list[Sample]:
    vocab = _domain_vocab(domain, n_informative, n_neutral)
    labels = [Label.REAL] * (n // 2) + [Label.FAKE] * (n - n // 2)
    samples = []
    for index, label in enumerate(labels):
        length = int(rng.integers(8, 13))
        informative: list[str] = []
        if rng.random() < signal:
            pool = vocab["fake"] if label is Label.FAKE else vocab["real"]
            count = int(rng.integers(1, 3))
            informative = list(rng.choice(pool, size=min(count, len(pool)), replace=False))
        fillers = []
        for _ in range(max(1, length - len(informative))):
            if rng.random() < 0.4:
                fillers.append(str(rng.choice(FUNCTION_WORDS)))
            else:
                fillers.append(str(rng.choice(vocab["neutral"])))
        words = informative + fillers
        rng.shuffle(words)
        samples.append(
            Sample(id=f"{domain}#{index}", text=" ".join(words), label=label, domain=domain)
        )
    order = rng.permutation(len(samples))
    return [samples[i] for i in order]


def generate_synthetic_corpora(
    n_per_domain: int = 500,
    n_informative: int = 6,
    n_neutral: int = 18,
    signal: float = 1.0,
    seed: int = 0,
    target_domain: str = DEFAULT_TARGET_DOMAIN,
    mixed_domains: tuple[str, ...] = DEFAULT_MIXED_DOMAINS,
) -> tuple[Corpus, Corpus]:
    """Build (single-domain corpus, mixed corpus) with label-balanced domains."""
    if n_per_domain < 40:
        raise ValueError("n_per_domain must be >= 40")
    if not 0 < signal <= 1:
        raise ValueError("signal must be in (0, 1]")
    rng = np.random.default_rng(seed)
    single = Corpus(
        name=target_domain,
        samples=tuple(
            _make_domain_samples(target_domain, n_per_domain, signal, n_informative, n_neutral, rng)
        ),
    )
    mixed_samples: list[Sample] = []
    for domain in mixed_domains:
        mixed_samples.extend(
            _make_domain_samples(domain, n_per_domain, signal, n_informative, n_neutral, rng)
        )
    order = rng.permutation(len(mixed_samples))
    mixed = Corpus(name="mixed", samples=tuple(mixed_samples[i] for i in order))
    return single, mixed
