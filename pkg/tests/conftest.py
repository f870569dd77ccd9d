import numpy as np
import pytest

from xdx.classifier import ProbVector


def prob(p_fake: float) -> ProbVector:
    return ProbVector(p_real=1.0 - p_fake, p_fake=p_fake)


def constant_predictor(p_fake: float = 0.5):
    return lambda texts: [prob(p_fake) for _ in texts]


def token_rule_predictor(trigger_tokens, p_present: float = 0.9, p_absent: float = 0.1):
    """Fake iff every trigger token is present in the (space-joined) text."""
    triggers = set(trigger_tokens)

    def predictor(texts):
        out = []
        for text in texts:
            present = triggers <= set(text.split())
            out.append(prob(p_present if present else p_absent))
        return out

    return predictor


def mask_value_predictor(tokens, fn):
    """Predictor computing p_fake as fn(mask) from token presence.

    Tokens must be pairwise distinct so the mask is recoverable from the
    realized text.
    """
    assert len(set(tokens)) == len(tokens), "tokens must be distinct"

    def predictor(texts):
        out = []
        for text in texts:
            present = set(text.split())
            mask = np.array([1.0 if tok in present else 0.0 for tok in tokens])
            out.append(prob(float(fn(mask))))
        return out

    return predictor


def distinct_tokens(d: int) -> list[str]:
    return [f"tok{chr(ord('a') + i)}" for i in range(d)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240)
