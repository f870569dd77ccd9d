import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xdx.errors import MaskLengthMismatchError, NoContentTokensError
from xdx.perturbation import (
    InterpretableInstance,
    PerturbationConfig,
    decompose,
    expected_keep_probability,
    generate_samples,
    mask_proximities,
    proximity,
    realize,
    sample_masks,
)


class TestDecompose:
    def test_four_word_sentence(self):
        inst = decompose("Cocaine used covid protection")
        assert inst.tokens == ("cocaine", "used", "covid", "protection")
        assert inst.d == 4

    def test_whitespace_only(self):
        with pytest.raises(NoContentTokensError):
            decompose("   ")

    def test_duplicates_are_positional(self):
        inst = decompose("hot bath hot bath")
        assert inst.d == 4
        assert inst.tokens == ("hot", "bath", "hot", "bath")


class TestSampleMasks:
    def test_d1_space(self):
        masks = sample_masks(1, 200, seed=0)
        assert set(map(tuple, masks.tolist())) <= {(0,), (1,)}
        # Both variants actually occur for a 1-token instance.
        assert len(set(map(tuple, masks.tolist()))) == 2

    def test_seeded_determinism(self):
        a = sample_masks(5, 500, seed=42)
        b = sample_masks(5, 500, seed=42)
        assert np.array_equal(a, b)

    def test_no_all_zero_mask_for_d_ge_2(self):
        for d in (2, 3, 7):
            masks = sample_masks(d, 2000, seed=1)
            assert masks.sum(axis=1).min() >= 1

    def test_per_position_rate_matches_enumeration(self):
        # Independent oracle: removal count is uniform over {0..d-1}, so the
        # exact per-position zero probability is mean(r/d) over that range.
        d, n = 3, 10000
        expected_zero = sum(r / d for r in range(d)) / d
        assert expected_zero == pytest.approx(1 / 3)
        masks = sample_masks(d, n, seed=9)
        zero_rate = 1.0 - masks.mean(axis=0)
        assert np.all(zero_rate >= 0.30) and np.all(zero_rate <= 0.37)
        assert np.all(np.abs(zero_rate - expected_zero) <= 0.02)

    def test_keep_frequency_matches_expected_helper(self):
        for d in (2, 4, 9):
            masks = sample_masks(d, 10000, seed=3)
            keep = masks.mean(axis=0)
            assert np.all(np.abs(keep - expected_keep_probability(d)) <= 0.02)


class TestRealize:
    def test_identity_roundtrip(self):
        inst = decompose("Taking hot bath will prevent disease")
        assert realize(inst, [1] * inst.d) == " ".join(inst.tokens)

    def test_drop_policy(self):
        inst = InterpretableInstance(original_text="a b c", tokens=("a", "b", "c"))
        assert realize(inst, [1, 0, 1], "drop") == "a c"

    def test_unk_policy(self):
        inst = InterpretableInstance(original_text="a b c", tokens=("a", "b", "c"))
        assert realize(inst, [1, 0, 1], "replace_with_unk") == "a unk c"

    def test_length_mismatch(self):
        inst = decompose("a b c")
        with pytest.raises(MaskLengthMismatchError):
            realize(inst, [1, 0])


class TestProximity:
    def test_all_ones_is_one(self):
        assert proximity([1, 1, 1, 1]) == pytest.approx(1.0)

    def test_hand_evaluated_closed_form(self):
        # d=4, s=1: D = 100 * (1 - sqrt(1/4)) = 50, sigma=25 -> exp(-4).
        assert proximity([1, 0, 0, 0], 25.0) == pytest.approx(math.exp(-4.0), abs=1e-12)

    def test_monotone_in_kept_count(self):
        assert proximity([1, 1, 1, 0]) > proximity([1, 0, 0, 0])

    @given(
        st.integers(min_value=1, max_value=12).flatmap(
            lambda d: st.lists(st.integers(min_value=0, max_value=1), min_size=d, max_size=d)
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_domain_and_identity(self, mask):
        value = proximity(mask)
        assert 0 < value <= 1
        assert (value == 1.0) == all(v == 1 for v in mask)

    def test_vectorized_matches_scalar(self):
        masks = sample_masks(6, 64, seed=5)
        vector = mask_proximities(masks, 25.0)
        for row, value in zip(masks, vector):
            assert value == pytest.approx(proximity(row, 25.0))


def test_generate_samples_bundles_fields():
    config = PerturbationConfig(n_samples=50, seed=8)
    inst = decompose("one two three four")
    samples = generate_samples(inst, config)
    assert len(samples) == 50
    for s in samples:
        assert len(s.mask) == 4
        kept = [tok for tok, keep in zip(inst.tokens, s.mask) if keep]
        assert s.realized_text == " ".join(kept)
        assert 0 < s.proximity <= 1
