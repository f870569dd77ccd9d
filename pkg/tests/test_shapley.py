import math

import numpy as np
import pytest

from conftest import constant_predictor, distinct_tokens, mask_value_predictor, prob
from xdx.errors import DimensionTooLargeError, OutOfRangeError
from xdx.perturbation import decompose
from xdx.shapley import (
    ShapConfig,
    brute_force_shapley,
    coalition_value,
    dummy_violation,
    empirical_dummy_positions,
    shap_explain,
    shap_kernel_weight,
)


def _hand_shapley(values_by_subset: dict[frozenset, float], d: int) -> np.ndarray:
    """Independent oracle: the textbook formula applied subset by subset."""
    phi = np.zeros(d)
    players = set(range(d))
    for i in range(d):
        for code in range(2**d):
            subset = frozenset(j for j in range(d) if code >> j & 1)
            if i in subset or not subset <= players:
                continue
            weight = (
                math.factorial(len(subset))
                * math.factorial(d - len(subset) - 1)
                / math.factorial(d)
            )
            phi[i] += weight * (values_by_subset[subset | {i}] - values_by_subset[subset])
    return phi


class TestKernelWeight:
    def test_hand_value(self):
        assert shap_kernel_weight(4, 1) == pytest.approx(3 / (4 * 1 * 3))
        assert shap_kernel_weight(4, 1) == pytest.approx(0.25)

    def test_symmetry(self):
        for d in (3, 5, 8):
            for s in range(1, d):
                assert shap_kernel_weight(d, s) == pytest.approx(shap_kernel_weight(d, d - s))

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeError):
            shap_kernel_weight(4, 0)
        with pytest.raises(OutOfRangeError):
            shap_kernel_weight(4, 4)


class TestCoalitionValue:
    def test_full_set_is_fx(self):
        tokens = distinct_tokens(4)
        predictor = mask_value_predictor(tokens, lambda z: 0.2 + 0.1 * z.sum())
        inst = decompose(" ".join(tokens))
        full = coalition_value(predictor, inst, range(4), target="probability")
        assert full == pytest.approx(0.6)

    def test_empty_set_defines_baseline(self):
        tokens = distinct_tokens(3)
        predictor = mask_value_predictor(tokens, lambda z: 0.2 + 0.1 * z.sum())
        inst = decompose(" ".join(tokens))
        assert coalition_value(predictor, inst, [], target="probability") == pytest.approx(0.2)

    def test_log_odds_clamped_at_saturation(self):
        predictor = lambda texts: [prob(1.0) for _ in texts]
        inst = decompose("one two")
        assert coalition_value(predictor, inst, [0, 1]) == pytest.approx(16.0)


class TestBruteForce:
    def test_additive_game(self):
        tokens = distinct_tokens(5)
        coefs = np.array([0.05, -0.03, 0.08, 0.01, -0.06])
        predictor = mask_value_predictor(tokens, lambda z: 0.4 + float(coefs @ z))
        inst = decompose(" ".join(tokens))
        phi = brute_force_shapley(predictor, inst, target="probability")
        np.testing.assert_allclose(phi, coefs, atol=1e-9)

    def test_symmetry_axiom(self):
        tokens = distinct_tokens(4)
        # Tokens 0 and 1 enter only through their sum: interchangeable.
        predictor = mask_value_predictor(
            tokens, lambda z: 0.3 + 0.1 * (z[0] + z[1]) + 0.05 * z[2] * z[3]
        )
        inst = decompose(" ".join(tokens))
        phi = brute_force_shapley(predictor, inst, target="probability")
        assert phi[0] == pytest.approx(phi[1], abs=1e-9)

    def test_dummy_axiom(self):
        tokens = distinct_tokens(4)
        predictor = mask_value_predictor(tokens, lambda z: 0.3 + 0.1 * z[0] + 0.2 * z[2])
        inst = decompose(" ".join(tokens))
        phi = brute_force_shapley(predictor, inst, target="probability")
        assert abs(phi[1]) <= 1e-9
        assert abs(phi[3]) <= 1e-9

    def test_d3_hand_tabulated_game(self):
        tokens = distinct_tokens(3)
        rng = np.random.default_rng(5)
        table = {code: float(rng.uniform(0.1, 0.9)) for code in range(8)}
        predictor = mask_value_predictor(
            tokens, lambda z: table[int(z[0]) | int(z[1]) << 1 | int(z[2]) << 2]
        )
        inst = decompose(" ".join(tokens))
        phi = brute_force_shapley(predictor, inst, target="probability")
        by_subset = {
            frozenset(j for j in range(3) if code >> j & 1): table[code] for code in range(8)
        }
        np.testing.assert_allclose(phi, _hand_shapley(by_subset, 3), atol=1e-9)

    def test_dimension_too_large(self):
        tokens = distinct_tokens(13)
        predictor = mask_value_predictor(tokens, lambda z: 0.5)
        inst = decompose(" ".join(tokens))
        with pytest.raises(DimensionTooLargeError):
            brute_force_shapley(predictor, inst)


class TestShapExplain:
    def test_constant_predictor_null_game(self):
        exp = shap_explain(constant_predictor(0.4), "alpha beta gamma", ShapConfig(seed=0))
        np.testing.assert_allclose(exp.phi, 0.0, atol=1e-12)
        assert exp.fx == pytest.approx(exp.base_value)
        assert exp.additivity_residual <= 1e-6

    def test_sampled_with_all_coalitions_matches_oracle(self):
        tokens = distinct_tokens(8)
        rng = np.random.default_rng(11)
        weights = rng.normal(scale=0.05, size=8)
        pair = rng.normal(scale=0.03, size=(8, 8))
        predictor = mask_value_predictor(
            tokens,
            lambda z: float(1 / (1 + np.exp(-(0.2 + weights @ z + z @ pair @ z)))),
        )
        inst = decompose(" ".join(tokens))
        oracle = brute_force_shapley(predictor, inst)
        exp = shap_explain(
            predictor,
            " ".join(tokens),
            ShapConfig(mode="sampled", n_coalitions=2**8, seed=0),
        )
        assert np.max(np.abs(exp.phi - oracle)) <= 1e-6
        assert exp.additivity_residual <= 1e-6

    def test_sampled_additivity_at_default_budget(self):
        tokens = distinct_tokens(20)
        rng = np.random.default_rng(3)
        weights = rng.normal(scale=0.02, size=20)
        predictor = mask_value_predictor(tokens, lambda z: float(0.5 + weights @ z))
        exp = shap_explain(
            predictor, " ".join(tokens), ShapConfig(mode="sampled", n_coalitions=2048, seed=1)
        )
        assert exp.additivity_residual <= 1e-3

    def test_exact_mode_rejects_large_d(self):
        tokens = distinct_tokens(13)
        predictor = mask_value_predictor(tokens, lambda z: 0.5)
        with pytest.raises(DimensionTooLargeError):
            shap_explain(predictor, " ".join(tokens), ShapConfig(mode="exact"))

    def test_seeded_determinism(self):
        tokens = distinct_tokens(9)
        rng = np.random.default_rng(6)
        weights = rng.normal(scale=0.04, size=9)
        predictor = mask_value_predictor(tokens, lambda z: float(0.5 + weights @ z))
        config = ShapConfig(mode="sampled", n_coalitions=128, seed=12)
        a = shap_explain(predictor, " ".join(tokens), config)
        b = shap_explain(predictor, " ".join(tokens), config)
        np.testing.assert_array_equal(a.phi, b.phi)

    def test_background_shifts_base_value(self):
        tokens = distinct_tokens(3)
        predictor = mask_value_predictor(tokens, lambda z: 0.2 + 0.2 * z.sum())
        background = (" ".join(tokens),)  # full instance: p_fake = 0.8
        exp = shap_explain(
            predictor,
            " ".join(tokens),
            ShapConfig(seed=0, target="probability", background_texts=background),
        )
        assert exp.base_value == pytest.approx(0.8)
        assert exp.additivity_residual <= 1e-9

    def test_record_shape(self):
        record = shap_explain(constant_predictor(0.7), "a b c", ShapConfig(seed=0)).to_record()
        assert record["method"] == "shap"
        assert set(record) == {
            "method", "text", "prediction", "fx", "base_value", "phi", "residual", "mode", "seed",
        }
        assert [e["token"] for e in record["phi"]] == ["a", "b", "c"]


class TestDummyDiagnostics:
    def test_dummy_positions_found(self):
        tokens = distinct_tokens(4)
        predictor = mask_value_predictor(tokens, lambda z: 0.3 + 0.2 * z[1])
        exp = shap_explain(predictor, " ".join(tokens), ShapConfig(seed=0, target="probability"))
        dummies = empirical_dummy_positions(exp.coalition_values, 4)
        assert dummies == [0, 2, 3]
        assert dummy_violation(exp) == pytest.approx(0.0, abs=1e-9)

    def test_sampled_mode_has_no_diagnosis(self):
        tokens = distinct_tokens(5)
        predictor = mask_value_predictor(tokens, lambda z: 0.5)
        exp = shap_explain(predictor, " ".join(tokens), ShapConfig(mode="sampled", seed=0))
        assert dummy_violation(exp) is None
