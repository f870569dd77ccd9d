import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from conftest import constant_predictor, token_rule_predictor
from xdx.classifier import BaselineConfig, fit_baseline
from xdx.corpus import Corpus, Label, Sample, build_level_split
from xdx.harness import (
    CaseExplanations,
    ExperimentSpec,
    SyntheticSpec,
    category_of,
    run_experiment,
    score_explainers,
    select_battery,
)
from xdx.perturbation import PerturbationConfig
from xdx.synthetic import FUNCTION_WORDS, generate_synthetic_corpora

FAST_BASELINE = BaselineConfig(
    hidden_units=48, learning_rate=1e-3, epochs=12, batch_size=32, vocab_size=400, seed=0
)


def _spec(level=1, **overrides):
    defaults = dict(
        level=level,
        synthetic=SyntheticSpec(n_per_domain=120, signal=0.95, seed=0),
        baseline=FAST_BASELINE,
        split_seed=0,
        train_seed=1,
        explain_seed=2,
    )
    defaults.update(overrides)
    return ExperimentSpec(**defaults)


class TestSynthetic:
    def test_full_signal_is_perfectly_learnable_at_level1(self):
        single, mixed = generate_synthetic_corpora(n_per_domain=500, signal=1.0, seed=0)
        split = build_level_split(single, mixed, 1, seed=0)
        model = fit_baseline(
            split, BaselineConfig(hidden_units=64, learning_rate=1e-3, epochs=20, vocab_size=500, seed=1)
        )
        probs = model([s.text for s in split.test])
        accuracy = np.mean([p.label is s.label for p, s in zip(probs, split.test)])
        assert accuracy == 1.0

    def test_level4_accuracy_near_chance(self):
        accuracies = []
        for seed in range(5):
            single, mixed = generate_synthetic_corpora(n_per_domain=120, signal=1.0, seed=seed)
            split = build_level_split(single, mixed, 4, seed=seed)
            model = fit_baseline(
                split,
                BaselineConfig(hidden_units=48, learning_rate=1e-3, epochs=10, vocab_size=400, seed=seed),
            )
            probs = model([s.text for s in split.test])
            accuracies.append(np.mean([p.label is s.label for p, s in zip(probs, split.test)]))
        assert abs(np.mean(accuracies) - 0.5) <= 0.1

    def test_domains_share_only_function_words(self):
        single, mixed = generate_synthetic_corpora(n_per_domain=60, signal=1.0, seed=3)
        single_vocab = {tok for s in single for tok in s.text.split()}
        by_domain = {}
        for s in mixed:
            by_domain.setdefault(s.domain, set()).update(s.text.split())
        for vocab in by_domain.values():
            assert single_vocab & vocab <= set(FUNCTION_WORDS)

    def test_balanced_labels(self):
        single, mixed = generate_synthetic_corpora(n_per_domain=100, signal=0.9, seed=1)
        counts = single.class_counts
        assert counts[Label.REAL] == counts[Label.FAKE]

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            generate_synthetic_corpora(n_per_domain=10)
        with pytest.raises(ValueError):
            generate_synthetic_corpora(signal=0.0)


def _corpus_of(texts_labels, name="t", domain="d"):
    return Corpus(
        name=name,
        samples=tuple(
            Sample(id=f"{name}#{i}", text=text, label=label, domain=domain)
            for i, (text, label) in enumerate(texts_labels)
        ),
    )


class TestBattery:
    def test_perfect_predictor_has_no_misclassification_slots(self):
        corpus = _corpus_of(
            [("real news here", Label.REAL), ("prevent hoax now", Label.FAKE)] * 3
        )
        predictor = token_rule_predictor({"prevent"})
        battery = select_battery(predictor, corpus, k_random=2, seed=0)
        assert "real_mis_as_fake" in battery.absent
        assert "fake_mis_as_real" in battery.absent
        slots = {c.slot for c in battery.cases}
        assert "correct_real" in slots and "correct_fake" in slots

    def test_constant_fake_predictor_lacks_correct_real(self):
        corpus = _corpus_of([("a b", Label.REAL), ("c d", Label.FAKE)] * 2)
        battery = select_battery(constant_predictor(0.9), corpus, k_random=1, seed=0)
        assert "correct_real" in battery.absent

    def test_categories_certified_by_recomputation(self):
        corpus = _corpus_of(
            [
                ("prevent this hoax", Label.FAKE),
                ("calm news today", Label.REAL),
                ("prevent nothing real", Label.REAL),
                ("quiet fake story", Label.FAKE),
            ]
        )
        predictor = token_rule_predictor({"prevent"})
        battery = select_battery(predictor, corpus, k_random=3, seed=5)
        for case in battery.cases:
            recomputed = predictor([case.text])[0]
            assert recomputed.label is case.prediction
            if not case.slot.startswith("random"):
                assert category_of(case.truth, recomputed.label) == case.slot

    def test_random_cases_seeded(self):
        corpus = _corpus_of([(f"text number {i}", Label.REAL if i % 2 else Label.FAKE) for i in range(20)])
        a = select_battery(constant_predictor(0.7), corpus, k_random=3, seed=9)
        b = select_battery(constant_predictor(0.7), corpus, k_random=3, seed=9)
        assert [c.sample_id for c in a.cases] == [c.sample_id for c in b.cases]


class TestScorecard:
    def _entry(self, explainer, sets, **kwargs):
        return CaseExplanations(
            slot="correct_fake",
            explainer=explainer,
            primary_record={"method": explainer},
            top_position_sets=sets,
            wall_times=[0.01] * len(sets),
            **kwargs,
        )

    def test_identical_sets_give_stability_one(self):
        entries = [self._entry("lime", [{0, 1, 2}] * 5, fidelity=0.9)]
        card = score_explainers(entries)
        assert card.scores["lime"].stability == pytest.approx(1.0)

    def test_anchor_found_rate_zero(self):
        entries = [
            self._entry("anchor", [set()] * 5, anchor_precision=0.5, anchor_found=False),
            self._entry("anchor", [set()] * 5, anchor_precision=0.6, anchor_found=False),
        ]
        card = score_explainers(entries)
        assert card.scores["anchor"].anchor_found_rate == 0.0

    def test_disjoint_sets_give_zero_stability(self):
        entries = [self._entry("shap", [{0}, {1}, {2}, {3}, {4}], shap_residual=0.0)]
        card = score_explainers(entries)
        assert card.scores["shap"].stability == pytest.approx(0.0)

    def test_ranking_is_fidelity_first(self):
        entries = [
            self._entry("lime", [{0}] * 5, fidelity=0.99),
            self._entry("eli5", [{0}] * 5, fidelity=0.42),
        ]
        card = score_explainers(entries)
        assert [s.explainer for s in card.ranked()] == ["lime", "eli5"]

    def test_serialization_excludes_wall_time(self):
        entries = [self._entry("lime", [{0}] * 5, fidelity=0.9)]
        payload = json.dumps(score_explainers(entries).to_dict())
        assert "wall" not in payload


class TestRunExperiment:
    def test_empty_explainer_set_rejected_before_work(self):
        spec = _spec(explainers=())
        with pytest.raises(ValueError):
            run_experiment(spec)

    def test_unknown_explainer_rejected(self):
        spec = _spec(explainers=("lime", "gradcam"))
        with pytest.raises(ValueError):
            run_experiment(spec)

    def test_level_ordering_on_one_seed(self):
        acc = {}
        for level in (1, 4):
            result = run_experiment(_spec(level=level, explainers=("lime",)))
            acc[level] = result.reports["test"].accuracy
        assert acc[1] > acc[4]

    def test_outputs_byte_identical_across_reruns_and_threads(self, tmp_path):
        def digest(directory):
            return {
                p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(Path(directory).iterdir())
            }

        spec_a = _spec(explainers=("lime", "shap"))
        run_experiment(spec_a, out_dir=tmp_path / "a")
        spec_b = _spec(explainers=("lime", "shap"))
        run_experiment(spec_b, out_dir=tmp_path / "b")
        spec_c = _spec(explainers=("lime", "shap"), threads=3)
        run_experiment(spec_c, out_dir=tmp_path / "c")
        assert digest(tmp_path / "a") == digest(tmp_path / "b") == digest(tmp_path / "c")

    def test_output_layout(self, tmp_path):
        run_experiment(_spec(explainers=("lime", "anchor", "shap", "eli5")), out_dir=tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert {
            "result.json",
            "report.csv",
            "roc_train.csv",
            "roc_validation.csv",
            "roc_test.csv",
            "explanations.jsonl",
            "scorecard.csv",
            "provenance.json",
        } <= names
        result = json.loads((tmp_path / "result.json").read_text())
        slots = {c["slot"] for c in result["battery"]["cases"]}
        recorded = {(e["case"], e["method"]) for e in result["explanations"]}
        # Every battery case has one record per requested explainer.
        assert recorded == {(slot, m) for slot in slots for m in ("lime", "anchor", "shap", "eli5")}

    def test_swap_exchanges_level_2_and_3(self):
        spec_swapped = _spec(level=2, explainers=("lime",), swap=True)
        spec_direct = _spec(level=3, explainers=("lime",))
        swapped = run_experiment(spec_swapped)
        direct = run_experiment(spec_direct)
        assert swapped.provenance["effective_level"] == 3
        assert swapped.reports["test"].accuracy == direct.reports["test"].accuracy
        assert swapped.level == 2

    def test_lime_fidelity_on_rule_predictor_battery(self):
        # Battery drawn from a corpus whose labels follow a token rule the
        # predictor reproduces exactly; the surrogate should track it.
        rng = np.random.default_rng(0)
        fillers = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
        rows = []
        for i in range(40):
            words = list(rng.choice(fillers, size=5))
            if i % 2:
                words.insert(int(rng.integers(0, 5)), "prevent")
            rows.append((" ".join(words), Label.FAKE if i % 2 else Label.REAL))
        corpus = _corpus_of(rows, name="rule")
        predictor = token_rule_predictor({"prevent"})
        battery = select_battery(predictor, corpus, k_random=3, seed=1)

        from xdx.harness import _explain_battery

        spec = _spec(explainers=("lime",), perturbation=PerturbationConfig(n_samples=300, seed=0))
        entries = _explain_battery(spec, predictor, battery)
        card = score_explainers(entries)
        assert card.scores["lime"].fidelity >= 0.95
