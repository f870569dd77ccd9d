import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xdx.corpus import Label
from xdx.errors import (
    EmptyInputError,
    InconsistentCountsError,
    LengthMismatchError,
    SingleClassError,
)
from xdx.metrics import (
    ConfusionCounts,
    classification_report,
    confusion,
    report,
    roc_auc,
)

R, F = Label.REAL, Label.FAKE


class TestConfusion:
    def test_perfect_predictor(self):
        truths = [F] * 4 + [R] * 6
        counts = confusion(truths, truths)
        assert (counts.tp, counts.fp, counts.tn, counts.fn) == (4, 0, 6, 0)

    def test_constant_fake_predictor(self):
        truths = [F] * 4 + [R] * 6
        counts = confusion([F] * 10, truths)
        assert (counts.tp, counts.fp, counts.tn, counts.fn) == (4, 6, 0, 0)

    def test_hand_tally_ten_mixed(self):
        predictions = [F, F, R, R, F, R, F, R, R, F]
        truths =      [F, R, R, F, F, R, R, F, R, F]
        # Hand tally with Fake positive: tp rows 0,4,9; fp rows 1,6;
        # tn rows 2,5,8; fn rows 3,7.
        counts = confusion(predictions, truths)
        assert (counts.tp, counts.fp, counts.tn, counts.fn) == (3, 2, 3, 2)
        assert counts.total == 10

    def test_errors(self):
        with pytest.raises(LengthMismatchError):
            confusion([F], [F, R])
        with pytest.raises(EmptyInputError):
            confusion([], [])


class TestReport:
    def test_equal_precision_recall_gives_same_f1(self):
        # precision = recall = 0.84 -> F1 = 0.84.
        fake = ConfusionCounts(tp=84, fp=16, tn=84, fn=16)
        real = ConfusionCounts(tp=84, fp=16, tn=84, fn=16)
        rep = report(real, fake)
        m = rep.per_class[F]
        assert m.precision == pytest.approx(0.84)
        assert m.recall == pytest.approx(0.84)
        assert m.f1 == pytest.approx(0.84)

    def test_asymmetric_f1_two_decimals(self):
        # precision 0.84, recall 0.45 -> F1 = 2*0.378/1.29 ~ 0.586 -> 0.59.
        fake = ConfusionCounts(tp=378, fp=72, tn=88, fn=462)
        real = ConfusionCounts(tp=88, fp=462, tn=378, fn=72)
        rep = report(real, fake)
        m = rep.per_class[F]
        assert m.precision == pytest.approx(0.84)
        assert m.recall == pytest.approx(0.45)
        assert round(m.f1, 2) == 0.59

    def test_degenerate_cells_flagged(self):
        fake = ConfusionCounts(tp=0, fp=0, tn=6, fn=4)
        real = ConfusionCounts(tp=6, fp=4, tn=0, fn=0)
        rep = report(real, fake)
        m = rep.per_class[F]
        assert m.precision == 0.0
        assert m.degenerate

    def test_accuracy_exact(self):
        predictions = [F, F, R, R, F, R]
        truths = [F, R, R, F, F, R]
        rep = classification_report(predictions, truths)
        counts = confusion(predictions, truths)
        assert rep.accuracy == (counts.tp + counts.tn) / counts.total
        for m in rep.per_class.values():
            assert 0.0 <= m.precision <= 1.0
            assert 0.0 <= m.recall <= 1.0
            assert 0.0 <= m.f1 <= 1.0

    def test_inconsistent_counts(self):
        fake = ConfusionCounts(tp=1, fp=2, tn=3, fn=4)
        real = ConfusionCounts(tp=9, fp=9, tn=9, fn=9)
        with pytest.raises(InconsistentCountsError):
            report(real, fake)


class TestRocAuc:
    def test_perfect_separation(self):
        scores = [0.9, 0.8, 0.2, 0.1]
        truths = [F, F, R, R]
        assert roc_auc(scores, truths).auc == pytest.approx(1.0)

    def test_hand_counted_fixture(self):
        # Pairs: (0.9 vs 0.8)+, (0.9 vs 0.6)+, (0.7 vs 0.8)-, (0.7 vs 0.6)+.
        result = roc_auc([0.9, 0.8, 0.7, 0.6], [F, R, F, R])
        assert result.auc == pytest.approx(0.75)

    def test_null_scores_monte_carlo(self):
        rng = np.random.default_rng(123)
        n = 10000
        scores = rng.random(n)
        truths = [F if rng.random() < 0.5 else R for _ in range(n)]
        assert roc_auc(scores, truths).auc == pytest.approx(0.5, abs=0.05)

    def test_ties_credited_half(self):
        result = roc_auc([0.5, 0.5], [F, R])
        assert result.auc == pytest.approx(0.5)

    def test_curve_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(4)
        scores = rng.random(50)
        truths = [F if rng.random() < 0.4 else R for _ in range(50)]
        curve = roc_auc(scores, truths).curve
        assert curve[0] == (0.0, 0.0)
        assert curve[-1] == (1.0, 1.0)
        fprs = [p[0] for p in curve]
        tprs = [p[1] for p in curve]
        assert fprs == sorted(fprs)
        assert tprs == sorted(tprs)

    @given(st.integers(min_value=0, max_value=10**6))
    @settings(max_examples=25, deadline=None)
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = 40
        scores = rng.random(n)
        truths = [F] * (n // 2) + [R] * (n - n // 2)
        rng.shuffle(truths)
        baseline = roc_auc(scores, truths).auc
        assert roc_auc(np.exp(3 * scores), truths).auc == pytest.approx(baseline)
        assert roc_auc(2 * scores + 7, truths).auc == pytest.approx(baseline)

    @given(st.integers(min_value=0, max_value=10**6))
    @settings(max_examples=25, deadline=None)
    def test_label_flip_duality(self, seed):
        rng = np.random.default_rng(seed)
        n = 30
        scores = rng.random(n)
        truths = [F] * (n // 2) + [R] * (n - n // 2)
        rng.shuffle(truths)
        flipped = [R if t is F else F for t in truths]
        assert roc_auc(scores, truths).auc == pytest.approx(1.0 - roc_auc(scores, flipped).auc)

    def test_single_class_error(self):
        with pytest.raises(SingleClassError):
            roc_auc([0.1, 0.9], [F, F])
