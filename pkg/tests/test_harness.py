import numpy as np
import pytest

from segtext import harness


def rect_poly(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


class TestEvaluate:
    def test_perfect(self):
        truths = [[rect_poly(0, 0, 10, 5)], [rect_poly(2, 2, 8, 9)]]
        rep = harness.evaluate(truths, truths)
        assert rep.precision == rep.recall == rep.f == 1.0
        assert rep.tp == 2

    def test_no_predictions(self):
        truths = [[rect_poly(0, 0, 10, 5)]]
        rep = harness.evaluate([[]], truths)
        assert rep.precision == 0.0 and rep.recall == 0.0 and rep.f == 0.0

    def test_counting(self):
        truths = [[rect_poly(0, 0, 10, 6), rect_poly(20, 0, 30, 6), rect_poly(40, 0, 50, 6)]]
        preds = [[rect_poly(0, 0, 10, 6), rect_poly(20, 0, 30, 6), rect_poly(60, 20, 70, 26)]]
        rep = harness.evaluate(preds, truths)
        assert abs(rep.precision - 2 / 3) < 1e-12
        assert abs(rep.recall - 2 / 3) < 1e-12

    def test_one_to_one(self):
        # two predictions over one truth: only one may match
        truths = [[rect_poly(0, 0, 10, 10)]]
        preds = [[rect_poly(0, 0, 10, 10), rect_poly(1, 0, 10, 10)]]
        rep = harness.evaluate(preds, truths)
        assert rep.tp == 1
        assert rep.precision == 0.5 and rep.recall == 1.0

    def test_match_is_deterministic_and_greedy(self):
        a = rect_poly(0, 0, 10, 10)
        b = rect_poly(0, 0, 10, 9)  # IoU 0.9 with a
        truths = [[a]]
        preds = [[b, a]]
        rep = harness.evaluate(preds, truths)
        # the exact-overlap prediction (index 1) wins the greedy match
        assert rep.matches[0][0][0] == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            harness.evaluate([[]], [[], []])

    def test_below_threshold_not_matched(self):
        truths = [[rect_poly(0, 0, 10, 10)]]
        preds = [[rect_poly(6, 0, 16, 10)]]  # IoU = 4/16 = 0.25
        rep = harness.evaluate(preds, truths, iou_thr=0.5)
        assert rep.tp == 0


class TestAblationCsv:
    def test_csv_shape(self):
        rows = [harness.AblationRow(name="gcn", gcn=True, fpns_node=False,
                                    fpns_ggtr=False, sap=False, w_lo=2, w_hi=6,
                                    precision=0.5, recall=0.6, f=0.545)]
        text = harness.ablation_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0].startswith("name,gcn,")
        assert lines[1].startswith("gcn,1,0,0,0,2,6,0.5")
