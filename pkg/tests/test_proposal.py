import math

import numpy as np
import pytest

from segtext import grid, proposal, scene
from segtext.errors import NoCharSegments
from segtext.grid import RotRect
from segtext.proposal import TextSegment
from segtext.scene import SceneSpec, SpineSpec

from test_scene import horizontal_spec, sine_spec


@pytest.fixture(scope="module")
def sine_truth():
    return scene.generate_scene(sine_spec())


class TestClipWidth:
    @pytest.mark.parametrize("h,expect", [(4, 2), (40, 6), (16, 4), (8, 2), (22, 6), (13, 3)])
    def test_values(self, h, expect):
        assert proposal.clip_width(h) == expect

    def test_custom_band(self):
        assert proposal.clip_width(40, 8, 12) == 10
        assert proposal.clip_width(4, 1, 3) == 1


class TestProposeSegments:
    def test_empty_tcl(self):
        maps = scene.TextMaps(*(np.zeros((16, 16)) for _ in range(5)))
        assert proposal.propose_segments(maps) == []

    def test_straight_spine_overlap_audit(self):
        truth = scene.generate_scene(horizontal_spec(chars=8))
        segs = proposal.propose_segments(truth.maps)
        assert len(segs) >= 8
        # kept pairs obey the NMS bound (brute-force audit)
        for a in range(len(segs)):
            for b in range(a + 1, len(segs)):
                assert grid.rect_iou(segs[a].rect, segs[b].rect) <= 0.5 + 1e-9
        # consecutive segments along the spine still overlap
        order = np.argsort([s.cx for s in segs])
        ious = []
        for a, b in zip(order[:-1], order[1:]):
            ious.append(grid.rect_iou(segs[a].rect, segs[b].rect))
        assert np.median(ious) > 0.0

    def test_centers_on_positive_tcl(self, sine_truth):
        segs = proposal.propose_segments(sine_truth.maps)
        for s in segs:
            assert sine_truth.maps.tcl[int(s.cy), int(s.cx)] > 0.5
            assert 2 <= s.rect.w <= 6

    def test_char_coverage(self, sine_truth):
        segs = proposal.propose_segments(sine_truth.maps)
        for c in sine_truth.chars:
            covered = False
            for s in segs:
                dx, dy = c.rect.cx - s.cx, c.rect.cy - s.cy
                ct, st = math.cos(s.rect.theta), math.sin(s.rect.theta)
                if (abs(dx * ct + dy * st) <= s.rect.w / 2 + 1e-9
                        and abs(-dx * st + dy * ct) <= s.rect.h / 2 + 1e-9):
                    covered = True
                    break
            assert covered, "char %d center uncovered" % c.id

    def test_deterministic(self, sine_truth):
        a = proposal.propose_segments(sine_truth.maps)
        b = proposal.propose_segments(sine_truth.maps)
        assert [s.rect for s in a] == [s.rect for s in b]
        assert [s.score for s in a] == [s.score for s in b]


def nn_interval_oracle(segs, char_union):
    """Independent O(n^2) nearest-neighbor labeling of interval segments."""
    n = len(segs)
    is_char = [bool(char_union[int(s.cy), int(s.cx)]) for s in segs]
    intervals = set()
    for i in range(n):
        if not is_char[i]:
            continue
        best, best_d = None, None
        for j in range(n):
            if is_char[j]:
                continue
            d = (segs[i].cx - segs[j].cx) ** 2 + (segs[i].cy - segs[j].cy) ** 2
            if best_d is None or d < best_d:
                best, best_d = j, d
        if best is not None:
            intervals.add(best)
    return is_char, intervals


class TestAnnotateSegments:
    def test_char_by_center(self, sine_truth):
        segs = proposal.propose_segments(sine_truth.maps)
        out, labels = proposal.annotate_segments(segs, sine_truth, np.random.default_rng(0))
        for s in out[: len(segs)]:
            inside = sine_truth.char_union[int(s.cy), int(s.cx)]
            if inside:
                assert s.type == proposal.CHAR

    def test_matches_nn_oracle(self, sine_truth):
        segs = proposal.propose_segments(sine_truth.maps)
        out, _ = proposal.annotate_segments(segs, sine_truth, np.random.default_rng(0))
        is_char, intervals = nn_interval_oracle(segs, sine_truth.char_union)
        for k, s in enumerate(out[: len(segs)]):
            if is_char[k]:
                assert s.type == proposal.CHAR
            elif k in intervals:
                assert s.type == proposal.INTERVAL
            else:
                assert s.type == proposal.UNLABELED

    def test_two_chars_midpoint_example(self):
        # chars at x in [0,10] and [20,30]; non-char segments at x=15 and x=40
        char_union = np.zeros((8, 48), dtype=bool)
        char_union[2:6, 0:11] = True
        char_union[2:6, 20:31] = True
        tr = np.zeros((8, 48))
        tr[1:7, 0:31] = 1.0

        class Stub:
            pass

        truth = Stub()
        truth.char_union = char_union
        truth.maps = scene.TextMaps(tcl=np.zeros((8, 48)), h=np.zeros((8, 48)),
                                    w=np.zeros((8, 48)), theta=np.zeros((8, 48)), tr=tr)
        truth.inst_grid = np.where(tr > 0, 0, -1)

        def seg(x):
            return TextSegment(rect=RotRect(x, 4.5, 4, 2, 0), score=1.0)

        segs = [seg(5.5), seg(25.5), seg(15.5), seg(40.5)]
        out, _ = proposal.annotate_segments(segs, truth, np.random.default_rng(1))
        assert out[2].type == proposal.INTERVAL
        assert out[3].type == proposal.UNLABELED

    def test_nontext_outside_tr(self, sine_truth):
        segs = proposal.propose_segments(sine_truth.maps)
        out, _ = proposal.annotate_segments(segs, sine_truth, np.random.default_rng(0))
        synth = [s for s in out if s.type == proposal.NONTEXT]
        assert len(synth) == max(8, math.ceil(0.3 * len(segs)))
        for s in synth:
            assert sine_truth.maps.tr[int(s.cy), int(s.cx)] == 0.0

    def test_label_sets_disjoint(self, sine_truth):
        segs = proposal.propose_segments(sine_truth.maps)
        out, labels = proposal.annotate_segments(segs, sine_truth, np.random.default_rng(0))
        for s in out:
            assert s.type in proposal.TYPES
        counts = {t: sum(1 for s in out if s.type == t) for t in proposal.TYPES}
        assert sum(counts.values()) == len(out)

    def test_deterministic_given_seed(self, sine_truth):
        segs = proposal.propose_segments(sine_truth.maps)
        a, _ = proposal.annotate_segments(segs, sine_truth, np.random.default_rng(7))
        b, _ = proposal.annotate_segments(segs, sine_truth, np.random.default_rng(7))
        assert [(s.rect, s.type, s.instance) for s in a] == \
            [(s.rect, s.type, s.instance) for s in b]

    def test_no_char_segments_raises(self):
        class Stub:
            pass

        truth = Stub()
        truth.char_union = np.zeros((8, 8), dtype=bool)
        segs = [TextSegment(rect=RotRect(4, 4, 4, 2, 0), score=1.0)]
        with pytest.raises(NoCharSegments):
            proposal.annotate_segments(segs, truth, np.random.default_rng(0))


class TestWeakLabelFilter:
    def setup_method(self):
        self.tr = np.zeros((10, 10), dtype=bool)
        self.tr[2:8, 2:8] = True

    def seg(self, x, y):
        return TextSegment(rect=RotRect(x, y, 4, 2, 0), score=1.0)

    def test_interval_inside_accepted(self):
        labels = proposal.weak_label_filter([self.seg(4.5, 4.5)], [proposal.INTERVAL], self.tr)
        assert labels.accepted[0] and labels.types[0] == proposal.INTERVAL

    def test_char_outside_rejected(self):
        labels = proposal.weak_label_filter([self.seg(0.5, 0.5)], [proposal.CHAR], self.tr)
        assert not labels.accepted[0] and labels.types[0] == proposal.UNLABELED

    def test_mixed_batch_rule_replay(self):
        rng = np.random.default_rng(5)
        segs = [self.seg(float(rng.uniform(0.5, 9.5)), float(rng.uniform(0.5, 9.5)))
                for _ in range(40)]
        preds = [proposal.TYPES[int(rng.integers(0, 4))] for _ in range(40)]
        labels = proposal.weak_label_filter(segs, preds, self.tr)
        for s, p, acc, t in zip(segs, preds, labels.accepted, labels.types):
            in_tr = self.tr[int(s.cy), int(s.cx)]
            want = (p in (proposal.CHAR, proposal.INTERVAL) and in_tr) or \
                (p == proposal.NONTEXT and not in_tr)
            assert acc == want
            assert t == (p if want else proposal.UNLABELED)


class TestSegmentJson:
    def test_roundtrip(self, tmp_path, sine_truth):
        segs = proposal.propose_segments(sine_truth.maps)
        out, _ = proposal.annotate_segments(segs, sine_truth, np.random.default_rng(0))
        p = tmp_path / "segs.json"
        proposal.save_segments(p, out)
        back = proposal.load_segments(p)
        assert [(s.rect, s.score, s.type, s.instance) for s in back] == \
            [(s.rect, s.score, s.type, s.instance) for s in out]
