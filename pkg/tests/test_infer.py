import math

import numpy as np
import pytest

from segtext import corpus, graph, grid, infer, proposal, scene
from segtext.errors import EmptyGroup
from segtext.grid import RotRect
from segtext.infer import DetectConfig

from test_scene import sine_spec


@pytest.fixture(scope="module")
def mini_params():
    """Small model trained briefly on a few scenes; good enough for fixtures."""
    truths = corpus.build_clean_corpus(3, 8)
    cfg = graph.TrainConfig(iters=150, lr=0.5, seed=0, dim=32, hidden=32, weak_rounds=0)
    rng = np.random.default_rng(9)
    datas = [graph.prepare_scene_data(t, rng) for t in truths]
    params, _ = graph.train_gcn(datas, cfg)
    return params


class TestShrinkGgtr:
    def test_horizontal_bar(self):
        m = np.zeros((12, 30), dtype=bool)
        m[4:9, 5:25] = True
        skel = infer.shrink_ggtr(m)
        rows_used = np.nonzero(skel.any(axis=1))[0]
        assert len(rows_used) == 1
        assert 15 <= skel.sum() <= 21

    def test_empty(self):
        assert not infer.shrink_ggtr(np.zeros((5, 5), dtype=bool)).any()

    def test_s_curve_band_follows_spine(self):
        spec = sine_spec()
        inst = spec.instances[0]
        inst.params["amplitude"] = 30.0
        sp = scene.sample_spine(inst.family, inst.params)
        length = min(200.0, sp.length)
        sel = sp.s <= length
        poly = scene._band_polygon(sp, 0.0, length, lambda s: np.full_like(s, 4.0))
        band = grid.rasterize_polygon(poly, 256, 256)
        skel = infer.shrink_ggtr(band)
        si, sj = np.nonzero(skel)
        skel_pts = np.stack([sj + 0.5, si + 0.5], axis=1)
        hits = 0
        samples = sp.pts[sel][::4]
        for p in samples:
            d = np.hypot(skel_pts[:, 0] - p[0], skel_pts[:, 1] - p[1]).min()
            hits += d <= 1.5
        assert hits / len(samples) >= 0.9

    def test_one_pixel_wide(self):
        m = np.zeros((20, 20), dtype=bool)
        m[5:15, 5:15] = True
        skel = infer.shrink_ggtr(m)
        # no 2x2 block survives thinning
        blocks = skel[:-1, :-1] & skel[1:, :-1] & skel[:-1, 1:] & skel[1:, 1:]
        assert not blocks.any()


class TestRectifyTcl:
    def test_union_restores_split(self):
        truth = scene.generate_scene(sine_spec())
        maps, ggtr = scene.inject_faults(truth, scene.FaultSpec(splits=[(0, 10.0)]))
        tcl_mask = maps.tcl > 0.5
        assert len(grid.connected_components(tcl_mask)) == 2
        tclp = infer.rectify_tcl(tcl_mask, ggtr)
        assert len(grid.connected_components(tclp)) == 1

    def test_zero_ggtr_identity(self):
        rng = np.random.default_rng(0)
        tcl_mask = rng.random((20, 20)) < 0.2
        tclp = infer.rectify_tcl(tcl_mask, np.zeros((20, 20)))
        assert np.array_equal(tclp, tcl_mask)

    def test_zero_tcl_gives_skeleton(self):
        ggtr = np.zeros((12, 30))
        ggtr[4:9, 5:25] = 1.0
        tclp = infer.rectify_tcl(np.zeros((12, 30), dtype=bool), ggtr)
        assert np.array_equal(tclp, infer.shrink_ggtr(ggtr >= 0.5))

    def test_intersect_mode(self):
        ggtr = np.zeros((12, 30))
        ggtr[4:9, 5:25] = 1.0
        tcl_mask = np.zeros((12, 30), dtype=bool)
        tcl_mask[6, :] = True
        tclp = infer.rectify_tcl(tcl_mask, ggtr, op="intersect")
        assert np.array_equal(tclp, tcl_mask & infer.shrink_ggtr(ggtr >= 0.5))


class TestGroupSegments:
    def test_no_edges_all_singletons(self):
        pairs = np.array([[0, 1], [1, 2]])
        groups = infer.group_segments(3, pairs, np.array([0.1, 0.2]))
        assert sorted(len(g.members) for g in groups) == [1, 1, 1]

    def test_chain_one_group(self):
        pairs = np.array([[0, 1], [1, 2], [2, 3]])
        groups = infer.group_segments(4, pairs, np.array([0.9, 0.8, 0.95]))
        assert len(groups) == 1
        assert groups[0].members == [0, 1, 2, 3]

    def test_matches_union_find_oracle(self):
        rng = np.random.default_rng(4)
        n = 40
        pairs = rng.integers(0, n, size=(120, 2))
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        r_hat = rng.random(len(pairs))
        groups = infer.group_segments(n, pairs, r_hat, thr=0.5)

        # plain flood-fill oracle over the accepted edge set
        adj = {k: set() for k in range(n)}
        for (a, b), rv in zip(pairs, r_hat):
            if rv >= 0.5:
                adj[int(a)].add(int(b))
                adj[int(b)].add(int(a))
        seen = set()
        want = []
        for k in range(n):
            if k in seen:
                continue
            comp, stack = [], [k]
            seen.add(k)
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in adj[v]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            want.append(sorted(comp))
        got = sorted([sorted(g.members) for g in groups])
        assert got == sorted(want)


def chain_rects(n, step=2.0, h=16.0, w=4.0, y=20.0):
    return [RotRect(10 + step * k, y, h, w, 0.0) for k in range(n)]


class TestShapeApproximate:
    def test_single_segment_rect_contour(self):
        r = RotRect(20, 20, 12, 5, 0.3)
        poly = infer.shape_approximate([r], 40, 40)
        mask = grid.rasterize_rects([r], 40, 40)
        closed = grid.morph_close(mask)
        back = grid.rasterize_polygon(poly, 40, 40)
        inter = (back & closed).sum()
        union = (back | closed).sum()
        assert inter / union >= 0.9

    def test_chain_matches_truth_band(self):
        truth = scene.generate_scene(sine_spec())
        segs = proposal.propose_segments(truth.maps)
        rects = [s.rect for s in segs]
        poly = infer.shape_approximate(rects, 256, 256)
        truth_poly = truth.instance_polygons[0].points
        assert grid.polygon_iou(poly, truth_poly) >= 0.6
        assert grid.is_simple(poly)

    def test_spiral_polygon_simple(self):
        spec = corpus.make_scene_spec(np.random.default_rng(17), 256, 256,
                                      n_instances=1, force_spiral=True)
        truth = scene.generate_scene(spec)
        segs = proposal.propose_segments(truth.maps)
        assert len(segs) >= 40
        poly = infer.shape_approximate([s.rect for s in segs], 256, 256)
        assert grid.is_simple(poly)

    def test_empty_group_raises(self):
        with pytest.raises(EmptyGroup):
            infer.shape_approximate([], 10, 10)

    def test_coverage_of_member_rects(self):
        rects = chain_rects(12)
        polys = infer.shape_polygons(rects, 40, 60)
        mask = infer._group_mask(rects, 40, 60)
        comps = grid.connected_components(mask)
        comps.sort(key=lambda c: -c.sum())
        back = grid.rasterize_polygon(polys[0][0], 40, 60)
        covered = (back & comps[0]).sum() / comps[0].sum()
        assert covered >= 0.99


class TestRouteFindBaseline:
    def test_single_segment(self):
        r = RotRect(10, 10, 8, 4, 0.0)
        poly = infer.route_find_baseline([r])
        assert len(poly) == 2 or grid.polygon_area(poly) > 0

    def test_straight_chain_comparable_to_sap(self):
        rects = chain_rects(15)
        sap = infer.shape_approximate(rects, 40, 60)
        base = infer.route_find_baseline(rects)
        truth_iou_sap = grid.polygon_iou(sap, base)
        assert truth_iou_sap >= 0.6
        assert grid.is_simple(base)

    def test_spiral_can_self_intersect(self):
        # demonstration fixture: jittered spiral ordering goes wrong
        rng = np.random.default_rng(23)
        rects = []
        for t in np.linspace(0, 1, 70):
            a = 6.5 * t
            r = 18 + 38 * t + rng.uniform(-0.6, 0.6)
            x, y = 64 + r * math.cos(a), 64 + r * math.sin(a)
            rects.append(RotRect(x, y, 12, 4, (a + math.pi / 2) % math.pi - math.pi / 2))
        base = infer.route_find_baseline(rects)
        simple = grid.is_simple(base)
        sap = infer.shape_approximate(rects, 128, 128)
        assert grid.is_simple(sap)
        # recorded, not asserted per instance: just exercise both paths
        assert isinstance(simple, bool)


class TestGgtrInstanceFilter:
    def test_fully_inside_kept(self):
        ggtr = np.zeros((20, 20))
        ggtr[2:18, 2:18] = 1.0
        poly = np.array([[4, 4], [12, 4], [12, 12], [4, 12]], dtype=float)
        kept, cov = infer.ggtr_instance_filter(poly, ggtr)
        assert kept and cov == 1.0

    def test_disjoint_dropped(self):
        ggtr = np.zeros((20, 20))
        ggtr[0:4, 0:4] = 1.0
        poly = np.array([[10, 10], [18, 10], [18, 18], [10, 18]], dtype=float)
        kept, cov = infer.ggtr_instance_filter(poly, ggtr)
        assert not kept and cov == 0.0

    def test_half_coverage_boundary(self):
        ggtr = np.zeros((20, 20))
        ggtr[:, :10] = 1.0
        poly = np.array([[2, 2], [18, 2], [18, 18], [2, 18]], dtype=float)
        kept, cov = infer.ggtr_instance_filter(poly, ggtr)
        assert abs(cov - 0.5) < 0.01
        assert kept  # coverage >= 0.5 keeps


class TestDetect:
    def test_clean_single_instance(self, mini_params):
        truth = scene.generate_scene(sine_spec())
        ggtr = (truth.maps.tr > 0).astype(float)
        res = infer.detect(truth.maps, ggtr, mini_params)
        kept = res.kept_polygons()
        assert len(kept) == 1
        assert grid.polygon_iou(kept[0], truth.instance_polygons[0].points) >= 0.6
        assert all(grid.is_simple(p) for p in kept)

    def test_fault_scene_fpns_suppresses(self, mini_params):
        truth = scene.generate_scene(sine_spec())
        fault = scene.FaultSpec(splits=[(0, 16.0)], distractors=2)
        maps, ggtr = scene.inject_faults(truth, fault)
        res_on = infer.detect(maps, ggtr, mini_params)
        kept_on = res_on.kept_polygons()

        cfg_off = DetectConfig(fpns_node=False, fpns_ggtr=False, sap=True)
        res_off = infer.detect(maps, ggtr, mini_params, cfg_off)
        kept_off = res_off.kept_polygons()

        truth_poly = truth.instance_polygons[0].points
        best_on = max(grid.polygon_iou(p, truth_poly) for p in kept_on)
        assert best_on >= 0.5
        # suppression keeps fewer (or equal) polygons than the raw pipeline
        assert len(kept_on) <= len(kept_off)
        assert res_off.stages["ggtr_dropped"] == 0
        # without GGTR rectification the split instance cannot reach one piece
        assert res_on.stages["groups"] <= res_off.stages["groups"]

    def test_determinism(self, mini_params):
        truth = scene.generate_scene(sine_spec())
        maps, ggtr = scene.inject_faults(truth, scene.FaultSpec(distractors=1))
        r1 = infer.detect(maps, ggtr, mini_params)
        r2 = infer.detect(maps, ggtr, mini_params)
        assert len(r1.polygons) == len(r2.polygons)
        for (p1, k1, _), (p2, k2, _) in zip(r1.polygons, r2.polygons):
            assert k1 == k2 and np.array_equal(p1, p2)
        assert r1.stages == r2.stages

    def test_node_fpns_monotone(self, mini_params):
        truth = scene.generate_scene(sine_spec())
        maps, ggtr = scene.inject_faults(truth, scene.FaultSpec(distractors=2))
        on = infer.detect(maps, ggtr, mini_params, DetectConfig(fpns_node=True))
        off = infer.detect(maps, ggtr, mini_params, DetectConfig(fpns_node=False))
        assert on.stages["proposed"] == off.stages["proposed"]
        assert on.stages["proposed"] - on.stages["node_removed"] <= off.stages["proposed"]

    def test_gcn_off_groups_by_component(self, mini_params):
        truth = scene.generate_scene(sine_spec())
        ggtr = (truth.maps.tr > 0).astype(float)
        res = infer.detect(truth.maps, ggtr, mini_params,
                           DetectConfig(use_gcn=False, fpns_node=False))
        assert res.stages["groups"] == 1
        assert len(res.kept_polygons()) == 1

    def test_detection_json_roundtrip(self, tmp_path, mini_params):
        truth = scene.generate_scene(sine_spec())
        ggtr = (truth.maps.tr > 0).astype(float)
        res = infer.detect(truth.maps, ggtr, mini_params)
        p = tmp_path / "det.json"
        infer.save_detection(p, res)
        back = infer.load_detection(p)
        assert back.stages == res.stages
        assert len(back.polygons) == len(res.polygons)
        for (pa, ka, _), (pb, kb, _) in zip(res.polygons, back.polygons):
            assert ka == kb
            assert np.allclose(pa, pb)
