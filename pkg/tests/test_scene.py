import json
import math

import numpy as np
import pytest

from segtext import grid, scene
from segtext.errors import SpecOverflow
from segtext.scene import FaultSpec, SceneSpec, SpineSpec


def horizontal_spec(seed=3, chars=5, rows=96, cols=192):
    inst = SpineSpec(family="line",
                     params={"x0": 20.0, "y0": 48.0, "angle": 0.0, "length": 150.0},
                     chars=chars, char_h=16, char_w=9, char_gap=3, word_gap=0)
    return SceneSpec(rows=rows, cols=cols, seed=seed, instances=[inst])


def sine_spec(seed=5, amplitude=40.0):
    inst = SpineSpec(family="sine",
                     params={"x0": 20.0, "y0": 128.0, "length": 210.0,
                             "amplitude": amplitude, "period": 180.0, "phase": 0.3},
                     chars=10, char_h=16, char_w=9, char_gap=3, word_gap=6)
    return SceneSpec(rows=256, cols=256, seed=seed, instances=[inst])


class TestGenerateScene:
    def test_horizontal_line_char_rows(self):
        truth = scene.generate_scene(horizontal_spec())
        assert len(truth.chars) == 5
        ys = {round(c.rect.cy, 6) for c in truth.chars}
        assert ys == {48.0}
        assert all(c.rect.theta == 0.0 for c in truth.chars)

    def test_determinism(self):
        a = scene.generate_scene(sine_spec())
        b = scene.generate_scene(sine_spec())
        for name in ("tcl", "h", "w", "theta", "tr"):
            assert np.array_equal(getattr(a.maps, name), getattr(b.maps, name))
        assert np.array_equal(a.char_union, b.char_union)
        assert [tuple(c.rect.__dict__.values()) for c in a.chars] == \
            [tuple(c.rect.__dict__.values()) for c in b.chars]

    def test_theta_matches_finite_difference(self):
        from scipy.spatial import cKDTree

        truth = scene.generate_scene(sine_spec(amplitude=40.0))
        inst = truth.spec.instances[0]
        sp = scene.sample_spine(inst.family, inst.params)
        tree = cKDTree(sp.pts)
        m = len(sp.pts)
        # Finite-difference tangent oracle at the nearest spine point.
        band = truth.maps.tcl > 0
        ii, jj = np.nonzero(band)
        step = max(1, ii.size // 300)
        for i, j in zip(ii[::step], jj[::step]):
            _, k = tree.query([j + 0.5, i + 0.5])
            u = k / (m - 1)
            eps = 1e-4
            p1, _ = scene._spine_xy("sine", inst.params, np.array([max(0.0, u - eps)]))
            p2, _ = scene._spine_xy("sine", inst.params, np.array([min(1.0, u + eps)]))
            fd = math.atan2(p2[0, 1] - p1[0, 1], p2[0, 0] - p1[0, 0])
            fd = (fd + math.pi / 2) % math.pi - math.pi / 2
            diff = abs(truth.maps.theta[i, j] - fd)
            diff = min(diff, math.pi - diff)
            assert diff < 0.02

    def test_theta_continuity_along_spine(self):
        for spec in (horizontal_spec(), sine_spec()):
            truth = scene.generate_scene(spec)
            inst = spec.instances[0]
            sp = scene.sample_spine(inst.family, inst.params)
            tau = np.unwrap(sp.tau)
            assert np.all(np.abs(np.diff(tau)) < 0.2)

    def test_support_subsets(self):
        truth = scene.generate_scene(sine_spec())
        tcl = truth.maps.tcl > 0
        tr = truth.maps.tr > 0
        assert not (tcl & ~tr).any()
        assert not (truth.char_union & ~tr).any()
        # h, w, theta defined exactly on the TCL band
        assert not ((truth.maps.h > 0) & ~tcl).any()
        assert ((truth.maps.h > 0) == tcl).all()

    def test_char_boxes_inside_instance_polygon(self):
        truth = scene.generate_scene(sine_spec())
        rows, cols = truth.maps.shape
        poly_mask = grid.rasterize_polygon(truth.instance_polygons[0].points, rows, cols)
        boxes = grid.rasterize_rects([c.rect for c in truth.chars], rows, cols)
        assert not (boxes & ~poly_mask).any()

    def test_overflow_raises(self):
        spec = horizontal_spec(cols=120)  # 150 px spine cannot fit
        spec.instances[0].params["length"] = 160.0
        with pytest.raises(SpecOverflow):
            scene.generate_scene(spec)

    def test_chars_must_fit_spine(self):
        spec = horizontal_spec()
        spec.instances[0].params["length"] = 30.0
        with pytest.raises(SpecOverflow):
            scene.generate_scene(spec)


class TestShrinkRegion:
    def test_band_height_straight(self):
        truth = scene.generate_scene(horizontal_spec())
        band = truth.maps.tcl > 0
        cols_with = np.nonzero(band.any(axis=0))[0]
        mid = cols_with[len(cols_with) // 2]
        height = int(band[:, mid].sum())
        # factor 0.3 of half-height 8 gives a 2.4 px half-band
        assert abs(height - 6) <= 2

    def test_factor_one_approaches_tr(self):
        truth = scene.generate_scene(horizontal_spec())
        inst = truth.spec.instances[0]
        sp = scene.sample_spine(inst.family, inst.params)
        rows, cols = truth.maps.shape
        poly_mask = grid.rasterize_polygon(truth.instance_polygons[0].points, rows, cols)
        hh = np.full(sp.pts.shape[0], inst.char_h / 2.0)
        band, _, _, _ = scene.shrink_region(poly_mask, sp.pts, sp.s, hh, 1.0)
        inter = np.count_nonzero(band & poly_mask)
        union = np.count_nonzero(band | poly_mask)
        assert not (band & ~poly_mask).any()
        assert inter / union > 0.7

    def test_band_subset_of_polygon_curved(self):
        truth = scene.generate_scene(sine_spec())
        rows, cols = truth.maps.shape
        poly_mask = grid.rasterize_polygon(truth.instance_polygons[0].points, rows, cols)
        assert not ((truth.maps.tcl > 0) & ~poly_mask).any()


class TestInjectFaults:
    def test_zero_faults_identity(self):
        truth = scene.generate_scene(sine_spec())
        maps, ggtr = scene.inject_faults(truth, FaultSpec())
        for name in ("tcl", "h", "w", "theta", "tr"):
            assert np.array_equal(getattr(maps, name), getattr(truth.maps, name))
        assert np.array_equal(ggtr, (truth.maps.tr > 0).astype(float))

    def test_split_makes_two_components(self):
        truth = scene.generate_scene(sine_spec())
        maps, _ = scene.inject_faults(truth, FaultSpec(splits=[(0, 8.0)]))
        comps = grid.connected_components(maps.tcl > 0)
        assert len(comps) == 2

    def test_distractors_add_components(self):
        truth = scene.generate_scene(sine_spec())
        maps, ggtr = scene.inject_faults(truth, FaultSpec(distractors=3))
        clean_tr = truth.maps.tr > 0
        new = (maps.tr > 0) & ~clean_tr
        comps = grid.connected_components(new)
        assert len(comps) == 3
        # distractors touch no instance
        grown = grid.morph_close(clean_tr)
        for c in comps:
            assert not (c & grown).any()
        # clean GGTR ignores them
        assert np.array_equal(ggtr, clean_tr.astype(float))

    def test_ggtr_noise_toggles(self):
        truth = scene.generate_scene(sine_spec())
        maps, ggtr = scene.inject_faults(
            truth, FaultSpec(splits=[(0, 8.0)], distractors=2,
                             ggtr_noise={"splits": True, "distractors": True}))
        assert np.array_equal(ggtr > 0, maps.tr > 0)

    def test_determinism(self):
        truth = scene.generate_scene(sine_spec())
        f = FaultSpec(splits=[(0, 10.0)], distractors=2)
        m1, g1 = scene.inject_faults(truth, f)
        m2, g2 = scene.inject_faults(truth, f)
        assert np.array_equal(m1.tcl, m2.tcl) and np.array_equal(g1, g2)


class TestSerialization:
    def test_tmap_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = np.round(rng.random((7, 9)), 6)
        p = tmp_path / "x.tmap"
        scene.write_tmap(p, "tcl", arr)
        name, back = scene.read_tmap(p)
        assert name == "tcl"
        assert np.allclose(back, arr, atol=1e-9)

    def test_scene_spec_roundtrip(self):
        spec = sine_spec()
        fault = FaultSpec(splits=[(0, 8.0)], distractors=2, ggtr_noise={"splits": False})
        doc = scene.scene_spec_to_dict(spec, fault)
        doc2 = json.loads(json.dumps(doc))
        spec2, fault2 = scene.scene_spec_from_dict(doc2)
        assert spec2 == spec
        assert fault2.splits == [(0, 8.0)] and fault2.distractors == 2

    def test_scene_dir_roundtrip(self, tmp_path):
        truth = scene.generate_scene(horizontal_spec())
        maps, ggtr = scene.inject_faults(truth, FaultSpec(distractors=1))
        scene.write_scene_dir(tmp_path / "s0", truth, maps=maps, ggtr=ggtr)
        m2, g2, doc = scene.read_scene_dir(tmp_path / "s0")
        assert np.allclose(m2.tcl, maps.tcl, atol=1e-7)
        assert g2 is not None and np.allclose(g2, ggtr)
        assert len(doc["instances"]) == 1
        assert len(doc["chars"]) == 5
