"""Synthetic curved-text scenes: ground-truth maps, instance polygons, char
boxes, and controlled fault injection.

A scene instance is a string of character boxes laid out along a parametric
spine (line / arc / sine / spiral).  The text region is the band swept around
the spine at the local char height; the text center line is the shrunken band
used to seed segment proposals.  Everything is deterministic given the spec
seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import grid
from .errors import SpecOverflow
from .grid import RotRect
from .proposal import clip_width

SHRINK_FACTOR = 0.3      # TCL band = this fraction of the local half-height
GAP_TCL = 0.7            # along-spine TCL level between chars
BAND_PAD = 1.5           # extra half-height of the text-region polygon, px
END_PAD = 1.5            # extra spine length beyond the first/last char, px
HEIGHT_JITTER = 0.10     # per-char height jitter fraction
TCL_DITHER = 0.06        # multiplicative confidence texture on the TCL band


@dataclass
class SpineSpec:
    family: str                  # line | arc | sine | spiral
    params: dict
    chars: int
    char_h: float
    char_w: float
    char_gap: float
    word_gap: float = 0.0


@dataclass
class SceneSpec:
    rows: int
    cols: int
    seed: int
    instances: list  # of SpineSpec


@dataclass
class FaultSpec:
    splits: list = field(default_factory=list)        # (instance id, gap length px)
    distractors: int = 0
    ggtr_noise: dict = field(default_factory=dict)    # {"splits": bool, "distractors": bool}


@dataclass
class TextMaps:
    tcl: np.ndarray
    h: np.ndarray
    w: np.ndarray
    theta: np.ndarray
    tr: np.ndarray

    def copy(self) -> "TextMaps":
        return TextMaps(self.tcl.copy(), self.h.copy(), self.w.copy(),
                        self.theta.copy(), self.tr.copy())

    @property
    def shape(self):
        return self.tcl.shape


@dataclass
class CharBox:
    id: int
    instance: int
    rect: RotRect


@dataclass
class InstancePoly:
    id: int
    points: np.ndarray


@dataclass
class SceneTruth:
    spec: SceneSpec
    maps: TextMaps
    instance_polygons: list
    chars: list
    char_union: np.ndarray
    inst_grid: np.ndarray       # instance id per pixel, -1 outside
    arc_grid: np.ndarray        # spine arc position of the nearest sample
    spine_spans: list           # (s_char_first, s_char_last) per instance
    char_spans: list            # per instance: list of (s0, s1) char intervals


# ----------------- spine families ---------------------------------------------------------------


def _spine_xy(family: str, params: dict, t: np.ndarray):
    """Positions (M, 2) and tangent angles (M,) for parameter t in [0, 1]."""
    if family == "line":
        x0, y0 = params["x0"], params["y0"]
        ang, length = params["angle"], params["length"]
        x = x0 + t * length * math.cos(ang)
        y = y0 + t * length * math.sin(ang)
        tau = np.full_like(t, ang)
    elif family == "arc":
        cx, cy, r = params["cx"], params["cy"], params["radius"]
        a0, a1 = params["a0"], params["a1"]
        a = a0 + t * (a1 - a0)
        x = cx + r * np.cos(a)
        y = cy + r * np.sin(a)
        tau = a + math.pi / 2 * np.sign(a1 - a0)
    elif family == "sine":
        x0, y0 = params["x0"], params["y0"]
        length, amp = params["length"], params["amplitude"]
        period = params["period"]
        phase = params.get("phase", 0.0)
        u = t * length
        x = x0 + u
        y = y0 + amp * np.sin(2 * math.pi * u / period + phase)
        dy = amp * (2 * math.pi / period) * np.cos(2 * math.pi * u / period + phase)
        tau = np.arctan2(dy * length, np.full_like(t, length))
    elif family == "spiral":
        cx, cy = params["cx"], params["cy"]
        r0, r1 = params["r0"], params["r1"]
        a0, a1 = params["a0"], params["a1"]
        r = r0 + t * (r1 - r0)
        a = a0 + t * (a1 - a0)
        x = cx + r * np.cos(a)
        y = cy + r * np.sin(a)
        dx = (r1 - r0) * np.cos(a) - r * (a1 - a0) * np.sin(a)
        dy = (r1 - r0) * np.sin(a) + r * (a1 - a0) * np.cos(a)
        tau = np.arctan2(dy, dx)
    else:
        raise ValueError("unknown spine family %r" % family)
    return np.stack([x, y], axis=1), tau


@dataclass
class _Spine:
    pts: np.ndarray      # (M, 2) dense samples
    s: np.ndarray        # (M,) cumulative arc length
    tau: np.ndarray      # (M,) tangent angle

    @property
    def length(self):
        return float(self.s[-1])

    def at(self, s_vals):
        """Interpolated positions and tangents at arc positions s_vals."""
        s_vals = np.atleast_1d(s_vals)
        x = np.interp(s_vals, self.s, self.pts[:, 0])
        y = np.interp(s_vals, self.s, self.pts[:, 1])
        tau = np.interp(s_vals, self.s, np.unwrap(self.tau))
        return np.stack([x, y], axis=1), tau


def sample_spine(family: str, params: dict, step: float = 0.5) -> _Spine:
    coarse, _ = _spine_xy(family, params, np.linspace(0.0, 1.0, 64))
    approx_len = float(np.sum(np.hypot(*np.diff(coarse, axis=0).T)))
    m = max(64, int(approx_len / step) + 1)
    t = np.linspace(0.0, 1.0, m)
    pts, tau = _spine_xy(family, params, t)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return _Spine(pts, s, tau)


# ----------------- instance construction --------------------------------------------------------


def _char_positions(spine: _Spine, inst: SpineSpec, rng):
    """Arc positions, heights and word-break layout of the instance's chars."""
    gaps = []
    word_at = set()
    if inst.word_gap > inst.char_gap:
        k = int(rng.integers(3, 6))
        pos = k
        while pos < inst.chars:
            word_at.add(pos)
            pos += int(rng.integers(3, 6))
    for c in range(1, inst.chars):
        gaps.append(inst.word_gap if c in word_at else inst.char_gap)

    pitch = [inst.char_w + g for g in gaps]
    span = float(np.sum(pitch))
    need = span + inst.char_w + 2 * END_PAD
    if need > spine.length + 1e-6:
        raise SpecOverflow(
            "instance needs %.1f px of spine but has %.1f" % (need, spine.length))
    s0 = (spine.length - span) / 2.0
    s_chars = s0 + np.concatenate([[0.0], np.cumsum(pitch)])
    heights = inst.char_h * (1.0 + HEIGHT_JITTER * rng.uniform(-1.0, 1.0, size=inst.chars))
    return s_chars, heights


def _band_polygon(spine: _Spine, s_lo, s_hi, half_h_fn, step: float = 1.0):
    ss = np.linspace(s_lo, s_hi, max(8, int((s_hi - s_lo) / step) + 1))
    pts, tau = spine.at(ss)
    nx, ny = -np.sin(tau), np.cos(tau)
    hh = half_h_fn(ss)
    top = pts + np.stack([nx * hh, ny * hh], axis=1)
    bot = pts - np.stack([nx * hh, ny * hh], axis=1)
    return np.concatenate([top, bot[::-1]], axis=0)


def shrink_region(poly_mask: np.ndarray, spine_pts: np.ndarray, spine_s: np.ndarray,
                  half_heights: np.ndarray, factor: float):
    """Mask of pixels within factor * local half-height of the spine, clipped to
    the instance mask; also returns (distance, arc position) grids for reuse."""
    rows, cols = poly_mask.shape
    ii, jj = np.nonzero(poly_mask)
    dist = np.full((rows, cols), np.inf)
    arc = np.full((rows, cols), -1.0)
    band = np.zeros((rows, cols), dtype=bool)
    if ii.size == 0:
        return band, dist, arc, np.zeros((rows, cols))
    tree = cKDTree(spine_pts)
    d, idx = tree.query(np.stack([jj + 0.5, ii + 0.5], axis=1))
    dist[ii, jj] = d
    arc[ii, jj] = spine_s[idx]
    hloc = np.zeros((rows, cols))
    hloc[ii, jj] = 2.0 * half_heights[idx]
    band[ii, jj] = d <= factor * half_heights[idx]
    return band, dist, arc, hloc


def generate_scene(spec: SceneSpec, shrink_factor: float = SHRINK_FACTOR) -> SceneTruth:
    """Render ground truth for a scene spec; raises SpecOverflow when an
    instance leaves the canvas or its chars do not fit on the spine."""
    rows, cols = spec.rows, spec.cols
    rng = np.random.default_rng(spec.seed)
    maps = TextMaps(*(np.zeros((rows, cols)) for _ in range(5)))
    inst_grid = np.full((rows, cols), -1, dtype=int)
    arc_grid = np.full((rows, cols), -1.0)
    char_union = np.zeros((rows, cols), dtype=bool)
    polys = []
    chars = []
    spans = []
    char_spans = []

    for gid, inst in enumerate(spec.instances):
        spine = sample_spine(inst.family, inst.params)
        s_chars, heights = _char_positions(spine, inst, rng)
        half_h = lambda s: np.interp(s, s_chars, heights) / 2.0  # noqa: E731

        s_lo = s_chars[0] - inst.char_w / 2 - END_PAD
        s_hi = s_chars[-1] + inst.char_w / 2 + END_PAD
        poly = _band_polygon(spine, s_lo, s_hi, lambda s: half_h(s) + BAND_PAD)
        if (poly[:, 0].min() < 0.5 or poly[:, 1].min() < 0.5
                or poly[:, 0].max() > cols - 0.5 or poly[:, 1].max() > rows - 0.5):
            raise SpecOverflow("instance %d exits the %dx%d canvas" % (gid, rows, cols))

        poly_mask = grid.rasterize_polygon(poly, rows, cols)
        sel = (spine.s >= s_lo - 1.0) & (spine.s <= s_hi + 1.0)
        band, dist, arc, hloc = shrink_region(
            poly_mask, spine.pts[sel], spine.s[sel], half_h(spine.s[sel]), shrink_factor)

        # Per-char boxes and the along-spine charness profile.
        spans_i = []
        centers, taus = spine.at(s_chars)
        for k in range(inst.chars):
            rect = RotRect(float(centers[k, 0]), float(centers[k, 1]),
                           float(heights[k]), float(inst.char_w), float(taus[k]))
            chars.append(CharBox(id=len(chars), instance=gid, rect=rect))
            spans_i.append((s_chars[k] - inst.char_w / 2, s_chars[k] + inst.char_w / 2))
        char_union |= grid.rasterize_rects([c.rect for c in chars if c.instance == gid],
                                           rows, cols)

        ii, jj = np.nonzero(band)
        s_px = arc[ii, jj]
        on_char = np.zeros(ii.size, dtype=bool)
        for s0, s1 in spans_i:
            on_char |= (s_px >= s0) & (s_px <= s1)
        hh_px = shrink_factor * hloc[ii, jj] / 2.0
        cross = 1.0 - 0.5 * np.minimum(dist[ii, jj] / np.maximum(hh_px, 1e-9), 1.0)
        along = np.where(on_char, 1.0, GAP_TCL)
        # confidence texture: breaks NMS score ties so kept segments are not
        # perfectly evenly spaced (real center-line predictions are noisy)
        dither = 1.0 - TCL_DITHER * rng.uniform(0.0, 1.0, size=ii.size)
        tcl_val = cross * along * dither

        # Nearest-sample tangent for the theta map, normalized mod pi.
        tree = cKDTree(spine.pts[sel])
        _, idx = tree.query(np.stack([jj + 0.5, ii + 0.5], axis=1))
        tau_px = spine.tau[sel][idx]
        tau_px = (tau_px + math.pi / 2) % math.pi - math.pi / 2

        maps.tr[poly_mask] = 1.0
        inst_grid[poly_mask] = gid
        arc_grid[poly_mask] = arc[poly_mask]
        maps.tcl[ii, jj] = tcl_val
        maps.h[ii, jj] = hloc[ii, jj]
        maps.w[ii, jj] = np.clip(np.floor(hloc[ii, jj] / 4.0 + 0.5), 2, 6)
        maps.theta[ii, jj] = tau_px
        polys.append(InstancePoly(id=gid, points=poly))
        spans.append((float(s_chars[0]), float(s_chars[-1])))
        char_spans.append(spans_i)

    return SceneTruth(spec=spec, maps=maps, instance_polygons=polys, chars=chars,
                      char_union=char_union, inst_grid=inst_grid, arc_grid=arc_grid,
                      spine_spans=spans, char_spans=char_spans)


# ----------------- fault injection --------------------------------------------------------------


def inject_faults(truth: SceneTruth, fault: FaultSpec):
    """Corrupt the maps with false negatives (TCL/TR split gaps) and false
    positives (text-like distractor strokes); the returned GGTR truth grid is
    the clean text region unless a ggtr_noise toggle copies a fault into it.

    Returns (corrupted TextMaps, ggtr grid).
    """
    maps = truth.maps.copy()
    ggtr = (truth.maps.tr > 0).astype(float)
    rng = np.random.default_rng(truth.spec.seed * 7919 + 1217)
    noise = fault.ggtr_noise or {}

    for gid, gap in fault.splits:
        lo, hi = truth.spine_spans[gid]
        mid = (lo + hi) / 2.0
        cut = (truth.inst_grid == gid) & (np.abs(truth.arc_grid - mid) <= gap / 2.0)
        maps.tcl[cut] = 0.0
        maps.tr[cut] = 0.0
        if noise.get("splits"):
            ggtr[cut] = 0.0

    if fault.distractors > 0:
        rows, cols = maps.shape
        away = ndimage.distance_transform_edt(truth.maps.tr <= 0)
        base_h = float(np.mean([c.rect.h for c in truth.chars])) if truth.chars else 12.0
        centers = []
        tries = 0
        while len(centers) < fault.distractors and tries < 4000:
            tries += 1
            i = int(rng.integers(16, rows - 16))
            j = int(rng.integers(16, cols - 16))
            if away[i, j] < 2.2 * base_h:
                continue
            if any((i - a) ** 2 + (j - b) ** 2 < (3.0 * base_h) ** 2 for a, b in centers):
                continue
            centers.append((i, j))
        for i, j in centers:
            h_d = base_h * float(rng.uniform(0.75, 1.0))
            a0 = float(rng.uniform(-math.pi / 2, math.pi / 2))
            a1 = a0 + math.pi / 2 + float(rng.uniform(-0.3, 0.3))
            strokes = [
                RotRect(j + 0.5, i + 0.5, h_d * 1.6, max(2.0, h_d / 4), a0),
                RotRect(j + 0.5 + float(rng.uniform(-1.5, 1.5)),
                        i + 0.5 + float(rng.uniform(-1.5, 1.5)),
                        h_d * 1.2, max(2.0, h_d / 4), a1),
            ]
            for st in strokes:
                m = grid.rasterize_rects([st], rows, cols)
                maps.tcl[m] = 0.85
                maps.tr[m] = 1.0
                maps.h[m] = h_d
                maps.w[m] = clip_width(h_d)
                maps.theta[m] = st.theta
                if noise.get("distractors"):
                    ggtr[m] = 1.0

    return maps, ggtr


# ----------------- serialization ----------------------------------------------------------------


def write_tmap(path, name: str, arr: np.ndarray):
    rows, cols = arr.shape
    with open(path, "w") as f:
        f.write("TMAP %s %d %d\n" % (name, rows, cols))
        for i in range(rows):
            f.write(" ".join("%.9g" % v for v in arr[i]))
            f.write("\n")


def read_tmap(path):
    with open(path) as f:
        head = f.readline().split()
        if len(head) != 4 or head[0] != "TMAP":
            raise ValueError("not a TMAP file: %s" % path)
        name, rows, cols = head[1], int(head[2]), int(head[3])
        arr = np.loadtxt(f, ndmin=2)
    if arr.shape != (rows, cols):
        raise ValueError("TMAP %s claims %dx%d but holds %s" % (name, rows, cols, arr.shape))
    return name, arr


def scene_spec_from_dict(doc: dict):
    instances = [
        SpineSpec(family=d["family"], params=d["params"], chars=int(d["chars"]),
                  char_h=float(d["char_h"]), char_w=float(d["char_w"]),
                  char_gap=float(d["char_gap"]), word_gap=float(d.get("word_gap", 0.0)))
        for d in doc["instances"]
    ]
    spec = SceneSpec(rows=int(doc["rows"]), cols=int(doc["cols"]),
                     seed=int(doc["seed"]), instances=instances)
    fault = None
    if doc.get("faults"):
        fd = doc["faults"]
        fault = FaultSpec(splits=[tuple(x) for x in fd.get("splits", [])],
                          distractors=int(fd.get("distractors", 0)),
                          ggtr_noise=dict(fd.get("ggtr_noise", {})))
    return spec, fault


def scene_spec_to_dict(spec: SceneSpec, fault: FaultSpec | None = None) -> dict:
    doc = {
        "rows": spec.rows, "cols": spec.cols, "seed": spec.seed,
        "instances": [
            {"family": i.family, "params": i.params, "chars": i.chars,
             "char_h": i.char_h, "char_w": i.char_w,
             "char_gap": i.char_gap, "word_gap": i.word_gap}
            for i in spec.instances
        ],
    }
    if fault is not None:
        doc["faults"] = {"splits": [list(x) for x in fault.splits],
                         "distractors": fault.distractors,
                         "ggtr_noise": fault.ggtr_noise}
    return doc


def truth_to_dict(truth: SceneTruth) -> dict:
    return {
        "instances": [
            {"id": p.id, "polygon": [[float(x), float(y)] for x, y in p.points]}
            for p in truth.instance_polygons
        ],
        "chars": [
            {"id": c.id, "instance": c.instance, "cx": c.rect.cx, "cy": c.rect.cy,
             "h": c.rect.h, "w": c.rect.w, "theta": c.rect.theta}
            for c in truth.chars
        ],
    }


def write_scene_dir(out_dir, truth: SceneTruth, maps: TextMaps | None = None,
                    ggtr: np.ndarray | None = None):
    """Write one scene as TMAP files plus truth.json; `maps` defaults to the
    clean truth maps (pass the corrupted ones for fault scenes)."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    m = maps if maps is not None else truth.maps
    for name in ("tcl", "h", "w", "theta", "tr"):
        write_tmap(os.path.join(out_dir, name + ".tmap"), name, getattr(m, name))
    if ggtr is not None:
        write_tmap(os.path.join(out_dir, "ggtr.tmap"), "ggtr", ggtr)
    with open(os.path.join(out_dir, "truth.json"), "w") as f:
        json.dump(truth_to_dict(truth), f)
        f.write("\n")


def read_scene_dir(scene_dir):
    """Load (TextMaps, ggtr or None, truth dict) from a synth output directory."""
    import os

    arrs = {}
    for name in ("tcl", "h", "w", "theta", "tr"):
        _, arrs[name] = read_tmap(os.path.join(scene_dir, name + ".tmap"))
    ggtr = None
    gpath = os.path.join(scene_dir, "ggtr.tmap")
    if os.path.exists(gpath):
        _, ggtr = read_tmap(gpath)
    with open(os.path.join(scene_dir, "truth.json")) as f:
        truth_doc = json.load(f)
    return TextMaps(**arrs), ggtr, truth_doc


def truth_from_dict(doc: dict, maps: TextMaps) -> SceneTruth:
    """Rebuild the truth needed for annotation/evaluation from a truth.json
    document plus maps (the arc grid used by fault injection is not restored)."""
    rows, cols = maps.shape
    polys = [InstancePoly(id=d["id"], points=np.array(d["polygon"], dtype=float))
             for d in doc["instances"]]
    chars = [CharBox(id=d["id"], instance=d["instance"],
                     rect=RotRect(d["cx"], d["cy"], d["h"], d["w"], d["theta"]))
             for d in doc["chars"]]
    inst_grid = np.full((rows, cols), -1, dtype=int)
    for p in polys:
        inst_grid[grid.rasterize_polygon(p.points, rows, cols)] = p.id
    char_union = grid.rasterize_rects([c.rect for c in chars], rows, cols)
    return SceneTruth(spec=None, maps=maps, instance_polygons=polys, chars=chars,
                      char_union=char_union, inst_grid=inst_grid,
                      arc_grid=np.full((rows, cols), -1.0), spine_spans=[],
                      char_spans=[])
