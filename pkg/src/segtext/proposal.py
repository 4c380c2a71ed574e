"""Dense overlapping text-segment proposal and three-way segment annotation.

Segments are small rotated rectangles seeded at text-center-line pixels; each
carries a confidence score (mean TCL under its footprint) and, after
annotation, one of the types char / interval / nontext / unlabeled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import grid
from .errors import NoCharSegments
from .grid import RotRect

CHAR = "char"
INTERVAL = "interval"
NONTEXT = "nontext"
UNLABELED = "unlabeled"

TYPES = (CHAR, INTERVAL, NONTEXT, UNLABELED)

BG_MARGIN = 8.0  # min distance (px) of synthesized non-text centers from TR


@dataclass(frozen=True)
class TextSegment:
    rect: RotRect
    score: float
    type: str = UNLABELED
    instance: int | None = None

    @property
    def cx(self):
        return self.rect.cx

    @property
    def cy(self):
        return self.rect.cy


@dataclass
class SegmentLabels:
    """Per-segment type assignment plus the accepted/rejected flag from filtering."""

    types: list
    accepted: np.ndarray  # bool per segment


def clip_width(h: float, lo: int = 2, hi: int = 6) -> int:
    """Segment width from local height: clamp(round(h / 4), lo, hi)."""
    return int(min(max(math.floor(h / 4.0 + 0.5), lo), hi))


def rect_map_mean(arr: np.ndarray, rect: RotRect) -> float:
    """Mean of `arr` over the pixels covered by `rect` (0 when nothing is covered)."""
    rows, cols = arr.shape
    d = rect.half_diag
    j0 = max(0, int(math.floor(rect.cx - d - 0.5)))
    j1 = min(cols, int(math.ceil(rect.cx + d + 0.5)))
    i0 = max(0, int(math.floor(rect.cy - d - 0.5)))
    i1 = min(rows, int(math.ceil(rect.cy + d + 0.5)))
    if j0 >= j1 or i0 >= i1:
        return 0.0
    xs = np.arange(j0, j1) + 0.5 - rect.cx
    ys = np.arange(i0, i1) + 0.5 - rect.cy
    gx, gy = np.meshgrid(xs, ys)
    c, s = math.cos(rect.theta), math.sin(rect.theta)
    hit = (np.abs(gx * c + gy * s) <= rect.w / 2 + 1e-9) \
        & (np.abs(-gx * s + gy * c) <= rect.h / 2 + 1e-9)
    if not hit.any():
        return 0.0
    return float(arr[i0:i1, j0:j1][hit].mean())


def propose_segments(maps, tcl_thr: float = 0.5, mask: np.ndarray | None = None,
                     w_lo: int = 2, w_hi: int = 6, nms_thr: float = 0.5):
    """One candidate rectangle per selected TCL pixel, deduplicated by NMS.

    Pixels are visited in row-major order, which fixes the NMS tie-break; the
    candidate set is `mask` when given, else tcl > tcl_thr.  Pixels without
    usable geometry (h < 1) are skipped.
    """
    if mask is None:
        mask = maps.tcl > tcl_thr
    pix = np.argwhere(mask)
    rects = []
    scores = []
    for i, j in pix:
        h = float(maps.h[i, j])
        if h < 1.0:
            continue
        rect = RotRect(j + 0.5, i + 0.5, h, float(clip_width(h, w_lo, w_hi)),
                       float(maps.theta[i, j]))
        rects.append(rect)
        scores.append(rect_map_mean(maps.tcl, rect))
    keep = grid.nms(rects, scores, nms_thr)
    return [TextSegment(rect=rects[k], score=scores[k]) for k in keep]


def _center_pixel(seg: TextSegment):
    return int(seg.cy), int(seg.cx)


def annotate_segments(segs, truth, rng, nontext_ratio: float = 0.3, nontext_min: int = 8):
    """Three-way annotation against scene truth.

    Char segments have their center inside the char union; for every char
    segment the closest non-char segment (Euclidean center distance, ties to
    the lower index) becomes an interval segment; non-text segments are
    synthesized at random background pixels with geometry copied from labeled
    segments.  Returns (segments incl. synthesized, SegmentLabels).
    """
    if not segs:
        return [], SegmentLabels([], np.zeros(0, dtype=bool))
    char_union = truth.char_union
    if not char_union.any():
        raise NoCharSegments("char union empty but %d segments given" % len(segs))

    n = len(segs)
    cx = np.array([s.cx for s in segs])
    cy = np.array([s.cy for s in segs])
    is_char = np.zeros(n, dtype=bool)
    inst = [None] * n
    for k, s in enumerate(segs):
        i, j = _center_pixel(s)
        if 0 <= i < char_union.shape[0] and 0 <= j < char_union.shape[1]:
            is_char[k] = char_union[i, j]
            gid = int(truth.inst_grid[i, j])
            if gid >= 0:
                inst[k] = gid

    char_idx = np.nonzero(is_char)[0]
    nonchar_idx = np.nonzero(~is_char)[0]
    types = [UNLABELED] * n
    for k in char_idx:
        types[k] = CHAR
    if char_idx.size and nonchar_idx.size:
        for k in char_idx:
            d2 = (cx[nonchar_idx] - cx[k]) ** 2 + (cy[nonchar_idx] - cy[k]) ** 2
            j = int(nonchar_idx[int(np.argmin(d2))])
            types[j] = INTERVAL

    out = [replace(s, type=types[k], instance=inst[k]) for k, s in enumerate(segs)]

    # Synthesize non-text segments on the background with geometry borrowed
    # from the labeled pool.  Centers keep a margin from the text region so a
    # nontext label never sits at link-like distance from a text segment.
    labeled = [s for s in out if s.type in (CHAR, INTERVAL)]
    n_syn = max(nontext_min, int(math.ceil(nontext_ratio * n)))
    from scipy import ndimage

    away = ndimage.distance_transform_edt(truth.maps.tr <= 0)
    bg = np.nonzero((away >= BG_MARGIN).ravel())[0]
    if bg.size < n_syn:
        bg = np.nonzero((truth.maps.tr <= 0).ravel())[0]
    if labeled and bg.size >= n_syn:
        picks = rng.choice(bg, size=n_syn, replace=False)
        srcs = rng.integers(0, len(labeled), size=n_syn)
        rows, cols = truth.maps.tr.shape
        for p, si in zip(picks, srcs):
            i, j = divmod(int(p), cols)
            src = labeled[int(si)].rect
            rect = RotRect(j + 0.5, i + 0.5, src.h, src.w, src.theta)
            out.append(TextSegment(rect=rect, score=rect_map_mean(truth.maps.tcl, rect),
                                   type=NONTEXT, instance=None))

    types_all = [s.type for s in out]
    accepted = np.array([t != UNLABELED for t in types_all])
    return out, SegmentLabels(types_all, accepted)


def weak_label_filter(segs, predicted_types, tr_mask: np.ndarray) -> SegmentLabels:
    """One-round weak filter: keep a predicted char/interval label only when the
    segment center lies inside the text region, a nontext label only outside;
    everything rejected reverts to unlabeled."""
    types = []
    accepted = np.zeros(len(segs), dtype=bool)
    for k, (s, p) in enumerate(zip(segs, predicted_types)):
        i, j = _center_pixel(s)
        in_tr = bool(0 <= i < tr_mask.shape[0] and 0 <= j < tr_mask.shape[1] and tr_mask[i, j])
        if p in (CHAR, INTERVAL):
            ok = in_tr
        elif p == NONTEXT:
            ok = not in_tr
        else:
            ok = False
        accepted[k] = ok
        types.append(p if ok else UNLABELED)
    return SegmentLabels(types, accepted)


# ----------------- serialization ----------------------------------------------------------------


def segments_to_json(segs) -> list:
    return [
        {
            "cx": s.cx, "cy": s.cy, "h": s.rect.h, "w": s.rect.w, "theta": s.rect.theta,
            "score": s.score, "type": s.type, "instance": s.instance,
        }
        for s in segs
    ]


def segments_from_json(items) -> list:
    return [
        TextSegment(rect=RotRect(d["cx"], d["cy"], d["h"], d["w"], d["theta"]),
                    score=d["score"], type=d.get("type", UNLABELED),
                    instance=d.get("instance"))
        for d in items
    ]


def save_segments(path, segs):
    with open(path, "w") as f:
        json.dump(segments_to_json(segs), f)
        f.write("\n")


def load_segments(path):
    with open(path) as f:
        return segments_from_json(json.load(f))
