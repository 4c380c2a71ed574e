"""End-to-end detection: GGTR rectification, per-component segment proposal,
node-type suppression, link grouping, contour approximation, and the
instance-level GGTR filter, plus the greedy route-finding baseline used as
the contour comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import graph as graphmod
from . import grid, proposal
from .errors import EmptyGroup

MIN_INSTANCE_AREA = 16.0


@dataclass
class DetectConfig:
    tcl_thr: float = 0.5
    link_thr: float = 0.5
    ggtr_thr: float = 0.5
    fpns_node: bool = True
    fpns_ggtr: bool = True
    sap: bool = True           # shape approximation vs route-finding baseline
    tcl_op: str = "union"      # union | intersect, GGTR rectification mode
    use_gcn: bool = True       # off: group by rectified-TCL component instead
    w_lo: int = 2
    w_hi: int = 6
    min_area: float = MIN_INSTANCE_AREA


@dataclass
class InstanceGroup:
    members: list                      # segment indices
    links: list = field(default_factory=list)   # accepted (i, j) pairs
    node_removed: int = 0
    ggtr_kept: bool | None = None


@dataclass
class DetectionResult:
    polygons: list       # (polygon array, kept flag, group index)
    groups: list         # InstanceGroup provenance
    stages: dict         # proposed / node_removed / groups / ggtr_dropped

    def kept_polygons(self):
        return [p for p, kept, _ in self.polygons if kept]


# ----------------- GGTR shrink and TCL rectification ---------------------------------------------


def shrink_ggtr(ggtr_mask: np.ndarray) -> np.ndarray:
    """Thin the binarized GGTR to a one-pixel-wide skeleton (Zhang-Suen).

    Components are thinned independently on their padded bounding boxes;
    the result is identical to thinning the whole grid (the update rule is
    local) but much cheaper on sparse masks.
    """
    mask = ggtr_mask.astype(bool)
    out = np.zeros_like(mask)
    if not mask.any():
        return out
    labels, n = grid.label_components(mask)
    sls = ndimage_find_objects(labels, n)
    for k, sl in enumerate(sls):
        if sl is None:
            continue
        comp = labels[sl] == (k + 1)
        out[sl] |= _zhang_suen(comp)
    return out


def ndimage_find_objects(labels, n):
    from scipy import ndimage

    return ndimage.find_objects(labels, n)


def _zhang_suen(img: np.ndarray) -> np.ndarray:
    img = img.copy()
    while True:
        changed = False
        for step in (0, 1):
            p = np.pad(img, 1)
            p2 = p[:-2, 1:-1]
            p3 = p[:-2, 2:]
            p4 = p[1:-1, 2:]
            p5 = p[2:, 2:]
            p6 = p[2:, 1:-1]
            p7 = p[2:, :-2]
            p8 = p[1:-1, :-2]
            p9 = p[:-2, :-2]
            ring = [p2, p3, p4, p5, p6, p7, p8, p9]
            b = sum(x.astype(int) for x in ring)
            a = sum(((~ring[k]) & ring[(k + 1) % 8]).astype(int) for k in range(8))
            cond = img & (b >= 2) & (b <= 6) & (a == 1)
            if step == 0:
                cond &= ~(p2 & p4 & p6) & ~(p4 & p6 & p8)
            else:
                cond &= ~(p2 & p4 & p8) & ~(p2 & p6 & p8)
            if cond.any():
                img &= ~cond
                changed = True
        if not changed:
            return img


def rectify_tcl(tcl_mask: np.ndarray, ggtr: np.ndarray, thr: float = 0.5,
                op: str = "union") -> np.ndarray:
    """TCL' from the GGTR skeleton: union restores split instances (the
    default); intersect keeps only skeleton-confirmed centerline pixels."""
    skel = shrink_ggtr(ggtr >= thr)
    if op == "union":
        return tcl_mask | skel
    if op == "intersect":
        return tcl_mask & skel
    raise ValueError("tcl_op must be union or intersect, got %r" % op)


# ----------------- grouping ----------------------------------------------------------------------


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def group_segments(n_segs: int, pairs: np.ndarray, r_hat: np.ndarray,
                   thr: float = 0.5):
    """Connected components over candidate pairs with r_hat >= thr (either
    direction); singletons survive as their own groups."""
    uf = _UnionFind(n_segs)
    accepted = []
    for (p, u), rv in zip(pairs, r_hat):
        if rv >= thr:
            uf.union(int(p), int(u))
            accepted.append((int(p), int(u)))
    comps = {}
    for k in range(n_segs):
        comps.setdefault(uf.find(k), []).append(k)
    groups = [InstanceGroup(members=m) for _, m in sorted(comps.items())]
    for g in groups:
        mem = set(g.members)
        g.links = [e for e in accepted if e[0] in mem]
    return groups


# ----------------- contours ----------------------------------------------------------------------


def _group_mask(rects, rows, cols):
    return grid.morph_close(grid.rasterize_rects(rects, rows, cols))


def shape_polygons(rects, rows: int, cols: int):
    """Closed-union contours of the group's rectangles, largest component
    first; each entry is (polygon, pixel area).

    Computed on the group's bounding box and shifted back, which matches the
    full-grid result away from the canvas border.
    """
    if not rects:
        raise EmptyGroup("shape approximation on empty group")
    pad = 3.0
    xs = [r.cx for r in rects]
    ys = [r.cy for r in rects]
    d = max(r.half_diag for r in rects) + pad
    j0 = max(0, int(math.floor(min(xs) - d)))
    i0 = max(0, int(math.floor(min(ys) - d)))
    j1 = min(cols, int(math.ceil(max(xs) + d)))
    i1 = min(rows, int(math.ceil(max(ys) + d)))
    local = [grid.RotRect(r.cx - j0, r.cy - i0, r.h, r.w, r.theta) for r in rects]
    mask = _group_mask(local, i1 - i0, j1 - j0)
    comps = grid.connected_components(mask)
    comps.sort(key=lambda c: -int(c.sum()))
    out = []
    for c in comps:
        poly = grid.trace_contour(c) + [j0, i0]
        if len(poly) >= 3:
            out.append((poly, int(c.sum())))
    return out


def shape_approximate(rects, rows: int, cols: int) -> np.ndarray:
    """Contour of the largest closed component of the group's rectangles."""
    return shape_polygons(rects, rows, cols)[0][0]


def route_find_baseline(rects) -> np.ndarray:
    """Greedy nearest-neighbor ordering from an extremal segment; emits the
    top-side points forward and bottom-side points backward.  Reproduces the
    local-optimum failure mode of route-finding: with many segments the
    ordering can skip ahead and the polygon self-intersects."""
    if not rects:
        raise EmptyGroup("route finding on empty group")
    centers = np.array([[r.cx, r.cy] for r in rects])
    centroid = centers.mean(axis=0)
    start = int(np.argmax(((centers - centroid) ** 2).sum(axis=1)))
    order = [start]
    left = set(range(len(rects))) - {start}
    while left:
        cur = centers[order[-1]]
        nxt = min(left, key=lambda k: ((centers[k] - cur) ** 2).sum())
        order.append(nxt)
        left.remove(nxt)
    top, bottom = [], []
    for k in order:
        r = rects[k]
        nx, ny = -math.sin(r.theta), math.cos(r.theta)
        top.append((r.cx - nx * r.h / 2, r.cy - ny * r.h / 2))
        bottom.append((r.cx + nx * r.h / 2, r.cy + ny * r.h / 2))
    return np.array(top + bottom[::-1])


def ggtr_instance_filter(poly: np.ndarray, ggtr: np.ndarray, thr: float = 0.5,
                         keep_thr: float = 0.5):
    """Coverage of the instance mask by the binarized GGTR; drop below 0.5."""
    rows, cols = ggtr.shape
    mask = grid.rasterize_polygon(poly, rows, cols)
    total = int(mask.sum())
    if total == 0:
        return False, 0.0
    cov = int((mask & (ggtr >= thr)).sum()) / total
    return cov >= keep_thr, cov


# ----------------- full pipeline ------------------------------------------------------------------


def detect(maps, ggtr: np.ndarray, params: graphmod.GcnParams,
           config: DetectConfig | None = None) -> DetectionResult:
    """Algorithm: rectify TCL with the GGTR skeleton, propose segments per
    rectified component, drop nontext-typed nodes, group by link predictions,
    approximate each group's contour, and filter instances by GGTR coverage.
    Every stage honors its config toggle so ablations can switch it off."""
    cfg = config or DetectConfig()
    rows, cols = maps.shape
    tcl_mask = maps.tcl > cfg.tcl_thr
    tclp = rectify_tcl(tcl_mask, ggtr, cfg.ggtr_thr, cfg.tcl_op) if cfg.fpns_ggtr else tcl_mask

    labels, n_comp = grid.label_components(tclp)
    segs = []
    comp_of = []
    for comp_id in range(1, n_comp + 1):
        comp_segs = proposal.propose_segments(
            maps, cfg.tcl_thr, mask=labels == comp_id, w_lo=cfg.w_lo, w_hi=cfg.w_hi)
        segs.extend(comp_segs)
        comp_of.extend([comp_id] * len(comp_segs))
    stages = {"proposed": len(segs), "node_removed": 0, "groups": 0, "ggtr_dropped": 0}
    if not segs:
        return DetectionResult(polygons=[], groups=[], stages=stages)

    node_removed = 0
    if cfg.fpns_node and cfg.use_gcn and len(segs) > 0:
        g = graphmod.build_graph(segs)
        feats = graphmod.node_features(segs, maps)
        hs = graphmod.gcn_forward(feats, g.adj_norm, params)
        pred = graphmod.classify_nodes(hs[-1], g, params)
        k_non = graphmod.CLASSES.index(proposal.NONTEXT)
        keep = np.argmax(pred.probs, axis=1) != k_non
        node_removed = int(np.count_nonzero(~keep))
        segs = [s for s, k in zip(segs, keep) if k]
        comp_of = [c for c, k in zip(comp_of, keep) if k]
    stages["node_removed"] = node_removed
    if not segs:
        return DetectionResult(polygons=[], groups=[], stages=stages)

    if cfg.use_gcn:
        g = graphmod.build_graph(segs)
        feats = graphmod.node_features(segs, maps)
        hs = graphmod.gcn_forward(feats, g.adj_norm, params)
        link = graphmod.predict_links(hs[-1], g.pairs, params)
        groups = group_segments(len(segs), g.pairs, link.r_hat, cfg.link_thr)
    else:
        comps = {}
        for k, c in enumerate(comp_of):
            comps.setdefault(c, []).append(k)
        groups = [InstanceGroup(members=m) for _, m in sorted(comps.items())]
    for g_ in groups:
        g_.node_removed = node_removed
    stages["groups"] = len(groups)

    polygons = []
    dropped = 0
    for gi, group in enumerate(groups):
        rects = [segs[k].rect for k in group.members]
        if cfg.sap:
            polys = [p for p, _ in shape_polygons(rects, rows, cols)]
        else:
            polys = [route_find_baseline(rects)]
        for pi, poly in enumerate(polys):
            if grid.polygon_area(poly) < cfg.min_area:
                continue
            if pi > 0 and not cfg.fpns_ggtr:
                continue  # fragments beyond the main component need the filter
            if cfg.fpns_ggtr:
                kept, _ = ggtr_instance_filter(poly, ggtr, cfg.ggtr_thr)
            else:
                kept = True
            group.ggtr_kept = kept if pi == 0 else group.ggtr_kept
            if not kept:
                dropped += 1
            polygons.append((poly, kept, gi))
    stages["ggtr_dropped"] = dropped
    return DetectionResult(polygons=polygons, groups=groups, stages=stages)


# ----------------- serialization ------------------------------------------------------------------


def detection_to_dict(result: DetectionResult) -> dict:
    return {
        "polygons": [
            {"id": k, "points": [[float(x), float(y)] for x, y in poly], "kept": bool(kept)}
            for k, (poly, kept, _) in enumerate(result.polygons)
        ],
        "stages": result.stages,
    }


def save_detection(path, result: DetectionResult):
    with open(path, "w") as f:
        json.dump(detection_to_dict(result), f)
        f.write("\n")


def load_detection(path):
    with open(path) as f:
        doc = json.load(f)
    polys = [(np.array(p["points"], dtype=float), bool(p["kept"]), k)
             for k, p in enumerate(doc["polygons"])]
    return DetectionResult(polygons=polys, groups=[], stages=doc.get("stages", {}))
