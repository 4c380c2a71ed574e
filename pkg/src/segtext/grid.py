"""Rotated-rectangle geometry, raster masks, morphology and contour tracing.

Conventions used everywhere downstream:
  * masks are 2-D numpy bool arrays indexed [row, col];
  * pixel (i, j) covers the unit square [j, j+1] x [i, i+1] in (x, y)
    coordinates, so its center is (j + 0.5, i + 0.5);
  * a point exactly on a rectangle boundary counts as inside;
  * polygons are (N, 2) float arrays of (x, y) vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMask

EPS = 1e-12

# 3x3 all-ones structuring element used by every morphology call.
B3 = np.ones((3, 3), dtype=bool)


# ----------------- rotated rectangles -----------------------------------------------------------


@dataclass(frozen=True)
class RotRect:
    """Rotated rectangle (cx, cy, h, w, theta); theta normalized to [-pi/2, pi/2)."""

    cx: float
    cy: float
    h: float
    w: float
    theta: float

    def __post_init__(self):
        if not (self.h > 0 and self.w > 0):
            raise ValueError("RotRect needs h > 0 and w > 0, got h=%r w=%r" % (self.h, self.w))
        t = (self.theta + math.pi / 2.0) % math.pi - math.pi / 2.0
        object.__setattr__(self, "theta", t)

    @property
    def area(self) -> float:
        return self.h * self.w

    @property
    def half_diag(self) -> float:
        return 0.5 * math.hypot(self.h, self.w)


def corners(rect: RotRect) -> np.ndarray:
    """rect -> (4, 2) vertices in counter-clockwise order; their mean is the center.

    The width axis is (cos t, sin t) and the height axis (-sin t, cos t).
    """
    c, s = math.cos(rect.theta), math.sin(rect.theta)
    ux, uy = c * rect.w / 2.0, s * rect.w / 2.0
    vx, vy = -s * rect.h / 2.0, c * rect.h / 2.0
    return np.array(
        [
            [rect.cx - ux - vx, rect.cy - uy - vy],
            [rect.cx + ux - vx, rect.cy + uy - vy],
            [rect.cx + ux + vx, rect.cy + uy + vy],
            [rect.cx - ux + vx, rect.cy - uy + vy],
        ]
    )


def _batch_corners(rects) -> np.ndarray:
    """list[RotRect] -> (M, 4, 2)."""
    return np.stack([corners(r) for r in rects], axis=0)


def _clip_halfplane(verts, count, p, q):
    """Clip padded convex polygons by the left half-plane of directed edges p->q.

    verts: (M, V, 2) vertex slots, count: (M,) valid prefix length per row,
    p, q: (M, 2).  Returns clipped (verts, count) with V' = V + 1 slots.
    """
    M, V, _ = verts.shape
    idx = np.arange(V)[None, :]
    live = idx < count[:, None]

    e = q - p  # (M, 2)
    rel = verts - p[:, None, :]
    d = e[:, None, 0] * rel[:, :, 1] - e[:, None, 1] * rel[:, :, 0]  # cross, (M, V)
    inside = (d >= -EPS) & live

    nxt = idx + 1
    nxt = np.where(nxt >= count[:, None], 0, nxt)
    nxt = np.clip(nxt, 0, V - 1)
    d_next = np.take_along_axis(d, nxt, axis=1)
    in_next = np.take_along_axis(inside, nxt, axis=1)
    v_next = np.take_along_axis(verts, nxt[:, :, None], axis=1)

    denom = d - d_next
    t = np.where(np.abs(denom) > EPS, d / np.where(np.abs(denom) > EPS, denom, 1.0), 0.0)
    cross_pt = verts + t[:, :, None] * (v_next - verts)

    # Per directed edge (i -> next): emit the crossing point when the edge
    # crosses the boundary, then the end vertex when it lands inside.
    out = np.empty((M, 2 * V, 2))
    ok = np.zeros((M, 2 * V), dtype=bool)
    out[:, 0::2] = cross_pt
    ok[:, 0::2] = live & (inside ^ in_next)
    out[:, 1::2] = v_next
    ok[:, 1::2] = live & in_next

    order = np.argsort(~ok, axis=1, kind="stable")
    out = np.take_along_axis(out, order[:, :, None], axis=1)
    ok = np.take_along_axis(ok, order, axis=1)
    new_count = ok.sum(axis=1)
    keep = min(2 * V, V + 1)  # convex clip adds at most one vertex
    return out[:, :keep], new_count


def _shoelace_batch(verts, count) -> np.ndarray:
    """Areas of padded polygons: verts (M, V, 2) with `count` valid slots per row."""
    M, V, _ = verts.shape
    idx = np.arange(V)[None, :]
    live = idx < count[:, None]
    nxt = np.where(idx + 1 >= count[:, None], 0, idx + 1)
    nxt = np.clip(nxt, 0, V - 1)
    v_next = np.take_along_axis(verts, nxt[:, :, None], axis=1)
    cross = verts[:, :, 0] * v_next[:, :, 1] - v_next[:, :, 0] * verts[:, :, 1]
    area = 0.5 * np.abs((cross * live).sum(axis=1))
    area[count < 3] = 0.0
    return area


def pair_intersection_areas(subj_corners: np.ndarray, clip_corners: np.ndarray) -> np.ndarray:
    """Exact intersection areas for M (subject, clip) rectangle pairs given as
    (M, 4, 2) corner arrays in CCW order."""
    subj = subj_corners.copy()
    count = np.full(len(subj), 4)
    for k in range(4):
        p = clip_corners[:, k]
        q = clip_corners[:, (k + 1) % 4]
        subj, count = _clip_halfplane(subj, count, p, q)
    return _shoelace_batch(subj, count)


def rect_intersection_areas(rect: RotRect, others) -> np.ndarray:
    """Exact intersection areas between one rectangle and a list of rectangles."""
    if len(others) == 0:
        return np.zeros(0)
    M = len(others)
    subj = np.tile(corners(rect)[None, :, :], (M, 1, 1))
    return pair_intersection_areas(subj, _batch_corners(others))


def rect_iou(a: RotRect, b: RotRect) -> float:
    """Exact intersection-over-union via convex clipping; symmetric by construction."""
    ka = (a.cx, a.cy, a.h, a.w, a.theta)
    kb = (b.cx, b.cy, b.h, b.w, b.theta)
    if ka == kb:
        return 1.0
    if kb < ka:
        a, b = b, a
    if math.hypot(a.cx - b.cx, a.cy - b.cy) > a.half_diag + b.half_diag:
        return 0.0
    inter = float(rect_intersection_areas(a, [b])[0])
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(inter / union, 1.0)


def _pairwise_iou_table(rects):
    """Sparse IoU adjacency over all rectangle pairs close enough to overlap:
    {i: [(j, iou), ...]} with both directions present."""
    from scipy.spatial import cKDTree

    n = len(rects)
    centers = np.array([[r.cx, r.cy] for r in rects])
    diags = np.array([r.half_diag for r in rects])
    areas = np.array([r.area for r in rects])
    table = {i: [] for i in range(n)}
    if n < 2:
        return table
    pairs = cKDTree(centers).query_pairs(2.0 * float(diags.max()), output_type="ndarray")
    if len(pairs) == 0:
        return table
    i, j = pairs[:, 0], pairs[:, 1]
    near = np.hypot(*(centers[i] - centers[j]).T) <= diags[i] + diags[j]
    i, j = i[near], j[near]
    if len(i) == 0:
        return table
    all_corners = _batch_corners(rects)
    inter = pair_intersection_areas(all_corners[i], all_corners[j])
    iou = inter / (areas[i] + areas[j] - inter)
    for a, b, v in zip(i, j, iou):
        table[int(a)].append((int(b), float(v)))
        table[int(b)].append((int(a), float(v)))
    return table


def nms(rects, scores, thr: float):
    """Greedy score-descending suppression; drops a candidate when its IoU with a
    kept rectangle exceeds thr.  Ties in score keep the earlier list index, so a
    row-major candidate order makes the result fully deterministic.

    Returns kept indices in selection order.
    """
    n = len(rects)
    if n == 0:
        return []
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores, kind="stable")
    table = _pairwise_iou_table(rects)

    kept = np.zeros(n, dtype=bool)
    keep = []
    for idx in order:
        idx = int(idx)
        if any(kept[j] and v > thr + 1e-9 for j, v in table[idx]):
            continue
        kept[idx] = True
        keep.append(idx)
    return keep


# ----------------- rasterization ----------------------------------------------------------------


def rasterize_rects(rects, rows: int, cols: int) -> np.ndarray:
    """Union mask of rectangles: pixel set iff its center is inside (boundary included)."""
    mask = np.zeros((rows, cols), dtype=bool)
    for r in rects:
        d = r.half_diag
        j0 = max(0, int(math.floor(r.cx - d - 0.5)))
        j1 = min(cols, int(math.ceil(r.cx + d + 0.5)))
        i0 = max(0, int(math.floor(r.cy - d - 0.5)))
        i1 = min(rows, int(math.ceil(r.cy + d + 0.5)))
        if j0 >= j1 or i0 >= i1:
            continue
        xs = np.arange(j0, j1) + 0.5 - r.cx
        ys = np.arange(i0, i1) + 0.5 - r.cy
        gx, gy = np.meshgrid(xs, ys)
        c, s = math.cos(r.theta), math.sin(r.theta)
        along = gx * c + gy * s
        across = -gx * s + gy * c
        hit = (np.abs(along) <= r.w / 2.0 + 1e-9) & (np.abs(across) <= r.h / 2.0 + 1e-9)
        mask[i0:i1, j0:j1] |= hit
    return mask


def _scanline_fill(poly: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Even-odd fill of `poly` sampled at the grid ys x xs (returns bool (len(ys), len(xs))).

    Half-open crossing rule; even-odd parity keeps self-intersecting input well defined.
    """
    poly = np.asarray(poly, dtype=float)
    x1 = poly[:, 0]
    y1 = poly[:, 1]
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)
    out = np.zeros((len(ys), len(xs)), dtype=bool)
    keep = np.abs(y2 - y1) > EPS
    if not keep.any():
        return out
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]
    for i, y in enumerate(ys):
        spans = (y1 <= y) != (y2 <= y)
        if not spans.any():
            continue
        t = (y - y1[spans]) / (y2[spans] - y1[spans])
        cx = np.sort(x1[spans] + t * (x2[spans] - x1[spans]))
        parity = np.searchsorted(cx, xs, side="right") % 2
        out[i] = parity == 1
    return out


def rasterize_polygon(poly: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Mask of pixels whose center falls inside the polygon (even-odd scanline fill)."""
    poly = np.asarray(poly, dtype=float)
    mask = np.zeros((rows, cols), dtype=bool)
    i0 = max(0, int(math.floor(poly[:, 1].min())))
    i1 = min(rows, int(math.ceil(poly[:, 1].max())) + 1)
    j0 = max(0, int(math.floor(poly[:, 0].min())))
    j1 = min(cols, int(math.ceil(poly[:, 0].max())) + 1)
    if i0 >= i1 or j0 >= j1:
        return mask
    ys = np.arange(i0, i1) + 0.5
    xs = np.arange(j0, j1) + 0.5
    mask[i0:i1, j0:j1] = _scanline_fill(poly, ys, xs)
    return mask


def polygon_area(poly: np.ndarray) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))


def polygon_iou(a: np.ndarray, b: np.ndarray, supersample: int = 2) -> float:
    """IoU of two polygons, rasterized at `supersample`x on their joint bounding box."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = np.minimum(a.min(axis=0), b.min(axis=0)) - 1.0
    hi = np.maximum(a.max(axis=0), b.max(axis=0)) + 1.0
    if np.any(hi - lo <= 0):
        return 0.0
    nx = max(2, int(math.ceil((hi[0] - lo[0]) * supersample)))
    ny = max(2, int(math.ceil((hi[1] - lo[1]) * supersample)))
    xs = lo[0] + (np.arange(nx) + 0.5) / supersample
    ys = lo[1] + (np.arange(ny) + 0.5) / supersample
    ma = _scanline_fill(a, ys, xs)
    mb = _scanline_fill(b, ys, xs)
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ma & mb) / union


# ----------------- morphology and components ----------------------------------------------------


def morph_close(mask: np.ndarray) -> np.ndarray:
    """Dilation then erosion by the 3x3 all-ones element.

    Computed on a 1-pixel zero pad so the result equals the infinite-plane
    closing restricted to the grid; that keeps the operation idempotent.
    """
    if not mask.any():
        return mask.copy()
    padded = np.pad(mask, 1)
    d = ndimage.binary_dilation(padded, structure=B3)
    e = ndimage.binary_erosion(d, structure=B3, border_value=0)
    return e[1:-1, 1:-1]


def label_components(mask: np.ndarray):
    """8-connected labeling: (labels int array, count)."""
    lab, n = ndimage.label(mask, structure=B3)
    return lab, int(n)


def connected_components(mask: np.ndarray):
    """List of disjoint full-size masks, one per 8-connected component."""
    lab, n = label_components(mask)
    return [lab == k for k in range(1, n + 1)]


# ----------------- contour tracing --------------------------------------------------------------

# Directions for the crack walk between pixels: E, S, W, N as (dx, dy).
_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _left_right(mask, x, y, d):
    """Set-state of the pixels left/right of the crack leaving vertex (x, y) along d."""
    rows, cols = mask.shape

    def at(i, j):
        return 0 <= i < rows and 0 <= j < cols and mask[i, j]

    dx, dy = _DIRS[d]
    if d == 0:  # E
        return at(y - 1, x), at(y, x)
    if d == 1:  # S
        return at(y, x), at(y, x - 1)
    if d == 2:  # W
        return at(y, x - 1), at(y - 1, x - 1)
    return at(y - 1, x - 1), at(y - 1, x)  # N


def trace_contour(mask: np.ndarray) -> np.ndarray:
    """Trace the outer boundary of a single connected component as a simple polygon.

    The walk follows pixel edges keeping the region on its left; at vertices where
    two pixels touch only diagonally the corner is chamfered (replaced by the two
    half-edge midpoints) so the polygon never touches itself.  Holes are ignored
    and collinear vertices merged.

    Raises EmptyMask on an all-zero mask.
    """
    if not mask.any():
        raise EmptyMask("trace_contour on empty mask")
    rcoords = np.argwhere(mask)
    i0, j0 = rcoords[np.lexsort((rcoords[:, 1], rcoords[:, 0]))][0]

    # Start on the top edge of the topmost-leftmost pixel, walking west:
    # region (the pixel) sits below the crack, i.e. on the walker's left.
    start = (int(j0) + 1, int(i0), 2)
    x, y, d = start
    path = []  # (vertex_before_move, dir) pairs
    max_steps = 4 * (mask.size + mask.shape[0] + mask.shape[1]) + 8
    for _ in range(max_steps):
        dx, dy = _DIRS[d]
        nx, ny = x + dx, y + dy
        path.append(((x, y), d))
        # Turn priority right, straight, left resolves diagonal contacts by
        # crossing over, which matches 8-connected components.
        for nd in ((d + 1) % 4, d, (d + 3) % 4):
            left, right = _left_right(mask, nx, ny, nd)
            if left and not right:
                d = nd
                break
        else:
            raise RuntimeError("contour walk stuck; mask not a clean component?")
        x, y = nx, ny
        if (x, y, d) == start:
            break
    else:
        raise RuntimeError("contour walk did not close")

    # Vertex sequence with chamfers at doubly-visited corners.
    seen = {}
    for (vx, vy), _ in path:
        seen[(vx, vy)] = seen.get((vx, vy), 0) + 1
    pts = []
    n = len(path)
    for k in range(n):
        (vx, vy), d_out = path[k]
        d_in = path[(k - 1) % n][1]
        if seen[(vx, vy)] > 1:
            ix, iy = _DIRS[d_in]
            ox, oy = _DIRS[d_out]
            pts.append((vx - ix / 2.0, vy - iy / 2.0))
            pts.append((vx + ox / 2.0, vy + oy / 2.0))
        else:
            pts.append((float(vx), float(vy)))

    return _merge_collinear(np.array(pts, dtype=float))


def _merge_collinear(poly: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    out = []
    n = len(poly)
    for k in range(n):
        a = poly[(k - 1) % n]
        b = poly[k]
        c = poly[(k + 1) % n]
        if np.all(np.abs(b - c) < tol):
            continue
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) < tol:
            continue
        out.append(b)
    return np.array(out, dtype=float)


# ----------------- polygon simplicity -----------------------------------------------------------


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def is_simple(poly: np.ndarray, tol: float = 1e-9) -> bool:
    """True when no two non-adjacent edges intersect or touch (exhaustive pair test)."""
    p = np.asarray(poly, dtype=float)
    n = len(p)
    if n < 3:
        return False
    a = p
    b = np.roll(p, -1, axis=0)
    for i in range(n - 2):
        js = np.arange(i + 2, n if i > 0 else n - 1)
        if js.size == 0:
            continue
        o1 = _orient(a[i, 0], a[i, 1], b[i, 0], b[i, 1], a[js, 0], a[js, 1])
        o2 = _orient(a[i, 0], a[i, 1], b[i, 0], b[i, 1], b[js, 0], b[js, 1])
        o3 = _orient(a[js, 0], a[js, 1], b[js, 0], b[js, 1], a[i, 0], a[i, 1])
        o4 = _orient(a[js, 0], a[js, 1], b[js, 0], b[js, 1], b[i, 0], b[i, 1])
        proper = ((o1 > tol) != (o2 > tol)) & ((o1 < -tol) != (o2 < -tol)) \
            & ((o3 > tol) != (o4 > tol)) & ((o3 < -tol) != (o4 < -tol))
        if np.any(proper):
            return False
        # Touching contact: an endpoint of one edge lying on the other edge.
        for j in js[np.nonzero((np.abs(o1) <= tol) | (np.abs(o2) <= tol)
                               | (np.abs(o3) <= tol) | (np.abs(o4) <= tol))[0]]:
            if _segments_touch(a[i], b[i], a[j], b[j], tol):
                return False
    return True


def _on_segment(p, q, r, tol):
    if abs(_orient(p[0], p[1], q[0], q[1], r[0], r[1])) > tol * max(1.0, np.abs(q - p).max()):
        return False
    return (min(p[0], q[0]) - tol <= r[0] <= max(p[0], q[0]) + tol
            and min(p[1], q[1]) - tol <= r[1] <= max(p[1], q[1]) + tol)


def _segments_touch(p1, p2, p3, p4, tol):
    return (_on_segment(p1, p2, p3, tol) or _on_segment(p1, p2, p4, tol)
            or _on_segment(p3, p4, p1, tol) or _on_segment(p3, p4, p2, tol))
