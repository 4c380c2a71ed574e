"""Location-aware transfer of graph features into image-aligned grids and the
fusion-decoding stack that produces the graph-guided text-region map.

The decoding stack is random-initialized and exercised at the level of shape
contracts and operator correctness; the detection path normally receives its
GGTR from scene truth instead (see infer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import proposal, scene
from .errors import ShapeMismatch

BN_EPS = 1e-5
CR_CHANNELS = 32


# ----------------- primitive operators ----------------------------------------------------------


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded 2-D convolution; x (C, H, W), w (O, C, k, k), b (O,)."""
    if x.ndim != 3 or w.ndim != 4 or x.shape[0] != w.shape[1]:
        raise ShapeMismatch("conv2d x %s w %s" % (x.shape, w.shape))
    k = w.shape[2]
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    return np.einsum("chwij,ocij->ohw", win, w, optimize=True) + b[:, None, None]


def upsample2(x: np.ndarray) -> np.ndarray:
    """2x nearest-neighbor upsampling of (C, H, W)."""
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def batch_norm_fixed(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Inference-mode batch norm with fixed statistics (mean 0, variance 1)."""
    scale = gamma / math.sqrt(1.0 + BN_EPS)
    return x * scale[:, None, None] + beta[:, None, None]


@dataclass
class ConvBlock:
    w: np.ndarray
    b: np.ndarray
    gamma: np.ndarray | None = None  # set on CBR blocks, None on CR blocks

    @property
    def beta(self):
        return self._beta

    def __post_init__(self):
        self._beta = np.zeros_like(self.b) if self.gamma is not None else None


def cbr(x: np.ndarray, blk: ConvBlock) -> np.ndarray:
    """Conv3x3 + fixed-stat batch norm + ReLU."""
    return np.maximum(batch_norm_fixed(conv2d(x, blk.w, blk.b), blk.gamma, blk.beta), 0.0)


def cr(x: np.ndarray, blk: ConvBlock) -> np.ndarray:
    """Conv1x1 + ReLU."""
    return np.maximum(conv2d(x, blk.w, blk.b), 0.0)


# ----------------- location-aware transfer ------------------------------------------------------


def make_transfer_tensor(graph_obj, h_layer: np.ndarray, m_hop: int = 8) -> np.ndarray:
    """(N, M, D) tensor: row k stacks the features of node k's 1-hop neighbors
    in distance order, zero-padded when fewer than m_hop exist."""
    n, d = h_layer.shape
    out = np.zeros((n, m_hop, d))
    for k in range(n):
        nbrs = graph_obj.onehop[k][:m_hop]
        for m, u in enumerate(nbrs):
            out[k, m] = h_layer[u]
    return out


def lat_transfer(f_nmd: np.ndarray, segs, rows: int, cols: int,
                 scale: float = 1.0) -> np.ndarray:
    """Paint each non-nontext segment's flattened (M*D) feature row onto every
    grid cell its rectangle covers; later segments overwrite earlier ones.
    `scale` maps segment pixel coordinates onto a coarser grid.

    Returns a channel-first (M*D, rows, cols) grid that is exactly zero
    outside the painted rectangles.
    """
    if f_nmd.ndim != 3 or f_nmd.shape[0] != len(segs):
        raise ShapeMismatch("transfer tensor %s for %d segments" % (f_nmd.shape, len(segs)))
    n, m, d = f_nmd.shape
    out = np.zeros((rows, cols, m * d))
    for k, seg in enumerate(segs):
        if seg.type == proposal.NONTEXT:
            continue
        r = seg.rect
        cx, cy = r.cx / scale, r.cy / scale
        h, w = r.h / scale, r.w / scale
        half = 0.5 * math.hypot(h, w)
        j0 = max(0, int(math.floor(cx - half - 0.5)))
        j1 = min(cols, int(math.ceil(cx + half + 0.5)))
        i0 = max(0, int(math.floor(cy - half - 0.5)))
        i1 = min(rows, int(math.ceil(cy + half + 0.5)))
        if j0 >= j1 or i0 >= i1:
            continue
        xs = np.arange(j0, j1) + 0.5 - cx
        ys = np.arange(i0, i1) + 0.5 - cy
        gx, gy = np.meshgrid(xs, ys)
        c, s = math.cos(r.theta), math.sin(r.theta)
        hit = (np.abs(gx * c + gy * s) <= w / 2 + 1e-9) & \
            (np.abs(-gx * s + gy * c) <= h / 2 + 1e-9)
        out[i0:i1, j0:j1][hit] = f_nmd[k].ravel()
    return out.transpose(2, 0, 1)


# ----------------- fusion decoding --------------------------------------------------------------


@dataclass
class FdStageWeights:
    cr_t: ConvBlock       # 1x1 on the transferred grid
    cbr_prev: ConvBlock   # on [UP(prev); CR(T)]
    cbr_enc: ConvBlock    # on [UP(enc); CR(T)]
    cbr_out: ConvBlock    # on [F'; inner]


@dataclass
class FdWeights:
    stages: list
    head_w: np.ndarray    # (1, C, 1, 1) GGTR head
    head_b: np.ndarray


@dataclass
class FdTensors:
    """Stand-in encoder/decoder grids at the stack's scales plus its outputs."""
    p1: np.ndarray
    c3: np.ndarray
    c4: np.ndarray
    t1: np.ndarray | None = None
    t2: np.ndarray | None = None
    f2: np.ndarray | None = None
    f3: np.ndarray | None = None
    ggtr: np.ndarray | None = None


# desk-scale channel plan (full-scale uses 64/128/256/512)
P1_CH, C3_CH, C4_CH, F2_CH, F3_CH = 64, 64, 48, 48, 32


def init_fd_weights(rng, t_channels: int) -> FdWeights:
    def blk(out_ch, in_ch, k, bn):
        w = rng.normal(0, math.sqrt(2.0 / (in_ch * k * k)), size=(out_ch, in_ch, k, k))
        return ConvBlock(w=w, b=np.zeros(out_ch),
                         gamma=np.ones(out_ch) if bn else None)

    stage1 = FdStageWeights(
        cr_t=blk(CR_CHANNELS, t_channels, 1, bn=False),
        cbr_prev=blk(F2_CH, P1_CH + CR_CHANNELS, 3, bn=True),
        cbr_enc=blk(F2_CH, C3_CH + CR_CHANNELS, 3, bn=True),
        cbr_out=blk(F2_CH, 2 * F2_CH, 3, bn=True),
    )
    stage2 = FdStageWeights(
        cr_t=blk(CR_CHANNELS, t_channels, 1, bn=False),
        cbr_prev=blk(F3_CH, F2_CH + CR_CHANNELS, 3, bn=True),
        cbr_enc=blk(F3_CH, C4_CH + CR_CHANNELS, 3, bn=True),
        cbr_out=blk(F3_CH, 2 * F3_CH, 3, bn=True),
    )
    head_w = rng.normal(0, math.sqrt(2.0 / F3_CH), size=(1, F3_CH, 1, 1))
    return FdWeights(stages=[stage1, stage2], head_w=head_w, head_b=np.zeros(1))


def fd_fuse(prev: np.ndarray, enc: np.ndarray, t: np.ndarray,
            stage: FdStageWeights) -> np.ndarray:
    """One decoding stage: F' = CBR([UP(prev); CR(T)]) fused with
    CBR([UP(enc); CR(T)]) through a final CBR; output spatial dims are twice
    the coarser input's."""
    up_prev = upsample2(prev)
    up_enc = upsample2(enc)
    if up_prev.shape[1:] != t.shape[1:] or up_enc.shape[1:] != t.shape[1:]:
        raise ShapeMismatch("stage dims prev %s enc %s t %s"
                            % (up_prev.shape, up_enc.shape, t.shape))
    t_feat = cr(t, stage.cr_t)
    f_prime = cbr(np.concatenate([up_prev, t_feat], axis=0), stage.cbr_prev)
    inner = cbr(np.concatenate([up_enc, t_feat], axis=0), stage.cbr_enc)
    return cbr(np.concatenate([f_prime, inner], axis=0), stage.cbr_out)


def ggtr_map(f3: np.ndarray, weights: FdWeights) -> np.ndarray:
    """1x1 convolution + logistic squashing of the final fused features."""
    logits = conv2d(f3, weights.head_w, weights.head_b)[0]
    return 1.0 / (1.0 + np.exp(-logits))


def make_fd_inputs(rng, rows: int, cols: int) -> FdTensors:
    """Random stand-in grids for the encoder/decoder inputs (the backbone is
    out of scope); rows and cols must be divisible by 16."""
    if rows % 16 or cols % 16:
        raise ShapeMismatch("FD inputs need dims divisible by 16, got %dx%d" % (rows, cols))
    return FdTensors(
        p1=rng.normal(0, 1, size=(P1_CH, rows // 16, cols // 16)),
        c3=rng.normal(0, 1, size=(C3_CH, rows // 16, cols // 16)),
        c4=rng.normal(0, 1, size=(C4_CH, rows // 8, cols // 8)),
    )


def fd_pipeline(inputs: FdTensors, t1: np.ndarray, t2: np.ndarray,
                weights: FdWeights) -> FdTensors:
    """Run both decoding stages and the GGTR head; fills f2/f3/ggtr."""
    f2 = fd_fuse(inputs.p1, inputs.c3, t1, weights.stages[0])
    f3 = fd_fuse(f2, inputs.c4, t2, weights.stages[1])
    return FdTensors(p1=inputs.p1, c3=inputs.c3, c4=inputs.c4, t1=t1, t2=t2,
                     f2=f2, f3=f3, ggtr=ggtr_map(f3, weights))


# ----------------- serialization ----------------------------------------------------------------


def write_channel_tmaps(prefix, grid: np.ndarray):
    """One TMAP file per channel, suffixed .c<k>."""
    paths = []
    for k in range(grid.shape[0]):
        path = "%s.c%d" % (prefix, k)
        scene.write_tmap(path, "channel%d" % k, grid[k])
        paths.append(path)
    return paths
