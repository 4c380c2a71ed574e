"""Segment graphs and their reasoning heads.

Builds the pivot-centric neighbor graph over text segments, runs a small
dense graph-convolution stack with a link-prediction head (pairwise MLP with
PReLU) and a node-typing head (neighborhood mean, affine, ReLU, softmax),
and trains both with full-batch gradient descent using hand-written
backpropagation.  A central-difference gradient check guards the analytic
gradients.

All math is float64 numpy; forward passes are pure functions of
(params, data) so training runs are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import proposal
from .errors import Divergence, NoLabeledNodes, ShapeMismatch

EPS_PROB = 1e-7
CLASSES = (proposal.CHAR, proposal.INTERVAL, proposal.NONTEXT)
ONE_HOP = 8
TWO_HOP = 4
TOP_LINK = 3


# ----------------- graph construction -----------------------------------------------------------


@dataclass
class SegmentGraph:
    n: int
    centers: np.ndarray
    onehop: list          # per pivot: neighbor ids sorted by (distance, index)
    twohop: list          # per pivot: per 1-hop node, its TWO_HOP closest (pivot excluded)
    adj: np.ndarray       # binary, symmetric, zero diagonal
    adj_norm: np.ndarray  # D^-1/2 (adj + I) D^-1/2
    pairs: np.ndarray     # (P, 2) int: candidate (pivot, 1-hop neighbor)


def renormalized_adjacency(adj: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2, computed elementwise so it is exactly symmetric."""
    a_tilde = adj + np.eye(adj.shape[0])
    d = a_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]


def build_graph(segs) -> SegmentGraph:
    """Pivot graph: 8 closest segments as 1-hop nodes, then each 1-hop node's 4
    closest (excluding the pivot) as 2-hop nodes; ties broken by lower index."""
    n = len(segs)
    if n == 0:
        raise ValueError("build_graph needs at least one segment")
    centers = np.array([[s.cx, s.cy] for s in segs])
    diff = centers[:, None, :] - centers[None, :, :]
    d2 = (diff ** 2).sum(axis=2)
    idx = np.arange(n)
    order = [np.lexsort((idx, d2[p]))[1:] for p in range(n)]  # drop self at rank 0

    onehop = [list(map(int, order[p][:ONE_HOP])) for p in range(n)]
    twohop = []
    adj = np.zeros((n, n))
    pairs = []
    for p in range(n):
        two_p = []
        for u in onehop[p]:
            adj[p, u] = adj[u, p] = 1.0
            pairs.append((p, u))
            two_u = [int(w) for w in order[u] if w != p][:TWO_HOP]
            two_p.append(two_u)
            for w in two_u:
                adj[u, w] = adj[w, u] = 1.0
        twohop.append(two_p)
    pairs = np.array(pairs, dtype=int) if pairs else np.zeros((0, 2), dtype=int)
    return SegmentGraph(n=n, centers=centers, onehop=onehop, twohop=twohop,
                        adj=adj, adj_norm=renormalized_adjacency(adj), pairs=pairs)


def link_labels(segs, graph: SegmentGraph) -> np.ndarray:
    """Ground-truth link per candidate pair: 1 iff the neighbor is among the
    pivot's 3 closest segments and both carry the same instance id."""
    r = np.zeros(len(graph.pairs))
    top3 = [set(graph.onehop[p][:TOP_LINK]) for p in range(graph.n)]
    for k, (p, u) in enumerate(graph.pairs):
        sp, su = segs[p], segs[u]
        if u in top3[p] and sp.instance is not None and sp.instance == su.instance:
            r[k] = 1.0
    return r


# wavelengths of the sinusoidal position code; the fine scale resolves
# neighbor offsets (a few px), the coarse one disambiguates across a word
POS_WAVELENGTHS = (24.0, 96.0)
FEATURE_DIM = 9 + 4 * len(POS_WAVELENGTHS)


def node_features(segs, maps) -> np.ndarray:
    """Per-segment feature rows: normalized geometry, orientation, pooled map
    statistics standing in for backbone visual features, and a bounded
    two-scale sinusoidal position code.

    Raw normalized coordinates leave neighbor offsets at 1e-2 scale, which
    full-batch gradient descent cannot amplify within the iteration budget;
    the sin/cos code keeps values in [-1, 1] while making nearby-pair phase
    differences O(1).
    """
    rows, cols = maps.shape
    n = len(segs)
    feats = np.zeros((n, FEATURE_DIM))
    centers = np.array([[s.cx, s.cy] for s in segs]) if n else np.zeros((0, 2))
    for k, s in enumerate(segs):
        r = s.rect
        d = centers - [r.cx, r.cy]
        radius = 2.0 * r.h
        # dense chains put tens of centers inside the 2h disk; /64 keeps it O(1)
        density = (np.count_nonzero((d[:, 0] ** 2 + d[:, 1] ** 2) <= radius ** 2) - 1) / 64.0
        row = [
            r.cx / cols, r.cy / rows, r.h / rows, r.w / rows,
            math.sin(r.theta), math.cos(r.theta),
            proposal.rect_map_mean(maps.tcl, r),
            proposal.rect_map_mean(maps.h, r) / rows,
            density,
        ]
        for lam in POS_WAVELENGTHS:
            w = 2.0 * math.pi / lam
            row += [math.sin(w * r.cx), math.cos(w * r.cx),
                    math.sin(w * r.cy), math.cos(w * r.cy)]
        feats[k] = row
    return feats


def neighborhood_matrix(graph: SegmentGraph, include_self: bool = True) -> np.ndarray:
    """Row-normalized aggregation over each node's graph neighbors; isolated
    nodes fall back to themselves."""
    m = graph.adj.copy()
    if include_self:
        m = m + np.eye(graph.n)
    deg = m.sum(axis=1)
    empty = deg == 0
    if empty.any():
        m[empty, empty] = 1.0
        deg = m.sum(axis=1)
    return m / deg[:, None]


# ----------------- parameters -------------------------------------------------------------------


@dataclass
class GcnParams:
    we: np.ndarray            # (in_dim, dim) embedding
    conv: list                # per layer (2*dim, dim)
    link_m1: np.ndarray       # (2*dim, hidden)
    link_c1: np.ndarray       # (hidden,)
    link_alpha: float         # PReLU slope
    link_m2: np.ndarray       # (hidden, 2)
    link_c2: np.ndarray       # (2,)
    node_w: np.ndarray        # (dim, 3)
    node_b: np.ndarray        # (3,)
    activations: tuple = ("relu", "relu")
    include_self: bool = True

    def copy(self) -> "GcnParams":
        return GcnParams(
            we=self.we.copy(), conv=[w.copy() for w in self.conv],
            link_m1=self.link_m1.copy(), link_c1=self.link_c1.copy(),
            link_alpha=float(self.link_alpha),
            link_m2=self.link_m2.copy(), link_c2=self.link_c2.copy(),
            node_w=self.node_w.copy(), node_b=self.node_b.copy(),
            activations=tuple(self.activations), include_self=self.include_self)

    def tensors(self):
        """Name -> array view pairs covering every trainable tensor."""
        out = [("we", self.we)]
        for i, w in enumerate(self.conv):
            out.append(("conv%d" % i, w))
        out += [("link_m1", self.link_m1), ("link_c1", self.link_c1),
                ("link_m2", self.link_m2), ("link_c2", self.link_c2),
                ("node_w", self.node_w), ("node_b", self.node_b)]
        return out


def init_params(rng, in_dim: int = FEATURE_DIM, dim: int = 32, hidden: int = 32, layers: int = 2,
                activations=None, include_self: bool = True) -> GcnParams:
    def he(fan_in, shape):
        return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)

    if activations is None:
        activations = tuple(["relu"] * layers)
    return GcnParams(
        we=he(in_dim, (in_dim, dim)),
        conv=[he(2 * dim, (2 * dim, dim)) for _ in range(layers)],
        link_m1=he(2 * dim, (2 * dim, hidden)),
        link_c1=np.zeros(hidden),
        link_alpha=0.25,
        link_m2=he(hidden, (hidden, 2)) / 3.0,  # start near-uniform predictions
        link_c2=np.zeros(2),
        node_w=he(dim, (dim, 3)) / 3.0,
        # positive bias keeps the ReLU-before-softmax head out of its flat
        # all-zero region at initialization
        node_b=np.full(3, 0.1),
        activations=tuple(activations),
        include_self=include_self,
    )


def _act(x, kind):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "identity":
        return x
    raise ValueError("unknown activation %r" % kind)


def _act_grad(x, kind):
    if kind == "relu":
        return (x > 0).astype(float)
    if kind == "identity":
        return np.ones_like(x)
    raise ValueError("unknown activation %r" % kind)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ----------------- forward passes ---------------------------------------------------------------


def gcn_forward(feats: np.ndarray, adj_norm: np.ndarray, params: GcnParams):
    """Per-layer features [H0, H1, ..., HL]; H0 is the embedded input and each
    layer applies act([H ; adj_norm @ H] @ W)."""
    if feats.shape[1] != params.we.shape[0]:
        raise ShapeMismatch("features %s vs embedding %s" % (feats.shape, params.we.shape))
    if adj_norm.shape != (feats.shape[0], feats.shape[0]):
        raise ShapeMismatch("adjacency %s for %d nodes" % (adj_norm.shape, feats.shape[0]))
    hs = [feats @ params.we]
    for i, w in enumerate(params.conv):
        h = hs[-1]
        z = np.concatenate([h, adj_norm @ h], axis=1)
        if z.shape[1] != w.shape[0]:
            raise ShapeMismatch("layer %d: %s @ %s" % (i, z.shape, w.shape))
        hs.append(_act(z @ w, params.activations[i]))
    return hs


@dataclass
class LinkPrediction:
    pairs: np.ndarray
    probs: np.ndarray      # (P, 2) softmax rows
    r_hat: np.ndarray      # probs[:, 1]
    r: np.ndarray | None = None


@dataclass
class NodeClassification:
    probs: np.ndarray      # (N, 3) over (char, interval, nontext)


def predict_links(h_final: np.ndarray, pairs: np.ndarray, params: GcnParams,
                  r: np.ndarray | None = None) -> LinkPrediction:
    if len(pairs) == 0:
        return LinkPrediction(pairs=pairs, probs=np.zeros((0, 2)), r_hat=np.zeros(0), r=r)
    xp = np.concatenate([h_final[pairs[:, 0]], h_final[pairs[:, 1]]], axis=1)
    b1 = xp @ params.link_m1 + params.link_c1
    g1 = np.where(b1 > 0, b1, params.link_alpha * b1)
    probs = _softmax(g1 @ params.link_m2 + params.link_c2)
    return LinkPrediction(pairs=pairs, probs=probs, r_hat=probs[:, 1], r=r)


def classify_nodes(h_final: np.ndarray, graph: SegmentGraph,
                   params: GcnParams) -> NodeClassification:
    nbhd = neighborhood_matrix(graph, params.include_self)
    logits = np.maximum((nbhd @ h_final) @ params.node_w + params.node_b, 0.0)
    return NodeClassification(probs=_softmax(logits))


# ----------------- losses -----------------------------------------------------------------------


def loss_link(r_hat: np.ndarray, r: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clamped to [eps, 1-eps]."""
    p = np.clip(r_hat, EPS_PROB, 1.0 - EPS_PROB)
    q = np.clip(1.0 - r_hat, EPS_PROB, 1.0 - EPS_PROB)
    return float(np.mean(-r * np.log(p) - (1.0 - r) * np.log(q)))


def loss_node(probs: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy over labeled nodes (y >= 0); unlabeled nodes (y < 0)
    contribute nothing.  Raises NoLabeledNodes when nothing is labeled."""
    labeled = np.nonzero(y >= 0)[0]
    if labeled.size == 0:
        raise NoLabeledNodes("all nodes unlabeled")
    picked = np.clip(probs[labeled, y[labeled]], EPS_PROB, 1.0)
    return float(np.mean(-np.log(picked)))


# ----------------- training data ----------------------------------------------------------------


@dataclass
class SceneData:
    feats: np.ndarray      # (N, 9)
    adj_norm: np.ndarray
    nbhd: np.ndarray
    pairs: np.ndarray
    r: np.ndarray
    y: np.ndarray          # class index per node, -1 unlabeled
    graph: SegmentGraph = None
    segs: list = None


def labels_to_y(types) -> np.ndarray:
    lut = {c: k for k, c in enumerate(CLASSES)}
    return np.array([lut.get(t, -1) for t in types], dtype=int)


def prepare_scene_data(truth, rng, include_self: bool = True,
                       tcl_thr: float = 0.5) -> SceneData:
    """Propose, annotate and graph one scene into training arrays."""
    segs = proposal.propose_segments(truth.maps, tcl_thr)
    segs, labels = proposal.annotate_segments(segs, truth, rng)
    graph = build_graph(segs)
    return SceneData(
        feats=node_features(segs, truth.maps),
        adj_norm=graph.adj_norm,
        nbhd=neighborhood_matrix(graph, include_self),
        pairs=graph.pairs,
        r=link_labels(segs, graph),
        y=labels_to_y(labels.types),
        graph=graph,
        segs=segs,
    )


# ----------------- forward + analytic backward --------------------------------------------------


def _forward_cache(params: GcnParams, data: SceneData):
    hs = [data.feats @ params.we]
    zs, pre = [], []
    for i, w in enumerate(params.conv):
        h = hs[-1]
        z = np.concatenate([h, data.adj_norm @ h], axis=1)
        a = z @ w
        zs.append(z)
        pre.append(a)
        hs.append(_act(a, params.activations[i]))
    hf = hs[-1]

    cache = {"hs": hs, "zs": zs, "pre": pre}
    if len(data.pairs):
        xp = np.concatenate([hf[data.pairs[:, 0]], hf[data.pairs[:, 1]]], axis=1)
        b1 = xp @ params.link_m1 + params.link_c1
        g1 = np.where(b1 > 0, b1, params.link_alpha * b1)
        b2 = g1 @ params.link_m2 + params.link_c2
        probs2 = _softmax(b2)
        ll = loss_link(probs2[:, 1], data.r)
        cache.update(xp=xp, b1=b1, g1=g1, probs2=probs2)
    else:
        ll = 0.0
        cache.update(xp=None)

    pooled = data.nbhd @ hf
    cn = pooled @ params.node_w + params.node_b
    fn = np.maximum(cn, 0.0)
    qn = _softmax(fn)
    ln = loss_node(qn, data.y)
    cache.update(pooled=pooled, cn=cn, qn=qn)
    return ll, ln, cache


def scene_losses(params: GcnParams, data: SceneData):
    ll, ln, _ = _forward_cache(params, data)
    return ll, ln


def _zero_grads(params: GcnParams):
    g = {name: np.zeros_like(t) for name, t in params.tensors()}
    g["link_alpha"] = 0.0
    return g


def _backward(params: GcnParams, data: SceneData, cache):
    """Gradients of loss_link + loss_node wrt every parameter tensor.

    The clamp in the losses is honored: contributions from probabilities in
    the clamped (flat) region are zeroed, so the analytic gradient matches
    central differences of the actual loss everywhere.
    """
    g = _zero_grads(params)
    hs, zs, pre = cache["hs"], cache["zs"], cache["pre"]
    hf = hs[-1]
    d_hf = np.zeros_like(hf)

    if cache["xp"] is not None:
        probs2 = cache["probs2"]
        p = probs2[:, 1]
        n_pairs = len(p)
        active_p = (p >= EPS_PROB) & (p <= 1.0 - EPS_PROB)
        q = 1.0 - p
        active_q = (q >= EPS_PROB) & (q <= 1.0 - EPS_PROB)
        pc = np.clip(p, EPS_PROB, 1.0 - EPS_PROB)
        qc = np.clip(q, EPS_PROB, 1.0 - EPS_PROB)
        dl_dp = (-data.r / pc * active_p + (1.0 - data.r) / qc * active_q) / n_pairs
        s = dl_dp * p * probs2[:, 0]  # chain through the 2-way softmax
        d_b2 = np.stack([-s, s], axis=1)

        g1, b1, xp = cache["g1"], cache["b1"], cache["xp"]
        g["link_m2"] += g1.T @ d_b2
        g["link_c2"] += d_b2.sum(axis=0)
        d_g1 = d_b2 @ params.link_m2.T
        g["link_alpha"] += float((d_g1 * np.where(b1 > 0, 0.0, b1)).sum())
        d_b1 = d_g1 * np.where(b1 > 0, 1.0, params.link_alpha)
        g["link_m1"] += xp.T @ d_b1
        g["link_c1"] += d_b1.sum(axis=0)
        d_xp = d_b1 @ params.link_m1.T
        dim = hf.shape[1]
        np.add.at(d_hf, data.pairs[:, 0], d_xp[:, :dim])
        np.add.at(d_hf, data.pairs[:, 1], d_xp[:, dim:])

    qn, cn, pooled = cache["qn"], cache["cn"], cache["pooled"]
    labeled = np.nonzero(data.y >= 0)[0]
    picked = qn[labeled, data.y[labeled]]
    active = picked >= EPS_PROB  # upper clip at 1.0 is never flat for softmax
    d_fn = np.zeros_like(qn)
    coeff = active / len(labeled)
    oh = np.zeros_like(qn[labeled])
    oh[np.arange(len(labeled)), data.y[labeled]] = 1.0
    d_fn[labeled] = coeff[:, None] * (qn[labeled] - oh)
    d_cn = d_fn * (cn > 0)
    g["node_w"] += pooled.T @ d_cn
    g["node_b"] += d_cn.sum(axis=0)
    d_hf += data.nbhd.T @ (d_cn @ params.node_w.T)

    d_h = d_hf
    for i in range(len(params.conv) - 1, -1, -1):
        d_a = d_h * _act_grad(pre[i], params.activations[i])
        g["conv%d" % i] += zs[i].T @ d_a
        d_z = d_a @ params.conv[i].T
        dim = hs[i].shape[1]
        d_h = d_z[:, :dim] + data.adj_norm.T @ d_z[:, dim:]
    g["we"] += data.feats.T @ d_h
    return g


def scene_gradients(params: GcnParams, data: SceneData):
    ll, ln, cache = _forward_cache(params, data)
    return ll, ln, _backward(params, data, cache)


# ----------------- gradient check ---------------------------------------------------------------


def _param_views(params: GcnParams):
    views = list(params.tensors())
    return views


def grad_check(params: GcnParams, data: SceneData, step: float = 1e-5) -> float:
    """Max error between analytic gradients and central finite differences of
    loss_link + loss_node over every parameter tensor, measured relative to
    the largest gradient magnitude across all tensors.

    The global normalization keeps the check meaningful on near-zero
    components, where the finite-difference roundoff floor (~1e-10 here)
    would otherwise dominate any elementwise ratio.
    """
    _, _, grads = scene_gradients(params, data)

    def total():
        ll, ln = scene_losses(params, data)
        return ll + ln

    max_diff = 0.0
    scale = abs(grads["link_alpha"])
    for name, tensor in _param_views(params):
        flat = tensor.reshape(-1)
        g_flat = grads[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = total()
            flat[k] = orig - step
            dn = total()
            flat[k] = orig
            fd = (up - dn) / (2.0 * step)
            max_diff = max(max_diff, abs(g_flat[k] - fd))
            scale = max(scale, abs(g_flat[k]), abs(fd))
    # PReLU slope is a scalar, handled outside the tensor views.
    orig = params.link_alpha
    params.link_alpha = orig + step
    up = total()
    params.link_alpha = orig - step
    dn = total()
    params.link_alpha = orig
    fd = (up - dn) / (2.0 * step)
    max_diff = max(max_diff, abs(grads["link_alpha"] - fd))
    scale = max(scale, abs(fd))
    return max_diff / max(scale, 1e-8)


# ----------------- training ---------------------------------------------------------------------


@dataclass
class TrainConfig:
    iters: int = 500
    lr: float = 0.05
    seed: int = 0
    dim: int = 32
    hidden: int = 32
    layers: int = 2
    weak_rounds: int = 1
    include_self: bool = True


def train_gcn(datas, cfg: TrainConfig, params: GcnParams | None = None,
              iters: int | None = None):
    """Full-batch gradient descent on mean(loss_link + loss_node) over scenes.

    Returns (params, trace) where trace rows are (iter, loss_link, loss_node).
    Raises Divergence when the loss stops being finite.
    """
    if params is None:
        rng = np.random.default_rng(cfg.seed)
        params = init_params(rng, dim=cfg.dim, hidden=cfg.hidden, layers=cfg.layers,
                             include_self=cfg.include_self)
    else:
        params = params.copy()
    n_iter = cfg.iters if iters is None else iters
    trace = []
    for it in range(n_iter):
        acc = _zero_grads(params)
        ll_sum = ln_sum = 0.0
        for data in datas:
            ll, ln, g = scene_gradients(params, data)
            ll_sum += ll
            ln_sum += ln
            for name in acc:
                acc[name] = acc[name] + g[name]
        n = len(datas)
        ll_mean, ln_mean = ll_sum / n, ln_sum / n
        if not (math.isfinite(ll_mean) and math.isfinite(ln_mean)):
            raise Divergence("non-finite loss at iteration %d" % it)
        trace.append((it, ll_mean, ln_mean))
        for name, tensor in params.tensors():
            tensor -= cfg.lr * (acc[name] / n)
        params.link_alpha -= cfg.lr * (acc["link_alpha"] / n)
    return params, trace


def train_on_truths(truths, cfg: TrainConfig):
    """Annotate scenes, train, optionally run weak predict-filter rounds that
    upgrade unlabeled segments whose filtered predictions survive the
    text-region rule, then continue training on the augmented labels."""
    rng = np.random.default_rng(cfg.seed + 101)
    datas = [prepare_scene_data(t, rng, include_self=cfg.include_self) for t in truths]
    rounds = max(0, cfg.weak_rounds)
    if rounds == 0:
        return train_gcn(datas, cfg), datas

    phase = max(1, cfg.iters // (rounds + 1))
    params, trace = train_gcn(datas, cfg, iters=phase)
    done = phase
    for _ in range(rounds):
        for data, truth in zip(datas, truths):
            hs = gcn_forward(data.feats, data.adj_norm, params)
            pred = classify_nodes(hs[-1], data.graph, params)
            pred_types = [CLASSES[k] for k in np.argmax(pred.probs, axis=1)]
            filt = proposal.weak_label_filter(data.segs, pred_types, truth.maps.tr > 0)
            for k in range(len(data.segs)):
                if data.y[k] < 0 and filt.accepted[k]:
                    data.y[k] = CLASSES.index(filt.types[k])
        remaining = max(1, (cfg.iters - done) // rounds)
        params, t2 = train_gcn(datas, cfg, params=params, iters=remaining)
        trace += [(done + i, a, b) for i, a, b in t2]
        done += remaining
    return (params, trace), datas


def link_accuracy(params: GcnParams, datas) -> float:
    hits = total = 0
    for data in datas:
        if not len(data.pairs):
            continue
        hs = gcn_forward(data.feats, data.adj_norm, params)
        pred = predict_links(hs[-1], data.pairs, params)
        hits += int(np.count_nonzero((pred.r_hat >= 0.5) == (data.r > 0.5)))
        total += len(data.pairs)
    return hits / total if total else 0.0


def nontext_recall(params: GcnParams, datas) -> float:
    hits = total = 0
    k_non = CLASSES.index(proposal.NONTEXT)
    for data in datas:
        hs = gcn_forward(data.feats, data.adj_norm, params)
        pred = classify_nodes(hs[-1], data.graph, params)
        truth_non = np.nonzero(data.y == k_non)[0]
        total += truth_non.size
        hits += int(np.count_nonzero(np.argmax(pred.probs[truth_non], axis=1) == k_non))
    return hits / total if total else 0.0


# ----------------- serialization ----------------------------------------------------------------


def save_params(path, params: GcnParams):
    """GCNP v1: `TENSOR <name> <d0> <d1>` headers followed by row-major floats."""
    def block(f, name, arr):
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        if arr.shape[0] == 1 and arr.shape[1] > 1:
            arr = arr.T
        f.write("TENSOR %s %d %d\n" % (name, arr.shape[0], arr.shape[1]))
        for row in arr:
            f.write(" ".join(repr(float(v)) for v in row))
            f.write("\n")

    with open(path, "w") as f:
        block(f, "we", params.we)
        for i, w in enumerate(params.conv):
            block(f, "conv%d" % i, w)
        block(f, "link_m1", params.link_m1)
        block(f, "link_c1", params.link_c1)
        block(f, "link_alpha", np.array([[params.link_alpha]]))
        block(f, "link_m2", params.link_m2)
        block(f, "link_c2", params.link_c2)
        block(f, "node_w", params.node_w)
        block(f, "node_b", params.node_b)
        acts = np.array([[1.0 if a == "relu" else 0.0] for a in params.activations])
        block(f, "activations", acts)
        block(f, "include_self", np.array([[1.0 if params.include_self else 0.0]]))


def load_params(path) -> GcnParams:
    tensors = {}
    order = []
    with open(path) as f:
        line = f.readline()
        while line:
            head = line.split()
            if len(head) != 4 or head[0] != "TENSOR":
                raise ValueError("bad GCNP header: %r" % line)
            name, d0, d1 = head[1], int(head[2]), int(head[3])
            rows = [f.readline().split() for _ in range(d0)]
            tensors[name] = np.array(rows, dtype=float).reshape(d0, d1)
            order.append(name)
            line = f.readline()
    conv = []
    i = 0
    while "conv%d" % i in tensors:
        conv.append(tensors["conv%d" % i])
        i += 1
    acts = tuple("relu" if v > 0.5 else "identity" for v in tensors["activations"][:, 0])
    return GcnParams(
        we=tensors["we"], conv=conv,
        link_m1=tensors["link_m1"], link_c1=tensors["link_c1"][:, 0],
        link_alpha=float(tensors["link_alpha"][0, 0]),
        link_m2=tensors["link_m2"], link_c2=tensors["link_c2"][:, 0],
        node_w=tensors["node_w"], node_b=tensors["node_b"][:, 0],
        activations=acts,
        include_self=bool(tensors["include_self"][0, 0] > 0.5),
    )


def save_loss_trace(path, trace):
    with open(path, "w") as f:
        f.write("iter,loss_link,loss_node\n")
        for it, ll, ln in trace:
            f.write("%d,%r,%r\n" % (it, ll, ln))
