"""Polygon-level evaluation and the ablation runner."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grid, infer

DEFAULT_IOU = 0.5


@dataclass
class EvalReport:
    precision: float
    recall: float
    f: float
    tp: int
    n_pred: int
    n_truth: int
    matches: list = field(default_factory=list)  # per image: [(pred_i, truth_j, iou)]


def _match_image(preds, truths, iou_thr):
    """Greedy one-to-one matching by descending IoU; ties to lower indices."""
    cand = []
    for pi, p in enumerate(preds):
        for tj, t in enumerate(truths):
            iou = grid.polygon_iou(p, t)
            if iou >= iou_thr:
                cand.append((iou, pi, tj))
    cand.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_p, used_t = set(), set()
    out = []
    for iou, pi, tj in cand:
        if pi in used_p or tj in used_t:
            continue
        used_p.add(pi)
        used_t.add(tj)
        out.append((pi, tj, iou))
    return out


def evaluate(preds_per_image, truths_per_image, iou_thr: float = DEFAULT_IOU) -> EvalReport:
    """Corpus-level precision/recall/F at the IoU threshold.

    Zero predictions give P = 0 (pessimistic convention, consistent with F=0).
    """
    if len(preds_per_image) != len(truths_per_image):
        raise ValueError("got %d prediction lists for %d truth lists"
                         % (len(preds_per_image), len(truths_per_image)))
    tp = n_pred = n_truth = 0
    matches = []
    for preds, truths in zip(preds_per_image, truths_per_image):
        m = _match_image(preds, truths, iou_thr)
        matches.append(m)
        tp += len(m)
        n_pred += len(preds)
        n_truth += len(truths)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_truth if n_truth else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EvalReport(precision=precision, recall=recall, f=f, tp=tp,
                      n_pred=n_pred, n_truth=n_truth, matches=matches)


def report_to_dict(rep: EvalReport) -> dict:
    return {"precision": rep.precision, "recall": rep.recall, "f": rep.f,
            "tp": rep.tp, "n_pred": rep.n_pred, "n_truth": rep.n_truth}


# ----------------- ablations ---------------------------------------------------------------------


@dataclass
class AblationRow:
    name: str
    gcn: bool
    fpns_node: bool
    fpns_ggtr: bool
    sap: bool
    w_lo: int
    w_hi: int
    precision: float = 0.0
    recall: float = 0.0
    f: float = 0.0
    dp: float = 0.0
    dr: float = 0.0
    df: float = 0.0
    all_simple: bool = True
    self_intersections: int = 0


TABLE_ROWS = [
    ("gcn", True, False, False, False),
    ("gcn+node", True, True, False, False),
    ("gcn+ggtr", True, False, True, False),
    ("gcn+sap", True, False, False, True),
    ("gcn+node+ggtr", True, True, True, False),
    ("ggtr+sap (no gcn)", False, False, True, True),
    ("full", True, True, True, True),
]

WIDTH_BANDS = [(1, 3), (2, 6), (8, 12), (16, 24)]


def run_detect_corpus(items, params, cfg: infer.DetectConfig):
    """Detect over corpus items [(truth, maps, ggtr, fault)]; returns
    (per-image kept polygons, per-image truth polygons, stats)."""
    preds, truths = [], []
    all_simple = True
    n_self = 0
    for truth, maps, ggtr, _ in items:
        res = infer.detect(maps, ggtr, params, cfg)
        kept = res.kept_polygons()
        for p in kept:
            if not grid.is_simple(p):
                all_simple = False
                n_self += 1
        preds.append(kept)
        truths.append([ip.points for ip in truth.instance_polygons])
    return preds, truths, {"all_simple": all_simple, "self_intersections": n_self}


def _row_config(gcn, node, ggtr, sap, w_lo=2, w_hi=6) -> infer.DetectConfig:
    return infer.DetectConfig(fpns_node=node, fpns_ggtr=ggtr, sap=sap,
                              use_gcn=gcn, w_lo=w_lo, w_hi=w_hi)


def run_ablation(items, params, rows=None, iou_thr: float = DEFAULT_IOU):
    """One evaluation per toggle row plus deltas against the first (baseline)
    row; the baseline keeps GCN grouping but disables both suppression stages
    and uses the route-finding contour."""
    rows = rows if rows is not None else TABLE_ROWS
    out = []
    for name, gcn, node, ggtr, sap in rows:
        cfg = _row_config(gcn, node, ggtr, sap)
        preds, truths, stats = run_detect_corpus(items, params, cfg)
        rep = evaluate(preds, truths, iou_thr)
        out.append(AblationRow(name=name, gcn=gcn, fpns_node=node, fpns_ggtr=ggtr,
                               sap=sap, w_lo=2, w_hi=6, precision=rep.precision,
                               recall=rep.recall, f=rep.f,
                               all_simple=stats["all_simple"],
                               self_intersections=stats["self_intersections"]))
    base = out[0]
    for row in out:
        row.dp = row.precision - base.precision
        row.dr = row.recall - base.recall
        row.df = row.f - base.f
    return out


def run_width_sweep(items, params, bands=None, iou_thr: float = DEFAULT_IOU):
    """Full-pipeline rows re-proposing segments at each width band."""
    bands = bands if bands is not None else WIDTH_BANDS
    out = []
    for lo, hi in bands:
        cfg = _row_config(True, True, True, True, w_lo=lo, w_hi=hi)
        preds, truths, stats = run_detect_corpus(items, params, cfg)
        rep = evaluate(preds, truths, iou_thr)
        out.append(AblationRow(name="width %d-%d" % (lo, hi), gcn=True, fpns_node=True,
                               fpns_ggtr=True, sap=True, w_lo=lo, w_hi=hi,
                               precision=rep.precision, recall=rep.recall, f=rep.f,
                               all_simple=stats["all_simple"],
                               self_intersections=stats["self_intersections"]))
    if out:
        base = out[0]
        for row in out:
            row.dp = row.precision - base.precision
            row.dr = row.recall - base.recall
            row.df = row.f - base.f
    return out


def ablation_csv(rows) -> str:
    header = ("name,gcn,fpns_node,fpns_ggtr,sap,w_lo,w_hi,"
              "precision,recall,f,dP,dR,dF,all_simple,self_intersections")
    lines = [header]
    for r in rows:
        lines.append("%s,%d,%d,%d,%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%d" % (
            r.name.replace(",", ";"), r.gcn, r.fpns_node, r.fpns_ggtr, r.sap,
            r.w_lo, r.w_hi, r.precision, r.recall, r.f, r.dp, r.dr, r.df,
            r.all_simple, r.self_intersections))
    return "\n".join(lines) + "\n"
