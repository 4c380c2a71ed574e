"""Command-line interface: synth / train / detect / eval / ablate / render."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import corpus, graph, harness, infer, proposal, scene
from .errors import SegtextError


def _scene_dirs(root):
    subs = sorted(d for d in os.listdir(root)
                  if os.path.isdir(os.path.join(root, d)))
    if not subs and os.path.exists(os.path.join(root, "truth.json")):
        return [root]
    return [os.path.join(root, d) for d in subs]


def cmd_synth(args):
    with open(args.spec) as f:
        doc = json.load(f)
    spec, fault = scene.scene_spec_from_dict(doc)
    truth = scene.generate_scene(spec)
    if fault is not None:
        maps, ggtr = scene.inject_faults(truth, fault)
    else:
        maps, ggtr = truth.maps, (truth.maps.tr > 0).astype(float)
    scene.write_scene_dir(args.out, truth, maps=maps, ggtr=ggtr)
    print("wrote scene to %s (%d instances, %d chars)"
          % (args.out, len(truth.instance_polygons), len(truth.chars)))
    return 0


def _load_truths(scenes_root):
    truths = []
    for d in _scene_dirs(scenes_root):
        maps, ggtr, doc = scene.read_scene_dir(d)
        truths.append((os.path.basename(d.rstrip("/")), scene.truth_from_dict(doc, maps), ggtr))
    if not truths:
        raise SegtextError("no scene directories under %s" % scenes_root)
    return truths


def cmd_train(args):
    truths = [t for _, t, _ in _load_truths(args.scenes)]
    cfg = graph.TrainConfig(iters=args.iters, seed=args.seed, lr=args.lr,
                            dim=args.dim, hidden=args.hidden,
                            weak_rounds=args.weak_rounds)
    (params, trace), _ = graph.train_on_truths(truths, cfg)
    graph.save_params(args.out, params)
    graph.save_loss_trace(args.out + ".loss.csv", trace)
    last = trace[-1] if trace else (0, float("nan"), float("nan"))
    print("trained %d iterations on %d scenes; final loss_link=%.6f loss_node=%.6f"
          % (len(trace), len(truths), last[1], last[2]))
    print("params -> %s" % args.out)
    return 0


def _detect_config(args) -> infer.DetectConfig:
    return infer.DetectConfig(
        fpns_node=not args.no_fpns_node,
        fpns_ggtr=not args.no_fpns_ggtr,
        sap=not args.baseline_routefind,
        tcl_op=args.tcl_op,
    )


def cmd_detect(args):
    params = graph.load_params(args.params)
    cfg = _detect_config(args)
    os.makedirs(args.out, exist_ok=True)
    n_poly = 0
    for name, truth, ggtr in _load_truths(args.scenes):
        maps = truth.maps
        if ggtr is None:
            ggtr = (maps.tr > 0).astype(float)
        res = infer.detect(maps, ggtr, params, cfg)
        infer.save_detection(os.path.join(args.out, name + ".det.json"), res)
        n_poly += len(res.kept_polygons())
    print("detected %d polygons over %d scenes -> %s"
          % (n_poly, len(_scene_dirs(args.scenes)), args.out))
    return 0


def cmd_eval(args):
    det_files = sorted(f for f in os.listdir(args.preds) if f.endswith(".det.json"))
    if not det_files:
        raise SegtextError("no .det.json files under %s" % args.preds)
    preds, truths = [], []
    for f in det_files:
        name = f[: -len(".det.json")]
        res = infer.load_detection(os.path.join(args.preds, f))
        preds.append(res.kept_polygons())
        tdir = os.path.join(args.truth, name)
        if not os.path.isdir(tdir):
            raise SegtextError("missing truth directory %s" % tdir)
        with open(os.path.join(tdir, "truth.json")) as fh:
            doc = json.load(fh)
        truths.append([np.array(d["polygon"], dtype=float) for d in doc["instances"]])
    rep = harness.evaluate(preds, truths, args.iou)
    print(json.dumps(harness.report_to_dict(rep)))
    print("scenes: %d   IoU >= %.2f" % (len(preds), args.iou))
    print("%-12s %8s" % ("metric", "value"))
    for k, v in (("precision", rep.precision), ("recall", rep.recall), ("f", rep.f)):
        print("%-12s %8.4f" % (k, v))
    print("%-12s %8d" % ("tp", rep.tp))
    print("%-12s %8d" % ("predictions", rep.n_pred))
    print("%-12s %8d" % ("truths", rep.n_truth))
    return 0


def cmd_ablate(args):
    items = corpus.build_fault_corpus(args.corpus_seed, args.n_scenes,
                                      rows=args.size, cols=args.size)
    if args.params:
        params = graph.load_params(args.params)
    else:
        truths = corpus.build_clean_corpus(args.train_seed, args.train_scenes)
        cfg = graph.TrainConfig(iters=args.train_iters, seed=0, weak_rounds=0)
        (params, _), _ = graph.train_on_truths(truths, cfg)
    rows = harness.run_ablation(items, params)
    rows += harness.run_width_sweep(items, params)
    csv_text = harness.ablation_csv(rows)
    with open(args.out, "w") as f:
        f.write(csv_text)
    fig_path = os.path.splitext(args.out)[0] + ".svg"
    from . import render

    render.render_ablation_figure(rows, fig_path)
    sys.stdout.write(csv_text)
    print("table -> %s   figure -> %s" % (args.out, fig_path))
    return 0


def cmd_render(args):
    maps, ggtr, doc = scene.read_scene_dir(args.scene)
    det = infer.load_detection(args.det) if args.det else None
    seg_path = args.segments
    segments = proposal.load_segments(seg_path) if seg_path else None
    truth_polys = [np.array(d["polygon"], dtype=float) for d in doc["instances"]]
    from . import render

    render.render_overlay(maps, detection=det, segments=segments,
                          truth_polygons=truth_polys, ggtr=ggtr,
                          out_path=args.out)
    print("overlay -> %s" % args.out)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="segtext",
                                 description="Bottom-up curved-text detection on synthetic scenes")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a scene spec into maps + truth")
    p.add_argument("--spec", required=True, help="scene spec JSON")
    p.add_argument("--out", required=True, help="output scene directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train graph reasoning on synth scenes")
    p.add_argument("--scenes", required=True, help="directory of scene directories")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=graph.TrainConfig.lr)
    p.add_argument("--dim", type=int, default=graph.TrainConfig.dim)
    p.add_argument("--hidden", type=int, default=graph.TrainConfig.hidden)
    p.add_argument("--weak-rounds", type=int, default=graph.TrainConfig.weak_rounds)
    p.add_argument("--out", required=True, help="output .gcnp params file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="run the detection pipeline")
    p.add_argument("--scenes", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--no-fpns-node", action="store_true")
    p.add_argument("--no-fpns-ggtr", action="store_true")
    p.add_argument("--baseline-routefind", action="store_true")
    p.add_argument("--tcl-op", choices=("union", "intersect"), default="union")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score detections against truth")
    p.add_argument("--preds", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="toggle matrix + width sweep over a fault corpus")
    p.add_argument("--corpus-seed", type=int, default=42)
    p.add_argument("--out", required=True, help="output CSV (figure saved alongside)")
    p.add_argument("--n-scenes", type=int, default=200)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--params", default=None, help="reuse trained params instead of training")
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--train-scenes", type=int, default=50)
    p.add_argument("--train-iters", type=int, default=500)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("render", help="matplotlib overlay of a scene and detections")
    p.add_argument("--scene", required=True)
    p.add_argument("--det", default=None)
    p.add_argument("--segments", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except SegtextError as e:
        print("error: %s: %s" % (type(e).__name__, e), file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print("error: %s: %s" % (type(e).__name__, e), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
