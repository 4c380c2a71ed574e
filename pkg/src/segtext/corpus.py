"""Seeded scene corpora for training, evaluation and ablations.

Layouts are rejection-sampled: each instance proposes spine parameters, is
probed for canvas fit and overlap against already accepted instances, and is
retried with fresh draws when it collides.  Everything derives from one
master seed.
"""

from __future__ import annotations

import math

import numpy as np

from . import scene
from .errors import SpecOverflow
from .scene import FaultSpec, SceneSpec, SpineSpec

FAMILIES = ("line", "arc", "sine", "spiral")


def _instance_need(inst: SpineSpec) -> float:
    """Worst-case spine length the chars may require (word gaps included)."""
    gap = max(inst.char_gap, inst.word_gap)
    return inst.chars * inst.char_w + (inst.chars - 1) * gap + 2 * scene.END_PAD + 2


def _propose_instance(rng, rows, cols, family) -> SpineSpec | None:
    chars = int(rng.integers(4, 8))
    char_h = float(rng.uniform(14, 20))
    char_w = float(rng.uniform(7, 10))
    char_gap = float(rng.uniform(2, 4))
    word_gap = float(char_gap + rng.uniform(2, 3)) if rng.random() < 0.6 else 0.0
    inst = SpineSpec(family, {}, chars, char_h, char_w, char_gap, word_gap)
    need = _instance_need(inst) + 6
    margin = char_h / 2 + scene.BAND_PAD + 3

    if family == "line":
        ang = float(rng.uniform(-0.45, 0.45)) + (math.pi / 2 if rng.random() < 0.15 else 0.0)
        dx, dy = need * math.cos(ang), need * math.sin(ang)
        x0 = float(rng.uniform(margin + max(0, -dx), cols - margin - max(0, dx)))
        y0 = float(rng.uniform(margin + max(0, -dy), rows - margin - max(0, dy)))
        inst.params = {"x0": x0, "y0": y0, "angle": ang, "length": need}
    elif family == "sine":
        amp = float(rng.uniform(10, 28))
        inst.params = {
            "x0": float(rng.uniform(margin, cols - margin - need * 0.98)),
            "y0": float(rng.uniform(margin + amp, rows - margin - amp)),
            "length": need * 0.98, "amplitude": amp,
            "period": float(rng.uniform(need * 0.7, need * 1.6)),
            "phase": float(rng.uniform(0, 2 * math.pi)),
        }
    elif family == "arc":
        radius = float(rng.uniform(max(30.0, need / 2.5), need * 1.2))
        span = need / radius
        a0 = float(rng.uniform(0, 2 * math.pi))
        cx = float(rng.uniform(margin + radius, cols - margin - radius))
        cy = float(rng.uniform(margin + radius, rows - margin - radius))
        inst.params = {"cx": cx, "cy": cy, "radius": radius, "a0": a0, "a1": a0 + span}
    else:  # spiral
        pitch = char_h + float(rng.uniform(4, 8))
        turns = float(rng.uniform(1.1, 1.6))
        span = 2 * math.pi * turns
        mean_r = max(need / span, pitch * turns / 2 + 10)
        r0 = mean_r - pitch * turns / 2
        r1 = r0 + pitch * turns
        if r1 + margin * 2 > min(rows, cols) / 2 - 4:
            return None
        cx = float(rng.uniform(r1 + margin, cols - r1 - margin))
        cy = float(rng.uniform(r1 + margin, rows - r1 - margin))
        a0 = float(rng.uniform(0, 2 * math.pi))
        inst.params = {"cx": cx, "cy": cy, "r0": r0, "r1": r1, "a0": a0, "a1": a0 + span}
    return inst


def _probe_bbox(inst: SpineSpec, rows, cols):
    """Approximate instance footprint; None when it will not fit."""
    try:
        sp = scene.sample_spine(inst.family, inst.params, step=2.0)
    except Exception:
        return None
    if sp.length < _instance_need(inst):
        return None
    pad = inst.char_h / 2 + scene.BAND_PAD + 1
    lo = sp.pts.min(axis=0) - pad
    hi = sp.pts.max(axis=0) + pad
    if lo[0] < 1 or lo[1] < 1 or hi[0] > cols - 1 or hi[1] > rows - 1:
        return None
    return lo[0], lo[1], hi[0], hi[1]


def _boxes_overlap(a, b, gap=6.0):
    return not (a[2] + gap < b[0] or b[2] + gap < a[0]
                or a[3] + gap < b[1] or b[3] + gap < a[1])


def make_scene_spec(rng, rows=256, cols=256, n_instances=None,
                    force_spiral=False) -> SceneSpec:
    if n_instances is None:
        n_instances = int(rng.integers(1, 4))
    instances = []
    boxes = []
    want = list(FAMILIES)
    for k in range(n_instances):
        if force_spiral and k == 0:
            fam = "spiral"
        else:
            fam = want[int(rng.integers(0, len(want)))]
        placed = False
        for _ in range(60):
            inst = _propose_instance(rng, rows, cols, fam)
            if inst is None:
                fam = "sine"
                continue
            box = _probe_bbox(inst, rows, cols)
            if box is None:
                continue
            if any(_boxes_overlap(box, b) for b in boxes):
                continue
            instances.append(inst)
            boxes.append(box)
            placed = True
            break
        if not placed and k == 0:
            # always deliver at least one instance
            inst = SpineSpec("line", {"x0": cols * 0.15, "y0": rows * 0.5,
                                      "angle": 0.12, "length": cols * 0.6},
                             5, 16.0, 8.0, 3.0, 0.0)
            instances.append(inst)
            boxes.append(_probe_bbox(inst, rows, cols))
    seed = int(rng.integers(0, 2**31 - 1))
    return SceneSpec(rows=rows, cols=cols, seed=seed, instances=instances)


def build_clean_corpus(master_seed: int, n: int, rows=256, cols=256):
    """n clean SceneTruths, deterministic in the master seed."""
    rng = np.random.default_rng(master_seed)
    truths = []
    while len(truths) < n:
        spec = make_scene_spec(rng, rows, cols)
        try:
            truths.append(scene.generate_scene(spec))
        except SpecOverflow:
            continue
    return truths


def build_fault_corpus(master_seed: int, n: int, rows=512, cols=512,
                       fault_frac: float = 0.4, spiral_frac: float = 0.2):
    """n scenes with a fault_frac share carrying one split plus distractors.

    Returns a list of (truth, corrupted maps, ggtr, FaultSpec); clean scenes
    carry their clean maps and GGTR = TR.
    """
    rng = np.random.default_rng(master_seed)
    out = []
    while len(out) < n:
        force_spiral = rng.random() < spiral_frac
        spec = make_scene_spec(rng, rows, cols, force_spiral=force_spiral)
        faulted = rng.random() < fault_frac
        if faulted:
            longest = max(range(len(spec.instances)),
                          key=lambda k: spec.instances[k].chars * spec.instances[k].char_w)
            fault = FaultSpec(splits=[(longest, float(rng.uniform(14, 20)))],
                              distractors=int(rng.integers(1, 3)))
        else:
            fault = FaultSpec()
        try:
            truth = scene.generate_scene(spec)
        except SpecOverflow:
            continue
        maps, ggtr = scene.inject_faults(truth, fault)
        out.append((truth, maps, ggtr, fault))
    return out
