"""Bottom-up curved-text detection on synthetic scenes.

Pipeline: dense overlapping segment proposals on text-center-line maps,
pivot-graph reasoning (link prediction + node typing), location-aware
transfer and fusion decoding of graph features, false-positive/negative
suppression, and contour approximation from grouped segment rasters.
"""

from .errors import (Divergence, EmptyGroup, EmptyMask, NoCharSegments,
                     NoLabeledNodes, SegtextError, ShapeMismatch, SpecOverflow)
from .grid import RotRect, corners, morph_close, nms, polygon_iou, rect_iou, trace_contour
from .infer import DetectConfig, DetectionResult, detect
from .proposal import TextSegment, clip_width, propose_segments
from .scene import FaultSpec, SceneSpec, SpineSpec, TextMaps, generate_scene, inject_faults

__version__ = "0.1.0"

__all__ = [
    "Divergence", "EmptyGroup", "EmptyMask", "NoCharSegments", "NoLabeledNodes",
    "SegtextError", "ShapeMismatch", "SpecOverflow",
    "RotRect", "corners", "morph_close", "nms", "polygon_iou", "rect_iou",
    "trace_contour",
    "DetectConfig", "DetectionResult", "detect",
    "TextSegment", "clip_width", "propose_segments",
    "FaultSpec", "SceneSpec", "SpineSpec", "TextMaps", "generate_scene",
    "inject_faults",
    "__version__",
]
