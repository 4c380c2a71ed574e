"""Exception types shared across the pipeline."""


class SegtextError(Exception):
    """Base class; the CLI maps these to one-line errors and exit code 2."""


class SpecOverflow(SegtextError):
    """A scene instance does not fit inside the canvas."""


class NoCharSegments(SegtextError):
    """Annotation requested but the char union mask is empty."""


class NoLabeledNodes(SegtextError):
    """Node loss requested with every node unlabeled."""


class ShapeMismatch(SegtextError):
    """Tensor shapes inconsistent with the declared layout."""


class EmptyMask(SegtextError):
    """Contour tracing requested on an all-zero mask."""


class EmptyGroup(SegtextError):
    """Shape approximation requested on an empty segment group."""


class Divergence(SegtextError):
    """Training loss became non-finite."""
