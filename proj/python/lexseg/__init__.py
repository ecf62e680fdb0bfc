"""Zero-annotation semantic segmentation.

Resolves a target label to classifier proxy labels, derives positive and
negative saliency maps, conditions a class-agnostic segmentation network on
them, and refines the predicted likelihood into a binary mask.
"""

try:
    from ._lexseg import (
        Error,
        Model,
        World,
        annotate,
        binary_iou,
        grabcut,
        synth_corpus,
        threshold_mask,
        tokenize,
        variant_names,
    )
except ImportError:  # build-tree layout: the extension sits beside the package root
    from _lexseg import (
        Error,
        Model,
        World,
        annotate,
        binary_iou,
        grabcut,
        synth_corpus,
        threshold_mask,
        tokenize,
        variant_names,
    )

__all__ = [
    "Error",
    "Model",
    "World",
    "annotate",
    "binary_iou",
    "grabcut",
    "synth_corpus",
    "threshold_mask",
    "tokenize",
    "variant_names",
]
