"""Part-structure inference, segmentation refinement and structure metrics.

Records and hierarchies cross the boundary as plain dicts in the same JSON
schema the command-line tool reads and writes.
"""

import json

from . import _sseg
from ._sseg import Error, box_iou, chamfer_sq, edge_error_from_counts, focal_loss, hungarian, pca_obb

__all__ = [
    "Error",
    "box_iou",
    "chamfer_sq",
    "edge_error",
    "edge_error_from_counts",
    "focal_loss",
    "gen_shape",
    "hungarian",
    "infer",
    "part_ap",
    "pca_obb",
    "structure_difference",
    "taxonomy",
]


def gen_shape(category, seed, **noise):
    return json.loads(_sseg.gen_shape(category, seed, **noise))


def taxonomy(category):
    return json.loads(_sseg.taxonomy(category))


def infer(record, model=None):
    """Hierarchy dict for a record; PCA boxes when `model` is None."""
    return json.loads(_sseg.infer(json.dumps(record), model or ""))


def _hierarchy(h):
    return json.dumps(h)


def part_ap(pred, gt):
    return _sseg.part_ap(_hierarchy(pred), _hierarchy(gt))


def edge_error(pred, gt):
    return _sseg.edge_error(_hierarchy(pred), _hierarchy(gt))


def structure_difference(a, b):
    return _sseg.structure_difference(_hierarchy(a), _hierarchy(b))
