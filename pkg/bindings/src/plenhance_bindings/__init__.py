"""In-process array surface over the plenhance engine.

Training pipelines hand in numpy arrays and get a fresh label array back; no
file round-trips, no reimplementation. Points and labels are validated
strictly (dtype, contiguity, shape) and passed into the engine as zero-copy
views; the input arrays are never mutated. Engine validation errors
(DimensionMismatch, BadLabel, ...) propagate unchanged; boundary dtype and
layout violations raise BoundaryValidationError.
"""
from __future__ import annotations

from typing import Mapping, Optional, Sequence, Union

import numpy as np

from plenhance import __version__ as _engine_version
from plenhance.eval_metrics import compute_increment, compute_stats
from plenhance.io_formats import config_from_dict, decode_rle
from plenhance.pipeline import enhance_scene
from plenhance.types import (
    CameraModel,
    EnhancementConfig,
    LabelVector,
    Mask,
    MaskSet,
    PointCloud,
)

__version__ = _engine_version

__all__ = ["BoundaryValidationError", "enhance", "evaluate", "__version__"]


class BoundaryValidationError(TypeError):
    """An input array fails the boundary contract (dtype/contiguity/shape)."""


def _require(array, name: str, dtype, shape_desc: str, ndim: int) -> np.ndarray:
    if not isinstance(array, np.ndarray):
        raise BoundaryValidationError(f"{name} must be a numpy array, got {type(array).__name__}")
    if array.dtype != dtype:
        raise BoundaryValidationError(f"{name} must have dtype {np.dtype(dtype)}, got {array.dtype}")
    if array.ndim != ndim:
        raise BoundaryValidationError(f"{name} must be {shape_desc}, got shape {array.shape}")
    if not array.flags.c_contiguous:
        raise BoundaryValidationError(f"{name} must be C-contiguous")
    return array


def _camera_from(calib: Mapping) -> CameraModel:
    try:
        raw_p = calib["P"]
        height = int(calib["image_height"])
        width = int(calib["image_width"])
    except (KeyError, TypeError) as exc:
        raise BoundaryValidationError(
            "calib must map P, image_height and image_width"
        ) from exc
    P = np.asarray(raw_p, dtype=np.float64)
    if P.size != 12:
        raise BoundaryValidationError(f"calib P must hold 12 values, got {P.size}")
    return CameraModel(P=P.reshape(3, 4), image_height=height, image_width=width)


def _masks_from(masks, height: int, width: int) -> MaskSet:
    if isinstance(masks, np.ndarray):
        if masks.dtype != np.bool_ or masks.ndim != 3:
            raise BoundaryValidationError(
                f"mask array must be bool with shape (N', H, W), got "
                f"{masks.dtype} {masks.shape}"
            )
        items = tuple(Mask(id=i, bitmap=masks[i]) for i in range(masks.shape[0]))
    else:
        items = tuple(
            Mask(
                id=int(entry["id"]),
                bitmap=decode_rle(entry["rle"], height, width),
                area=int(entry["area"]),
            )
            for entry in masks
        )
    return MaskSet(masks=items, image_height=height, image_width=width)


def enhance(
    points: np.ndarray,
    labels: np.ndarray,
    masks: Union[np.ndarray, Sequence[Mapping]],
    calib: Mapping,
    config: Optional[Mapping] = None,
    *,
    num_classes: Optional[int] = None,
) -> tuple[np.ndarray, dict]:
    """Densify labels for one scene; returns (new label array, report dict).

    ``points`` must be float32 (N, 3) C-contiguous and ``labels`` int32 (N,)
    C-contiguous; both are used without copying and left untouched. ``masks``
    is either a bool (N', H, W) array (mask ids are the positions) or a
    sequence of {id, area, rle} mappings. ``calib`` maps P (12 reals),
    image_height and image_width. ``config`` follows the config-file schema.
    ``num_classes`` defaults to max(labels)+1.
    """
    points = _require(points, "points", np.float32, "(N, 3)", ndim=2)
    if points.shape[1] != 3:
        raise BoundaryValidationError(f"points must be (N, 3), got shape {points.shape}")
    labels = _require(labels, "labels", np.int32, "(N,)", ndim=1)
    if num_classes is None:
        num_classes = max(int(labels.max(initial=-1)) + 1, 1)
    camera = _camera_from(calib)
    cfg = config_from_dict(dict(config)) if config else EnhancementConfig()

    cloud = PointCloud(points)
    label_vector = LabelVector(labels, num_classes=num_classes)
    mask_set = _masks_from(masks, camera.image_height, camera.image_width)
    enhanced, report = enhance_scene(cloud, label_vector, mask_set, camera, cfg)
    return enhanced.values.copy(), report.to_dict()


def evaluate(
    pred: np.ndarray,
    gt: np.ndarray,
    before: Optional[np.ndarray] = None,
    *,
    num_classes: Optional[int] = None,
) -> dict:
    """Score predicted labels against ground truth; mirrors the eval command.

    Arrays must be int32, 1-D, C-contiguous. Returns fraction-valued stats
    plus ``total_increment`` (percent) when ``before`` is given.
    """
    pred = _require(pred, "pred", np.int32, "(N,)", ndim=1)
    gt = _require(gt, "gt", np.int32, "(N,)", ndim=1)
    if num_classes is None:
        top = max(int(pred.max(initial=-1)), int(gt.max(initial=-1)))
        if before is not None and isinstance(before, np.ndarray) and before.size:
            top = max(top, int(before.max()))
        num_classes = max(top + 1, 1)
    stats = compute_stats(
        LabelVector(pred, num_classes=num_classes),
        LabelVector(gt, num_classes=num_classes),
    )
    payload = stats.to_dict()
    if before is not None:
        before = _require(before, "before", np.int32, "(N,)", ndim=1)
        base = compute_stats(
            LabelVector(before, num_classes=num_classes),
            LabelVector(gt, num_classes=num_classes),
        )
        payload["total_increment"] = compute_increment(base, stats)
    return payload
