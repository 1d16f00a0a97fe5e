"""Shared domain types.

All types are immutable value objects: array fields are normalized to a fixed
dtype at construction and exposed as read-only views, so instances can be
shared freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np

from .errors import (
    AreaMismatch,
    BadLabel,
    BadShape,
    DimensionMismatch,
    DuplicateId,
    NonFinite,
    OutOfRange,
)

#: Sentinel class id for "no label". Kept as a plain int so label vectors stay
#: fixed-width int32 arrays.
IGNORE: int = -1

MASK_ORDERS = ("area_ascending", "area_descending")
TIE_BREAKS = ("lowest_class_id",)
SINGLE_SEED_POLICIES = ("skip", "fixed_radius")
METHODS = ("gapp", "dp")


def _readonly(a: np.ndarray) -> np.ndarray:
    view = a.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N points (x, y, z) in meters. Index k identifies point k for the scene."""

    xyz: np.ndarray

    def __post_init__(self) -> None:
        xyz = np.ascontiguousarray(self.xyz, dtype=np.float32)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise BadShape(f"points must have shape (N, 3), got {xyz.shape}")
        if xyz.size and not np.isfinite(xyz).all():
            raise NonFinite("point coordinates contain NaN or Inf")
        object.__setattr__(self, "xyz", _readonly(xyz))

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.empty((0, 3), dtype=np.float32))


@dataclass(frozen=True, eq=False)
class LabelVector:
    """Per-point class ids; IGNORE (-1) marks unlabeled points."""

    values: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise OutOfRange(f"num_classes must be >= 1, got {self.num_classes}")
        values = np.ascontiguousarray(self.values, dtype=np.int32)
        if values.ndim != 1:
            raise BadShape(f"labels must be 1-D, got shape {values.shape}")
        if values.size:
            lo, hi = int(values.min()), int(values.max())
            if lo < IGNORE or hi >= self.num_classes:
                raise BadLabel(
                    f"label values must lie in [-1, {self.num_classes}), "
                    f"found range [{lo}, {hi}]"
                )
        object.__setattr__(self, "values", _readonly(values))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def count_labeled(self) -> int:
        """Number of entries carrying a real class (non-IGNORE)."""
        return int((self.values != IGNORE).sum())

    def with_values(self, values: np.ndarray) -> "LabelVector":
        return LabelVector(values, self.num_classes)


@dataclass(frozen=True, eq=False)
class Mask:
    """One binary 2-D segmentation region with a precomputed pixel area."""

    id: int
    bitmap: np.ndarray
    area: Optional[int] = None

    def __post_init__(self) -> None:
        bitmap = np.ascontiguousarray(self.bitmap, dtype=bool)
        if bitmap.ndim != 2:
            raise BadShape(f"mask bitmap must be 2-D, got shape {bitmap.shape}")
        popcount = int(bitmap.sum())
        if self.area is None:
            object.__setattr__(self, "area", popcount)
        elif int(self.area) != popcount:
            raise AreaMismatch(
                f"mask {self.id}: stored area {self.area} != popcount {popcount}"
            )
        object.__setattr__(self, "bitmap", _readonly(bitmap))

    @property
    def shape(self) -> tuple[int, int]:
        return self.bitmap.shape  # (H, W)


@dataclass(frozen=True, eq=False)
class MaskSet:
    """Ordered collection of masks sharing one image geometry. Masks may overlap."""

    masks: tuple[Mask, ...]
    image_height: int
    image_width: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "masks", tuple(self.masks))
        if self.image_height < 1 or self.image_width < 1:
            raise OutOfRange(
                f"image dims must be positive, got "
                f"{self.image_height}x{self.image_width}"
            )
        seen: set[int] = set()
        for m in self.masks:
            if m.shape != (self.image_height, self.image_width):
                raise DimensionMismatch(
                    f"mask {m.id} has shape {m.shape}, expected "
                    f"({self.image_height}, {self.image_width})"
                )
            if m.id in seen:
                raise DuplicateId(f"duplicate mask id {m.id}")
            seen.add(m.id)

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self) -> Iterator[Mask]:
        return iter(self.masks)


@dataclass(frozen=True, eq=False)
class CameraModel:
    """3x4 projection matrix mapping homogeneous 3D points to pixel coordinates."""

    P: np.ndarray
    image_height: int
    image_width: int

    def __post_init__(self) -> None:
        P = np.ascontiguousarray(self.P, dtype=np.float64)
        if P.shape != (3, 4):
            raise BadShape(f"projection matrix must be 3x4, got {P.shape}")
        if not np.isfinite(P).all():
            raise NonFinite("projection matrix contains NaN or Inf")
        if self.image_height < 1 or self.image_width < 1:
            raise OutOfRange(
                f"image dims must be positive, got "
                f"{self.image_height}x{self.image_width}"
            )
        object.__setattr__(self, "P", _readonly(P))


@dataclass(frozen=True)
class EnhancementConfig:
    """Thresholds and policies steering mask filtering and propagation.

    Defaults follow the recommended operating point: lambda_s=0.2,
    lambda_p=0.8, lambda_r=0.1, beta=2.
    """

    lambda_s: float = 0.2
    lambda_p: float = 0.8
    lambda_r: float = 0.1
    beta: float = 2.0
    mask_order: str = "area_ascending"
    tie_break: str = "lowest_class_id"
    single_seed_policy: str = "skip"
    single_seed_radius: Optional[float] = None
    method: str = "gapp"

    def __post_init__(self) -> None:
        for name in ("lambda_s", "lambda_p", "lambda_r"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not np.isfinite(v) or not (0.0 < v <= 1.0):
                raise OutOfRange(f"{name} must be a real in (0, 1], got {v!r}")
        if not isinstance(self.beta, (int, float)) or not np.isfinite(self.beta) or self.beta <= 0:
            raise OutOfRange(f"beta must be a positive real, got {self.beta!r}")
        if self.mask_order not in MASK_ORDERS:
            raise OutOfRange(f"mask_order must be one of {MASK_ORDERS}, got {self.mask_order!r}")
        if self.tie_break not in TIE_BREAKS:
            raise OutOfRange(f"tie_break must be one of {TIE_BREAKS}, got {self.tie_break!r}")
        if self.single_seed_policy not in SINGLE_SEED_POLICIES:
            raise OutOfRange(
                f"single_seed_policy must be one of {SINGLE_SEED_POLICIES}, "
                f"got {self.single_seed_policy!r}"
            )
        if self.single_seed_policy == "fixed_radius":
            r = self.single_seed_radius
            if not isinstance(r, (int, float)) or not np.isfinite(r) or r <= 0:
                raise OutOfRange(f"fixed_radius policy needs a positive radius, got {r!r}")
        elif self.single_seed_radius is not None:
            raise OutOfRange("single_seed_radius is only valid with the fixed_radius policy")
        if self.method not in METHODS:
            raise OutOfRange(f"method must be one of {METHODS}, got {self.method!r}")

    def with_method(self, method: str) -> "EnhancementConfig":
        return replace(self, method=method)

    def to_dict(self) -> dict:
        policy: object = self.single_seed_policy
        if self.single_seed_policy == "fixed_radius":
            policy = {"fixed_radius": self.single_seed_radius}
        return {
            "lambda_s": self.lambda_s,
            "lambda_p": self.lambda_p,
            "lambda_r": self.lambda_r,
            "beta": self.beta,
            "mask_order": self.mask_order,
            "tie_break": self.tie_break,
            "single_seed_policy": policy,
            "method": self.method,
        }


@dataclass(frozen=True, eq=False)
class Scene:
    """A cross-validated bundle of one scene's inputs."""

    cloud: PointCloud
    labels: LabelVector
    masks: MaskSet
    camera: CameraModel


def validate_scene(
    cloud: PointCloud,
    labels: LabelVector,
    masks: MaskSet,
    camera: CameraModel,
) -> Scene:
    """Check every cross-type invariant and return the bundle.

    Raises DimensionMismatch, NonFinite or BadLabel; a bundle that comes back
    from here never fails those checks downstream.
    """
    if len(labels) != len(cloud):
        raise DimensionMismatch(
            f"labels have {len(labels)} entries for {len(cloud)} points"
        )
    if (masks.image_height, masks.image_width) != (camera.image_height, camera.image_width):
        raise DimensionMismatch(
            f"mask set is {masks.image_height}x{masks.image_width} but camera is "
            f"{camera.image_height}x{camera.image_width}"
        )
    # Re-verify array contents: the bindings hand in caller-owned buffers, so
    # do not trust that they were untouched since construction.
    if cloud.xyz.size and not np.isfinite(cloud.xyz).all():
        raise NonFinite("point coordinates contain NaN or Inf")
    if not np.isfinite(camera.P).all():
        raise NonFinite("projection matrix contains NaN or Inf")
    v = labels.values
    if v.size and (int(v.min()) < IGNORE or int(v.max()) >= labels.num_classes):
        raise BadLabel("label values outside [-1, num_classes)")
    return Scene(cloud=cloud, labels=labels, masks=masks, camera=camera)
