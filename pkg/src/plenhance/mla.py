"""Mask label assignment: dominant-class vote gated by the three mask filters.

A mask earns a label only when (1) it is small relative to the image,
(2) the dominant class owns enough of the mask's valid labels (purity) and
(3) enough of the mask's points carry that class at all (representativity).
All three comparisons are boundary-inclusive.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ZeroDenominator
from .types import IGNORE, EnhancementConfig, LabelVector, Mask

#: Constraint names used in decisions and reports.
SIZE = "size"
PURITY = "purity"
REPRESENTATIVITY = "representativity"
NO_POINTS = "no_points"
NO_VALID_LABELS = "no_valid_labels"


@dataclass(frozen=True, eq=False)
class MaskLabelDecision:
    """Outcome of mask label assignment.

    ``class_id`` is None for the ignore outcome; ``failed`` then names the
    constraints (or degenerate conditions) that blocked assignment. When
    assigned, ``seeds`` are the mask points already carrying the class and
    ``unlabeled`` the mask points still without a label.
    """

    class_id: Optional[int]
    seeds: Optional[np.ndarray] = None
    unlabeled: Optional[np.ndarray] = None
    failed: tuple[str, ...] = ()

    @property
    def assigned(self) -> bool:
        return self.class_id is not None


def _ignore(*failed: str) -> MaskLabelDecision:
    return MaskLabelDecision(class_id=None, failed=tuple(failed))


def partition_by_class(
    member_indices: np.ndarray, labels: LabelVector
) -> tuple[dict[int, np.ndarray], np.ndarray]:
    """Split a mask's point indices by current label.

    Returns ({class -> indices}, ignore_indices); the pieces are disjoint and
    re-union to the input.
    """
    member_indices = np.asarray(member_indices, dtype=np.int64)
    values = labels.values[member_indices]
    ignore = member_indices[values == IGNORE]
    partition: dict[int, np.ndarray] = {}
    for c in np.unique(values[values != IGNORE]):
        partition[int(c)] = member_indices[values == c]
    return partition, ignore


def dominant_class(partition: dict[int, np.ndarray]) -> Optional[int]:
    """Class with the most members; ties go to the lowest class id."""
    if not partition:
        return None
    return min(partition, key=lambda c: (-len(partition[c]), c))


def check_mask_size(mask: Mask, image_height: int, image_width: int, lambda_s: float) -> bool:
    """True when area / (H*W) <= lambda_s."""
    return mask.area / (image_height * image_width) <= lambda_s


def check_purity(
    partition: dict[int, np.ndarray], dominant: int, lambda_p: float
) -> bool:
    """True when the dominant class holds >= lambda_p of all valid labels."""
    valid = sum(len(v) for v in partition.values())
    if valid == 0:
        raise ZeroDenominator("purity is undefined for a mask with no valid labels")
    return len(partition[dominant]) / valid >= lambda_p


def check_representativity(
    partition: dict[int, np.ndarray],
    dominant: int,
    member_indices: np.ndarray,
    lambda_r: float,
) -> bool:
    """True when the dominant class covers >= lambda_r of all mask points."""
    total = len(member_indices)
    if total == 0:
        raise ZeroDenominator("representativity is undefined for an empty mask")
    return len(partition[dominant]) / total >= lambda_r


def assign_mask_label(
    mask: Mask,
    member_indices: np.ndarray,
    labels: LabelVector,
    image_height: int,
    image_width: int,
    config: EnhancementConfig,
    apply_filters: bool = True,
) -> MaskLabelDecision:
    """Vote a class for the mask and gate it through the three filters.

    Degenerate masks (no points, or no valid labels to vote with) are ignored
    outright. With ``apply_filters=False`` any mask with a dominant class is
    assigned; that switch exists for the ablation baseline, not for production.
    """
    member_indices = np.asarray(member_indices, dtype=np.int64)
    if member_indices.size == 0:
        return _ignore(NO_POINTS)
    partition, ignore_set = partition_by_class(member_indices, labels)
    dom = dominant_class(partition)
    if dom is None:
        return _ignore(NO_VALID_LABELS)
    failed: list[str] = []
    if apply_filters:
        if not check_mask_size(mask, image_height, image_width, config.lambda_s):
            failed.append(SIZE)
        if not check_purity(partition, dom, config.lambda_p):
            failed.append(PURITY)
        if not check_representativity(partition, dom, member_indices, config.lambda_r):
            failed.append(REPRESENTATIVITY)
    if failed:
        return _ignore(*failed)
    return MaskLabelDecision(class_id=dom, seeds=partition[dom], unlabeled=ignore_set)
