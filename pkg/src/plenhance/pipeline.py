"""End-to-end scene enhancement: order masks, vote labels, propagate.

Masks are processed strictly sequentially (smallest first by default) and
each assigned mask's propagation is written back before the next mask is
examined, so later masks vote over the already-densified labels. Points that
arrived with a label are never overwritten.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from . import gapp, mla
from .errors import PLEError
from .projection import points_in_mask, project_points
from .types import (
    IGNORE,
    CameraModel,
    EnhancementConfig,
    LabelVector,
    MaskSet,
    PointCloud,
    validate_scene,
)


@dataclass(frozen=True)
class MaskRecord:
    """Per-mask observability entry for the enhancement report."""

    mask_id: int
    area: int
    decision: str  # "assigned" | "ignored"
    class_id: Optional[int]
    failed_constraints: tuple[str, ...]
    num_members: int
    num_seeds: int
    newly_labeled: int
    rounds: int

    def to_dict(self) -> dict:
        return {
            "mask_id": self.mask_id,
            "area": self.area,
            "decision": self.decision,
            "class_id": self.class_id,
            "failed_constraints": list(self.failed_constraints),
            "num_members": self.num_members,
            "num_seeds": self.num_seeds,
            "newly_labeled": self.newly_labeled,
            "rounds": self.rounds,
        }


@dataclass(frozen=True)
class EnhancementReport:
    labels_before: int
    labels_after: int
    records: tuple[MaskRecord, ...]
    config: EnhancementConfig

    @property
    def masks_assigned(self) -> int:
        return sum(1 for r in self.records if r.decision == "assigned")

    @property
    def masks_ignored(self) -> int:
        return sum(1 for r in self.records if r.decision == "ignored")

    def to_dict(self) -> dict:
        return {
            "labels_before": self.labels_before,
            "labels_after": self.labels_after,
            "masks_assigned": self.masks_assigned,
            "masks_ignored": self.masks_ignored,
            "records": [r.to_dict() for r in self.records],
            "config": self.config.to_dict(),
        }


def order_masks(masks: MaskSet, mask_order: str = "area_ascending") -> list[int]:
    """Mask positions in processing order; area ties break by ascending id."""
    positions = range(len(masks))
    if mask_order == "area_descending":
        return sorted(positions, key=lambda i: (-masks.masks[i].area, masks.masks[i].id))
    return sorted(positions, key=lambda i: (masks.masks[i].area, masks.masks[i].id))


def enhance_scene(
    cloud: PointCloud,
    labels: LabelVector,
    masks: MaskSet,
    camera: CameraModel,
    config: Optional[EnhancementConfig] = None,
    *,
    apply_mask_filtering: bool = True,
) -> tuple[LabelVector, EnhancementReport]:
    """Densify one scene's labels. Deterministic; input labels never shrink.

    ``apply_mask_filtering=False`` accepts every mask with a dominant class
    (the ablation baseline used by the compare command).
    """
    if config is None:
        config = EnhancementConfig()
    validate_scene(cloud, labels, masks, camera)

    projection = project_points(cloud, camera)
    work = labels.values.copy()
    before = int((work != IGNORE).sum())
    records: list[MaskRecord] = []

    for pos in order_masks(masks, config.mask_order):
        mask = masks.masks[pos]
        members = points_in_mask(projection, mask)
        decision = mla.assign_mask_label(
            mask,
            members,
            labels.with_values(work),
            camera.image_height,
            camera.image_width,
            config,
            apply_filters=apply_mask_filtering,
        )
        if not decision.assigned:
            records.append(
                MaskRecord(
                    mask_id=mask.id,
                    area=mask.area,
                    decision="ignored",
                    class_id=None,
                    failed_constraints=decision.failed,
                    num_members=int(members.size),
                    num_seeds=0,
                    newly_labeled=0,
                    rounds=0,
                )
            )
            continue
        if config.method == "dp":
            result = gapp.direct_propagate(
                decision.seeds, decision.unlabeled, decision.class_id, labels_out=work
            )
        else:
            result = gapp.gapp_propagate(
                decision.seeds,
                decision.unlabeled,
                decision.class_id,
                cloud,
                config.beta,
                single_seed_policy=config.single_seed_policy,
                single_seed_radius=config.single_seed_radius,
                labels_out=work,
            )
        records.append(
            MaskRecord(
                mask_id=mask.id,
                area=mask.area,
                decision="assigned",
                class_id=decision.class_id,
                failed_constraints=(),
                num_members=int(members.size),
                num_seeds=int(decision.seeds.size),
                newly_labeled=int(result.newly_labeled.size),
                rounds=result.rounds,
            )
        )

    after = int((work != IGNORE).sum())
    report = EnhancementReport(
        labels_before=before,
        labels_after=after,
        records=tuple(records),
        config=config,
    )
    return labels.with_values(work), report


@dataclass(frozen=True)
class BatchResult:
    """One scene's outcome inside a batch; exactly one of labels/error is set."""

    index: int
    labels: Optional[LabelVector]
    report: Optional[EnhancementReport]
    error: Optional[str]

    @property
    def ok(self) -> bool:
        return self.error is None


def _batch_workers() -> int:
    try:
        return max(1, int(os.environ.get("PLE_THREADS", "1")))
    except ValueError:
        return 1


def enhance_batch(
    scenes: Sequence[tuple[PointCloud, LabelVector, MaskSet, CameraModel]],
    config: Optional[EnhancementConfig] = None,
) -> list[BatchResult]:
    """Enhance many scenes; per-scene failures do not abort the batch.

    Results keep input order. PLE_THREADS caps parallelism (default 1);
    per-scene output is identical either way.
    """

    def run(item: tuple[int, tuple]) -> BatchResult:
        index, scene = item
        try:
            labels, report = enhance_scene(*scene, config=config)
            return BatchResult(index=index, labels=labels, report=report, error=None)
        except PLEError as exc:
            return BatchResult(
                index=index,
                labels=None,
                report=None,
                error=f"{type(exc).__name__}: {exc}",
            )

    items = list(enumerate(scenes))
    workers = _batch_workers()
    if workers == 1 or len(items) <= 1:
        return [run(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, items))
