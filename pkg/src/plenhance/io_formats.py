"""Bit-exact serialization of scene artifacts.

Binary layouts (all integers little-endian, floats IEEE-754 binary32):

  points  "PLPC" | u32 version=1 | u64 count | count x 3 float32 (x, y, z)
  labels  "PLLB" | u32 version=1 | u32 num_classes | u64 count | count x int32

Masks, calibration, config and manifests are JSON documents. Mask bitmaps are
run-length encoded over the row-major flattened bitmap, alternating runs that
start with the count of false pixels (the first run may be 0).
"""
from __future__ import annotations

import json
import struct
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    BadMagic,
    PLEError,
    BadShape,
    BadVersion,
    DuplicateId,
    MalformedFile,
    OutOfRange,
    RleSumMismatch,
    TruncatedFile,
    UnknownField,
)
from .types import CameraModel, EnhancementConfig, LabelVector, Mask, MaskSet, PointCloud

PathLike = Union[str, Path]

POINTS_MAGIC = b"PLPC"
LABELS_MAGIC = b"PLLB"
FORMAT_VERSION = 1

_POINTS_HEADER = struct.Struct("<4sIQ")
_LABELS_HEADER = struct.Struct("<4sIIQ")


# -- binary point clouds -------------------------------------------------------

def write_points(path: PathLike, cloud: PointCloud) -> None:
    payload = cloud.xyz.astype("<f4", copy=False).tobytes()
    header = _POINTS_HEADER.pack(POINTS_MAGIC, FORMAT_VERSION, len(cloud))
    Path(path).write_bytes(header + payload)


def read_points(path: PathLike) -> PointCloud:
    data = Path(path).read_bytes()
    _check_header(path, data, POINTS_MAGIC, _POINTS_HEADER.size)
    _, version, count = _POINTS_HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise BadVersion(f"{path}: unsupported points version {version}")
    expected = _POINTS_HEADER.size + count * 12
    if len(data) != expected:
        raise TruncatedFile(
            f"{path}: expected {expected} bytes for {count} points, found {len(data)}"
        )
    xyz = np.frombuffer(data, dtype="<f4", count=count * 3, offset=_POINTS_HEADER.size)
    with _file_context(path):
        return PointCloud(xyz.reshape(count, 3))


# -- binary label vectors ------------------------------------------------------

def write_labels(path: PathLike, labels: LabelVector) -> None:
    payload = labels.values.astype("<i4", copy=False).tobytes()
    header = _LABELS_HEADER.pack(LABELS_MAGIC, FORMAT_VERSION, labels.num_classes, len(labels))
    Path(path).write_bytes(header + payload)


def read_labels(path: PathLike) -> LabelVector:
    data = Path(path).read_bytes()
    _check_header(path, data, LABELS_MAGIC, _LABELS_HEADER.size)
    _, version, num_classes, count = _LABELS_HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise BadVersion(f"{path}: unsupported labels version {version}")
    expected = _LABELS_HEADER.size + count * 4
    if len(data) != expected:
        raise TruncatedFile(
            f"{path}: expected {expected} bytes for {count} labels, found {len(data)}"
        )
    values = np.frombuffer(data, dtype="<i4", count=count, offset=_LABELS_HEADER.size)
    with _file_context(path):
        return LabelVector(values, num_classes=num_classes)  # BadLabel on bad values


@contextmanager
def _file_context(path: PathLike):
    """Prefix engine validation errors with the offending file's path."""
    try:
        yield
    except PLEError as exc:
        if str(path) not in str(exc):
            raise type(exc)(f"{path}: {exc}") from None
        raise


def _check_header(path: PathLike, data: bytes, magic: bytes, header_size: int) -> None:
    if len(data) < len(magic):
        raise TruncatedFile(f"{path}: file shorter than the magic bytes")
    if data[: len(magic)] != magic:
        raise BadMagic(f"{path}: expected magic {magic!r}, found {data[:len(magic)]!r}")
    if len(data) < header_size:
        raise TruncatedFile(f"{path}: header truncated")


# -- run-length encoded mask sets ------------------------------------------------

def encode_rle(bitmap: np.ndarray) -> list[int]:
    """Row-major RLE, first run counting false pixels (possibly 0)."""
    flat = np.ascontiguousarray(bitmap, dtype=bool).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def decode_rle(rle: Sequence[int], height: int, width: int) -> np.ndarray:
    runs = np.asarray(rle, dtype=np.int64)
    if runs.size and runs.min() < 0:
        raise OutOfRange("rle runs must be non-negative")
    if int(runs.sum()) != height * width:
        raise RleSumMismatch(
            f"rle sums to {int(runs.sum())}, expected {height}x{width}={height * width}"
        )
    values = (np.arange(runs.size) % 2).astype(bool)  # false first
    return np.repeat(values, runs).reshape(height, width)


def write_masks(path: PathLike, masks: MaskSet) -> None:
    doc = {
        "image_height": masks.image_height,
        "image_width": masks.image_width,
        "masks": [
            {"id": m.id, "area": int(m.area), "rle": encode_rle(m.bitmap)}
            for m in masks
        ],
    }
    _write_json(path, doc)


def read_masks(path: PathLike) -> MaskSet:
    doc = _read_json(path)
    try:
        height = int(doc["image_height"])
        width = int(doc["image_width"])
        entries = doc["masks"]
    except (KeyError, TypeError) as exc:
        raise MalformedFile(f"{path}: missing mask-set field ({exc})") from exc
    masks = []
    seen: set[int] = set()
    for entry in entries:
        try:
            mask_id = int(entry["id"])
            area = int(entry["area"])
            rle = entry["rle"]
        except (KeyError, TypeError) as exc:
            raise MalformedFile(f"{path}: malformed mask entry ({exc})") from exc
        if mask_id in seen:
            raise DuplicateId(f"{path}: duplicate mask id {mask_id}")
        seen.add(mask_id)
        with _file_context(path):
            bitmap = decode_rle(rle, height, width)
            masks.append(Mask(id=mask_id, bitmap=bitmap, area=area))  # AreaMismatch on bad area
    return MaskSet(masks=tuple(masks), image_height=height, image_width=width)


# -- camera calibration ----------------------------------------------------------

def write_calibration(path: PathLike, camera: CameraModel) -> None:
    doc = {
        "P": [float(x) for x in camera.P.ravel()],
        "image_height": camera.image_height,
        "image_width": camera.image_width,
    }
    _write_json(path, doc)


def read_calibration(path: PathLike) -> CameraModel:
    doc = _read_json(path)
    try:
        raw_p = doc["P"]
        height = int(doc["image_height"])
        width = int(doc["image_width"])
    except (KeyError, TypeError) as exc:
        raise MalformedFile(f"{path}: missing calibration field ({exc})") from exc
    if not isinstance(raw_p, list) or len(raw_p) != 12:
        raise BadShape(f"{path}: P must hold 12 values, found {len(raw_p) if isinstance(raw_p, list) else raw_p!r}")
    P = np.asarray(raw_p, dtype=np.float64).reshape(3, 4)
    with _file_context(path):
        return CameraModel(P=P, image_height=height, image_width=width)  # NonFinite on NaN/Inf


# -- enhancement config ------------------------------------------------------------

_CONFIG_FIELDS = {
    "lambda_s",
    "lambda_p",
    "lambda_r",
    "beta",
    "mask_order",
    "tie_break",
    "single_seed_policy",
    "method",
}


def config_from_dict(doc: dict) -> EnhancementConfig:
    """Strict parse: unknown fields error, omitted fields take defaults."""
    if not isinstance(doc, dict):
        raise MalformedFile(f"config document must be a mapping, got {type(doc).__name__}")
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise UnknownField(f"unknown config fields: {sorted(unknown)}")
    kwargs = dict(doc)
    policy = kwargs.pop("single_seed_policy", None)
    if policy is not None:
        if isinstance(policy, str):
            kwargs["single_seed_policy"] = policy
        elif isinstance(policy, dict) and set(policy) == {"fixed_radius"}:
            kwargs["single_seed_policy"] = "fixed_radius"
            kwargs["single_seed_radius"] = policy["fixed_radius"]
        else:
            raise OutOfRange(
                f"single_seed_policy must be 'skip' or {{'fixed_radius': r}}, got {policy!r}"
            )
    try:
        return EnhancementConfig(**kwargs)
    except TypeError as exc:
        raise OutOfRange(f"bad config value: {exc}") from exc


def read_config(path: PathLike) -> EnhancementConfig:
    return config_from_dict(_read_json(path))


def write_config(path: PathLike, config: EnhancementConfig) -> None:
    _write_json(path, config.to_dict())


# -- scene manifests ----------------------------------------------------------------

@dataclass(frozen=True)
class SceneManifest:
    """Paths (relative to the manifest file) bundling one scene's artifacts."""

    scene_id: str
    points: str
    labels: str
    masks: str
    calib: str
    gt_labels: Optional[str] = None

    def to_dict(self) -> dict:
        doc = {
            "scene_id": self.scene_id,
            "points": self.points,
            "labels": self.labels,
            "masks": self.masks,
            "calib": self.calib,
        }
        if self.gt_labels is not None:
            doc["gt_labels"] = self.gt_labels
        return doc


def write_manifest(path: PathLike, entries: Sequence[SceneManifest]) -> None:
    _write_json(path, {"scenes": [e.to_dict() for e in entries]})


def read_manifest(path: PathLike, check_files: bool = True) -> list[SceneManifest]:
    doc = _read_json(path)
    try:
        raw = doc["scenes"]
    except (KeyError, TypeError) as exc:
        raise MalformedFile(f"{path}: missing 'scenes' array") from exc
    base = Path(path).parent
    entries = []
    for item in raw:
        try:
            entry = SceneManifest(
                scene_id=str(item["scene_id"]),
                points=str(item["points"]),
                labels=str(item["labels"]),
                masks=str(item["masks"]),
                calib=str(item["calib"]),
                gt_labels=str(item["gt_labels"]) if "gt_labels" in item else None,
            )
        except (KeyError, TypeError) as exc:
            raise MalformedFile(f"{path}: malformed scene entry ({exc})") from exc
        if check_files:
            for rel in (entry.points, entry.labels, entry.masks, entry.calib, entry.gt_labels):
                if rel is not None and not (base / rel).exists():
                    raise FileNotFoundError(f"{path}: referenced file missing: {rel}")
        entries.append(entry)
    return entries


def load_scene(entry: SceneManifest, base_dir: PathLike):
    """Load one manifest entry; returns (cloud, labels, masks, camera, gt or None)."""
    base = Path(base_dir)
    cloud = read_points(base / entry.points)
    labels = read_labels(base / entry.labels)
    masks = read_masks(base / entry.masks)
    camera = read_calibration(base / entry.calib)
    gt = read_labels(base / entry.gt_labels) if entry.gt_labels is not None else None
    return cloud, labels, masks, camera, gt


# -- shared JSON helpers ----------------------------------------------------------------

def _write_json(path: PathLike, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _read_json(path: PathLike) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: invalid JSON ({exc})") from exc
