"""Synthetic lidar+camera scene generation with known misalignment.

World frame: x forward, y left, z up, lidar at the origin. The camera sits at
(0, baseline, 0) and looks along +x with the same intrinsics the lidar scan
grid uses. Lidar points are first hits of rays cast through pixel centers
from the lidar origin; masks are rasterized the same way from the camera
center. Scenes hold floating box/cylinder objects in front of a tall back
wall and above a ground plane (wall and ground share the background class).
The mask inventory: one exact footprint mask per object, an oversized wall
mask and ground mask, optional union masks (two objects merged, the
impure-mask family), thin rim masks hugging each silhouette on the wall
(masks bleeding across a depth edge), and small ground patches (the
sparse-label family).

Because both sensors share the pixel grid, a zero baseline makes every point
land exactly on the pixel it was cast through, so the misaligned count is
exactly zero. Any positive baseline yields parallax: background points hidden
from the camera behind an object project into that object's mask, several
meters away from the object's own points in 3D. Occlusion is decided by exact
ray-primitive intersection, so those misaligned points are known analytically
per scene.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import io_formats
from .errors import InfeasibleSpec, MalformedFile, UnknownField
from .projection import points_in_mask, project_points
from .types import IGNORE, CameraModel, LabelVector, Mask, MaskSet, PointCloud

_EPS = 1e-9

BOX = "box"
CYLINDER = "cylinder"


@dataclass(frozen=True)
class ObjectTemplate:
    """One object kind: shape, class, metric size, lidar rays aimed at it.

    ``size`` is (sx, sy, sz) full extents for a box and (radius, height) for
    a cylinder.
    """

    shape: str
    class_id: int
    size: tuple[float, ...]
    points: int

    def __post_init__(self) -> None:
        if self.shape not in (BOX, CYLINDER):
            raise InfeasibleSpec(f"unknown object shape {self.shape!r}")
        expected = 3 if self.shape == BOX else 2
        if len(self.size) != expected or any(s <= 0 for s in self.size):
            raise InfeasibleSpec(f"{self.shape} size must be {expected} positive reals")
        if self.points < 0:
            raise InfeasibleSpec("per-object point count must be >= 0")


def _default_templates() -> tuple[ObjectTemplate, ...]:
    return (
        ObjectTemplate(shape=BOX, class_id=1, size=(1.2, 1.2, 1.2), points=260),
        ObjectTemplate(shape=CYLINDER, class_id=2, size=(0.5, 1.4), points=240),
        ObjectTemplate(shape=BOX, class_id=3, size=(0.9, 0.9, 1.0), points=220),
    )


@dataclass(frozen=True)
class SceneSpec:
    """Parameters for one deterministic synthetic scene."""

    rng_seed: int = 0
    n_objects: int = 4
    templates: tuple[ObjectTemplate, ...] = field(default_factory=_default_templates)
    num_classes: int = 4
    ground_class: int = 0
    image_height: int = 120
    image_width: int = 160
    focal: float = 150.0
    camera_baseline: float = 0.5
    ground_z: float = -1.7
    ground_extent: tuple[float, float, float, float] = (3.0, 30.0, -9.0, 9.0)
    ground_points: int = 2000
    wall_x: float = 25.0
    wall_top_z: float = 6.0
    wall_points: int = 1200
    placement_x: tuple[float, float] = (7.0, 20.0)
    placement_y: tuple[float, float] = (-4.0, 4.0)
    placement_z: tuple[float, float] = (-0.1, 0.5)
    min_spacing: float = 3.2
    seed_fractions: tuple[float, ...] = (0.08, 0.45, 0.40, 0.30)
    noise_rate: float = 0.05
    union_masks: int = 1
    patch_masks: int = 6
    patch_radius: tuple[int, int] = (4, 6)
    rim_width: int = 3

    def __post_init__(self) -> None:
        object.__setattr__(self, "templates", tuple(self.templates))
        object.__setattr__(self, "seed_fractions", tuple(float(f) for f in self.seed_fractions))
        if self.n_objects < 0:
            raise InfeasibleSpec("n_objects must be >= 0")
        if self.n_objects > 0 and not self.templates:
            raise InfeasibleSpec("n_objects > 0 requires at least one template")
        if self.num_classes < 1:
            raise InfeasibleSpec("num_classes must be >= 1")
        if not (0 <= self.ground_class < self.num_classes):
            raise InfeasibleSpec("ground_class must be a valid class id")
        for t in self.templates:
            if not (0 <= t.class_id < self.num_classes):
                raise InfeasibleSpec(f"template class {t.class_id} outside [0, {self.num_classes})")
        if self.image_height < 1 or self.image_width < 1:
            raise InfeasibleSpec("image dims must be positive")
        if self.focal <= 0:
            raise InfeasibleSpec("focal length must be positive")
        if len(self.seed_fractions) != self.num_classes:
            raise InfeasibleSpec("need one seed fraction per class")
        if any(not (0.0 <= f <= 1.0) for f in self.seed_fractions):
            raise InfeasibleSpec("seed fractions must lie in [0, 1]")
        if not (0.0 <= self.noise_rate <= 1.0):
            raise InfeasibleSpec("noise rate must lie in [0, 1]")
        if self.ground_z >= 0.0:
            raise InfeasibleSpec("ground plane must sit below the sensor origin")
        x0, x1, y0, y1 = self.ground_extent
        if x1 <= x0 or y1 <= y0:
            raise InfeasibleSpec("ground extent must have positive area")
        if self.wall_x <= self.placement_x[1]:
            raise InfeasibleSpec("wall must stand behind the object placement band")
        if self.wall_top_z <= self.ground_z:
            raise InfeasibleSpec("wall top must rise above the ground plane")
        if self.ground_points < 0 or self.wall_points < 0:
            raise InfeasibleSpec("point counts must be >= 0")
        if self.union_masks < 0 or self.patch_masks < 0 or self.rim_width < 0:
            raise InfeasibleSpec("mask counts must be >= 0")
        if self.patch_radius[0] < 1 or self.patch_radius[1] < self.patch_radius[0]:
            raise InfeasibleSpec("patch radius range must be 1 <= lo <= hi")


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """A generated scene plus the bookkeeping that makes outliers analytic."""

    cloud: PointCloud
    gt_labels: LabelVector
    seed_labels: LabelVector
    masks: MaskSet
    camera: CameraModel
    object_mask_classes: dict[int, int]  # per-object mask id -> object class
    spec: SceneSpec


@dataclass(frozen=True)
class _Placed:
    shape: str
    class_id: int
    points: int
    center: tuple[float, float, float]
    size: tuple[float, ...]


# -- exact ray casting ------------------------------------------------------------

def _ray_box_t(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
    tmin = np.minimum(t1, t2).max(axis=1)
    tmax = np.maximum(t1, t2).min(axis=1)
    hit = (tmax >= tmin) & (tmin > _EPS)
    return np.where(hit, tmin, np.inf)


def _ray_cylinder_t(
    origin: np.ndarray,
    dirs: np.ndarray,
    cx: float,
    cy: float,
    radius: float,
    z0: float,
    z1: float,
) -> np.ndarray:
    ox, oy, oz = origin[0] - cx, origin[1] - cy, origin[2]
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    best = np.full(dirs.shape[0], np.inf)

    a = dx * dx + dy * dy
    b = 2.0 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - 4.0 * a * c
    ok = (disc >= 0.0) & (a > 0.0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2.0 * a)
            z = oz + t * dz
            cand = ok & (t > _EPS) & (z >= z0) & (z <= z1) & (t < best)
            best = np.where(cand, t, best)
        for zc in (z0, z1):
            t = (zc - oz) / dz
            px = ox + t * dx
            py = oy + t * dy
            cand = np.isfinite(t) & (t > _EPS) & (px * px + py * py <= radius * radius) & (t < best)
            best = np.where(cand, t, best)
    return best


def _ray_ground_t(
    origin: np.ndarray, dirs: np.ndarray, z: float, extent: tuple[float, float, float, float]
) -> np.ndarray:
    x0, x1, y0, y1 = extent
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (z - origin[2]) / dirs[:, 2]
    px = origin[0] + t * dirs[:, 0]
    py = origin[1] + t * dirs[:, 1]
    hit = np.isfinite(t) & (t > _EPS) & (px >= x0) & (px <= x1) & (py >= y0) & (py <= y1)
    return np.where(hit, t, np.inf)


def _object_t(origin: np.ndarray, dirs: np.ndarray, obj: _Placed) -> np.ndarray:
    cx, cy, cz = obj.center
    if obj.shape == BOX:
        half = np.asarray(obj.size) / 2.0
        center = np.asarray(obj.center)
        return _ray_box_t(origin, dirs, center - half, center + half)
    radius, height = obj.size
    return _ray_cylinder_t(origin, dirs, cx, cy, radius, cz - height / 2.0, cz + height / 2.0)


_WALL_THICKNESS = 0.4


def _wall_bounds(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    _, _, y0, y1 = spec.ground_extent
    lo = np.array([spec.wall_x, y0, spec.ground_z])
    hi = np.array([spec.wall_x + _WALL_THICKNESS, y1, spec.wall_top_z])
    return lo, hi


def _first_hit(
    origin: np.ndarray, dirs: np.ndarray, objects: Sequence[_Placed], spec: SceneSpec
) -> tuple[np.ndarray, np.ndarray]:
    """(owner, t): object index, or len(objects) for the back wall,
    len(objects)+1 for the ground, -1 for no hit."""
    layers = [_object_t(origin, dirs, obj) for obj in objects]
    layers.append(_ray_box_t(origin, dirs, *_wall_bounds(spec)))
    layers.append(_ray_ground_t(origin, dirs, spec.ground_z, spec.ground_extent))
    stack = np.stack(layers)
    owner = stack.argmin(axis=0).astype(np.int64)
    t = stack.min(axis=0)
    owner[~np.isfinite(t)] = -1
    return owner, t


def _origin_inside(origin: np.ndarray, obj: _Placed) -> bool:
    cx, cy, cz = obj.center
    if obj.shape == BOX:
        half = np.asarray(obj.size) / 2.0
        return bool(np.all(np.abs(origin - np.asarray(obj.center)) <= half))
    radius, height = obj.size
    dx, dy = origin[0] - cx, origin[1] - cy
    return dx * dx + dy * dy <= radius * radius and abs(origin[2] - cz) <= height / 2.0


# -- scene assembly ---------------------------------------------------------------

def _pixel_ray_dirs(spec: SceneSpec) -> np.ndarray:
    cx = spec.image_width / 2.0
    cy = spec.image_height / 2.0
    us = (np.arange(spec.image_width) + 0.5 - cx) / spec.focal
    vs = (np.arange(spec.image_height) + 0.5 - cy) / spec.focal
    dc_x = np.tile(us, spec.image_height)
    dc_y = np.repeat(vs, spec.image_width)
    # camera axes: x_cam = -y_world, y_cam = -z_world, z_cam = +x_world
    return np.stack([np.ones_like(dc_x), -dc_x, -dc_y], axis=1)


def _camera_model(spec: SceneSpec) -> CameraModel:
    f = spec.focal
    K = np.array(
        [[f, 0.0, spec.image_width / 2.0], [0.0, f, spec.image_height / 2.0], [0.0, 0.0, 1.0]]
    )
    R = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    C = np.array([0.0, spec.camera_baseline, 0.0])
    Rt = np.hstack([R, (-R @ C).reshape(3, 1)])
    return CameraModel(P=K @ Rt, image_height=spec.image_height, image_width=spec.image_width)


def _place_objects(spec: SceneSpec, rng: np.random.Generator) -> list[_Placed]:
    placed: list[_Placed] = []
    for i in range(spec.n_objects):
        tmpl = spec.templates[i % len(spec.templates)]
        for _ in range(200):
            x = rng.uniform(*spec.placement_x)
            y = rng.uniform(*spec.placement_y)
            z = rng.uniform(*spec.placement_z)
            if all(
                np.hypot(x - p.center[0], y - p.center[1]) >= spec.min_spacing for p in placed
            ):
                placed.append(
                    _Placed(
                        shape=tmpl.shape,
                        class_id=tmpl.class_id,
                        points=tmpl.points,
                        center=(x, y, z),
                        size=tmpl.size,
                    )
                )
                break
        else:
            raise InfeasibleSpec(
                f"could not place object {i} with spacing {spec.min_spacing}"
            )
    return placed


def _sample_pixels(
    rng: np.random.Generator, candidates: np.ndarray, requested: int
) -> np.ndarray:
    n = min(requested, candidates.size)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    return np.sort(rng.choice(candidates, size=n, replace=False))


def _disk_bitmap(height: int, width: int, cv: int, cu: int, radius: int) -> np.ndarray:
    vv, uu = np.ogrid[:height, :width]
    return (vv - cv) ** 2 + (uu - cu) ** 2 <= radius * radius


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    """Build one scene deterministically from the spec's rng seed."""
    rng = np.random.default_rng(spec.rng_seed)
    objects = _place_objects(spec, rng)

    lidar_origin = np.zeros(3)
    camera_origin = np.array([0.0, spec.camera_baseline, 0.0])
    for obj in objects:
        if _origin_inside(lidar_origin, obj) or _origin_inside(camera_origin, obj):
            raise InfeasibleSpec("an object encloses a sensor origin")

    dirs = _pixel_ray_dirs(spec)
    owner_lidar, t_lidar = _first_hit(lidar_origin, dirs, objects, spec)
    owner_camera, _ = _first_hit(camera_origin, dirs, objects, spec)
    H, W = spec.image_height, spec.image_width
    wall_id = len(objects)
    ground_id = wall_id + 1

    chosen: list[np.ndarray] = []
    gt_parts: list[np.ndarray] = []
    for j, obj in enumerate(objects):
        pix = _sample_pixels(rng, np.flatnonzero(owner_lidar == j), obj.points)
        chosen.append(pix)
        gt_parts.append(np.full(pix.size, obj.class_id, dtype=np.int32))
    for region_id, count in ((wall_id, spec.wall_points), (ground_id, spec.ground_points)):
        pix = _sample_pixels(rng, np.flatnonzero(owner_lidar == region_id), count)
        chosen.append(pix)
        gt_parts.append(np.full(pix.size, spec.ground_class, dtype=np.int32))

    pix_all = np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)
    if pix_all.size == 0:
        raise InfeasibleSpec("scene produced zero points")
    points = lidar_origin + t_lidar[pix_all, None] * dirs[pix_all]
    cloud = PointCloud(points.astype(np.float32))
    gt = LabelVector(np.concatenate(gt_parts), num_classes=spec.num_classes)

    camera_raster = owner_camera.reshape(H, W)
    masks: list[Mask] = []
    object_mask_classes: dict[int, int] = {}
    for j, obj in enumerate(objects):
        masks.append(Mask(id=j, bitmap=camera_raster == j))
        object_mask_classes[j] = obj.class_id
    masks.append(Mask(id=wall_id, bitmap=camera_raster == wall_id))
    ground_bitmap = camera_raster == ground_id
    masks.append(Mask(id=ground_id, bitmap=ground_bitmap))

    next_id = ground_id + 1
    pairs = [
        (i, j)
        for i in range(len(objects))
        for j in range(i + 1, len(objects))
        if objects[i].class_id != objects[j].class_id
    ]
    for i, j in pairs[: spec.union_masks]:
        union = (camera_raster == i) | (camera_raster == j)
        if union.any():
            masks.append(Mask(id=next_id, bitmap=union))
            next_id += 1

    if spec.rim_width > 0:
        wall_bitmap = camera_raster == wall_id
        for j in range(len(objects)):
            silhouette = camera_raster == j
            if not silhouette.any():
                continue
            dilated = ndimage.binary_dilation(silhouette, iterations=spec.rim_width)
            ring = dilated & ~silhouette & wall_bitmap
            if ring.any():
                masks.append(Mask(id=next_id, bitmap=ring))
                next_id += 1

    ground_flat = np.flatnonzero(ground_bitmap.ravel())
    for _ in range(spec.patch_masks):
        if ground_flat.size == 0:
            break
        center = int(rng.choice(ground_flat))
        radius = int(rng.integers(spec.patch_radius[0], spec.patch_radius[1] + 1))
        patch = _disk_bitmap(H, W, center // W, center % W, radius) & ground_bitmap
        if patch.any():
            masks.append(Mask(id=next_id, bitmap=patch))
            next_id += 1

    mask_set = MaskSet(masks=tuple(masks), image_height=H, image_width=W)

    seed_values = np.full(len(cloud), IGNORE, dtype=np.int32)
    for c in range(spec.num_classes):
        idx = np.flatnonzero(gt.values == c)
        k = int(round(spec.seed_fractions[c] * idx.size))
        if k == 0:
            continue
        pick = np.sort(rng.choice(idx, size=k, replace=False))
        labels = np.full(k, c, dtype=np.int32)
        if spec.num_classes > 1 and spec.noise_rate > 0.0:
            flip = rng.random(k) < spec.noise_rate
            wrong = rng.integers(0, spec.num_classes - 1, size=k).astype(np.int32)
            wrong += (wrong >= c).astype(np.int32)  # uniform over the other classes
            labels = np.where(flip, wrong, labels)
        seed_values[pick] = labels
    seed_labels = LabelVector(seed_values, num_classes=spec.num_classes)

    return SyntheticScene(
        cloud=cloud,
        gt_labels=gt,
        seed_labels=seed_labels,
        masks=mask_set,
        camera=_camera_model(spec),
        object_mask_classes=object_mask_classes,
        spec=spec,
    )


def misaligned_indices(scene: SyntheticScene) -> np.ndarray:
    """Points projecting into an object mask whose GT class is not that object's."""
    projection = project_points(scene.cloud, scene.camera)
    gt = scene.gt_labels.values
    bad: list[np.ndarray] = []
    for mask in scene.masks:
        cls = scene.object_mask_classes.get(mask.id)
        if cls is None:
            continue
        members = points_in_mask(projection, mask)
        bad.append(members[gt[members] != cls])
    if not bad:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(bad))


def count_misaligned(scene: SyntheticScene) -> int:
    return int(misaligned_indices(scene).size)


# -- spec serialization --------------------------------------------------------------

_SPEC_FIELDS = {
    "rng_seed", "n_objects", "templates", "num_classes", "ground_class",
    "image_height", "image_width", "focal", "camera_baseline", "ground_z",
    "ground_extent", "ground_points", "wall_x", "wall_top_z", "wall_points",
    "placement_x", "placement_y", "placement_z", "min_spacing",
    "seed_fractions", "noise_rate", "union_masks", "patch_masks", "patch_radius",
    "rim_width",
}
_TEMPLATE_FIELDS = {"shape", "class_id", "size", "points"}


def spec_to_dict(spec: SceneSpec) -> dict:
    doc = {name: getattr(spec, name) for name in sorted(_SPEC_FIELDS) if name != "templates"}
    for key in ("ground_extent", "placement_x", "placement_y", "placement_z",
                "seed_fractions", "patch_radius"):
        doc[key] = list(doc[key])
    doc["templates"] = [
        {"shape": t.shape, "class_id": t.class_id, "size": list(t.size), "points": t.points}
        for t in spec.templates
    ]
    return doc


def spec_from_dict(doc: dict) -> SceneSpec:
    if not isinstance(doc, dict):
        raise MalformedFile("scene spec document must be a mapping")
    unknown = set(doc) - _SPEC_FIELDS
    if unknown:
        raise UnknownField(f"unknown scene spec fields: {sorted(unknown)}")
    kwargs = dict(doc)
    if "templates" in kwargs:
        templates = []
        for raw in kwargs["templates"]:
            extra = set(raw) - _TEMPLATE_FIELDS
            if extra:
                raise UnknownField(f"unknown template fields: {sorted(extra)}")
            templates.append(
                ObjectTemplate(
                    shape=raw["shape"],
                    class_id=int(raw["class_id"]),
                    size=tuple(raw["size"]),
                    points=int(raw["points"]),
                )
            )
        kwargs["templates"] = tuple(templates)
    for key in ("ground_extent", "placement_x", "placement_y", "placement_z",
                "seed_fractions", "patch_radius"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return SceneSpec(**kwargs)


def read_scene_spec(path) -> SceneSpec:
    return spec_from_dict(io_formats._read_json(path))


def write_scene_spec(path, spec: SceneSpec) -> None:
    io_formats._write_json(path, spec_to_dict(spec))


def write_scene(scene: SyntheticScene, out_dir, scene_id: str) -> io_formats.SceneManifest:
    """Write the five scene files; returns the manifest entry (paths relative)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = {
        "points": f"{scene_id}_points.bin",
        "labels": f"{scene_id}_labels.bin",
        "gt_labels": f"{scene_id}_gt.bin",
        "masks": f"{scene_id}_masks.json",
        "calib": f"{scene_id}_calib.json",
    }
    io_formats.write_points(out / names["points"], scene.cloud)
    io_formats.write_labels(out / names["labels"], scene.seed_labels)
    io_formats.write_labels(out / names["gt_labels"], scene.gt_labels)
    io_formats.write_masks(out / names["masks"], scene.masks)
    io_formats.write_calibration(out / names["calib"], scene.camera)
    return io_formats.SceneManifest(
        scene_id=scene_id,
        points=names["points"],
        labels=names["labels"],
        masks=names["masks"],
        calib=names["calib"],
        gt_labels=names["gt_labels"],
    )
