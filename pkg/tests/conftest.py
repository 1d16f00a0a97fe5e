import numpy as np
import pytest

from plenhance.types import CameraModel, LabelVector, Mask, MaskSet, PointCloud


def pinhole_camera(height=100, width=100, focal=100.0) -> CameraModel:
    """z-forward pinhole with the principal point at the image center."""
    P = np.array(
        [
            [focal, 0.0, width / 2.0, 0.0],
            [0.0, focal, height / 2.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    return CameraModel(P=P, image_height=height, image_width=width)


def mask_from_pixels(height, width, pixels, mask_id=0) -> Mask:
    bitmap = np.zeros((height, width), dtype=bool)
    for v, u in pixels:
        bitmap[v, u] = True
    return Mask(id=mask_id, bitmap=bitmap)


def random_scene(rng, n_points=200, n_masks=4, num_classes=5, label_fraction=0.3):
    """A small valid scene: points in front of a z-forward pinhole, blob masks."""
    height = width = 64
    camera = pinhole_camera(height, width, focal=64.0)
    z = rng.uniform(2.0, 20.0, n_points)
    x = z * rng.uniform(-0.45, 0.45, n_points)
    y = z * rng.uniform(-0.45, 0.45, n_points)
    cloud = PointCloud(np.stack([x, y, z], axis=1).astype(np.float32))

    values = np.full(n_points, -1, dtype=np.int32)
    labeled = rng.random(n_points) < label_fraction
    values[labeled] = rng.integers(0, num_classes, int(labeled.sum()))
    labels = LabelVector(values, num_classes=num_classes)

    masks = []
    for m in range(n_masks):
        bitmap = np.zeros((height, width), dtype=bool)
        cv = int(rng.integers(0, height))
        cu = int(rng.integers(0, width))
        r = int(rng.integers(4, 20))
        vv, uu = np.ogrid[:height, :width]
        bitmap |= (vv - cv) ** 2 + (uu - cu) ** 2 <= r * r
        masks.append(Mask(id=m, bitmap=bitmap))
    mask_set = MaskSet(masks=tuple(masks), image_height=height, image_width=width)
    return cloud, labels, mask_set, camera


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
