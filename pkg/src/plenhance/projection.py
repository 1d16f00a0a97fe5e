"""Point-to-pixel projection and per-mask point membership."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch
from .types import CameraModel, Mask, PointCloud, _readonly


@dataclass(frozen=True, eq=False)
class PixelProjection:
    """Per-point pixel coordinates, or invalid.

    A point is invalid iff its depth is <= 0 or the floored pixel falls
    outside [0, W) x [0, H). ``u``/``v`` hold -1 at invalid entries.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray
    image_height: int
    image_width: int

    def __len__(self) -> int:
        return self.valid.shape[0]

    def entry(self, k: int) -> Optional[tuple[int, int]]:
        """(u, v) for point k, or None when the projection is invalid."""
        if not self.valid[k]:
            return None
        return int(self.u[k]), int(self.v[k])


def project_points(cloud: PointCloud, camera: CameraModel) -> PixelProjection:
    """Project every point through the camera matrix.

    Pixel binning floors a/d and b/d, so a point is valid only when the
    floored coordinates land strictly inside the image (u=W or v=H after
    flooring is out).
    """
    xyz = cloud.xyz.astype(np.float64)
    h = xyz @ camera.P[:, :3].T + camera.P[:, 3]
    depth = h[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uf = np.floor(h[:, 0] / depth)
        vf = np.floor(h[:, 1] / depth)
    valid = (
        (depth > 0.0)
        & (uf >= 0.0)
        & (uf < camera.image_width)
        & (vf >= 0.0)
        & (vf < camera.image_height)
    )
    u = np.where(valid, uf, -1.0).astype(np.int64)
    v = np.where(valid, vf, -1.0).astype(np.int64)
    return PixelProjection(
        u=_readonly(u),
        v=_readonly(v),
        valid=_readonly(valid),
        image_height=camera.image_height,
        image_width=camera.image_width,
    )


def points_in_mask(projection: PixelProjection, mask: Mask) -> np.ndarray:
    """Indices of points whose valid projection lands on a true mask pixel.

    Returned ascending; int64.
    """
    if mask.shape != (projection.image_height, projection.image_width):
        raise DimensionMismatch(
            f"mask {mask.id} has shape {mask.shape}, projection is "
            f"({projection.image_height}, {projection.image_width})"
        )
    idx = np.nonzero(projection.valid)[0]
    if idx.size == 0:
        return idx.astype(np.int64)
    inside = mask.bitmap[projection.v[idx], projection.u[idx]]
    return idx[inside].astype(np.int64)
