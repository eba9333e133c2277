"""Software rasterizer: orthographic point-sampled renders of block scenes.

Produces the input image and class-id segmentation mask for any trajectory
frame. No anti-aliasing or float blending in the mask path, so outputs are
bit-reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .physics import Trajectory
from .scenegen import RenderParams

RESOLUTION = 56
MASK_TIMES = (0.0, 1.0, 2.0, 4.0)

# class id -> RGB; 0 is background
PALETTE = {
    1: (220, 40, 40),
    2: (40, 180, 60),
    3: (45, 90, 220),
    4: (230, 210, 40),
}
GROUND_RGB = (35, 35, 35)
GROUND_BAND_PX = 2


class TimeOutOfRangeError(ValueError):
    """Requested render time lies outside the captured trajectory."""


@dataclass(frozen=True)
class Camera:
    """Square orthographic window: world center and height, pixel size."""

    center_x: float
    center_y: float
    height: float
    resolution: int = RESOLUTION

    def __post_init__(self):
        if self.height <= 0 or self.resolution <= 0:
            raise ValueError("camera window and resolution must be positive")

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World coordinates of pixel centers: (ys by row, xs by column)."""
        res = self.resolution
        step = self.height / res
        xs = self.center_x - self.height / 2 + (np.arange(res) + 0.5) * step
        ys = self.center_y + self.height / 2 - (np.arange(res) + 0.5) * step
        return ys, xs


def camera_for_sample(n_blocks: int, render_params: RenderParams,
                      side: float = 1.0, resolution: int = RESOLUTION) -> Camera:
    """Window sized to the tower, scaled by jitter, ground near the bottom."""
    height = (n_blocks + 1.5) * side * render_params.camera_scale
    return Camera(
        center_x=render_params.camera_shift,
        center_y=height / 2 - 0.75 * side,
        height=height,
        resolution=resolution,
    )


def rasterize(poses, class_ids, cam: Camera, style: RenderParams,
              side: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Render one frame to (RGB image, class-id mask), both uint8.

    poses is (n, >=3) array-like of (x, y, theta) rows, bottom-to-top; the
    highest-indexed block wins overlapping pixels. Pixels are classified by
    a point-in-oriented-box test at their centers.
    """
    poses = np.asarray(poses, dtype=float)
    res = cam.resolution
    ys, xs = cam.pixel_centers()
    gx = np.broadcast_to(xs[None, :], (res, res))
    gy = np.broadcast_to(ys[:, None], (res, res))

    img = np.empty((res, res, 3), dtype=float)
    img[:] = style.background * 255.0
    mask = np.zeros((res, res), dtype=np.uint8)

    ground_rows = np.where(ys < 0)[0][:GROUND_BAND_PX]
    img[ground_rows] = GROUND_RGB

    h = side / 2.0
    for i in range(poses.shape[0]):
        x, y, theta = poses[i, 0], poses[i, 1], poses[i, 2]
        c, s = math.cos(theta), math.sin(theta)
        dx = gx - x
        dy = gy - y
        lx = c * dx + s * dy
        ly = -s * dx + c * dy
        inside = (np.abs(lx) <= h) & (np.abs(ly) <= h)
        mask[inside] = class_ids[i]
        img[inside] = PALETTE[class_ids[i]]

    img = np.floor(img * style.brightness + 0.5)
    return np.clip(img, 0, 255).astype(np.uint8), mask


def render_sequence(traj: Trajectory, class_ids, cam: Camera,
                    style: RenderParams, times=MASK_TIMES,
                    side: float = 1.0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Render the captured frame nearest each requested time."""
    out = []
    for t in times:
        if not 0.0 <= t <= traj.duration + 1e-9:
            raise TimeOutOfRangeError(f"time {t}s outside [0, {traj.duration}]s")
        frame = traj.frame_at_time(t)
        out.append(rasterize(traj.poses[frame], class_ids, cam, style, side=side))
    return out
