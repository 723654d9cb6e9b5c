"""Pinhole camera model, rigid poses, projection and differentiable warping.

Implements view synthesis: pixels of a target view are backprojected with a
depth map, moved by a target-to-source rigid transform, reprojected into the
source camera, and the source image is bilinearly sampled at the resulting
continuous coordinates. Also provides the closed-form derivative of those
sample coordinates with respect to depth, used by the depth optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, DepthMap, ImageGrid, _frozen

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics (focal lengths and principal point, in pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")

    def scaled(self, factor: int) -> "CameraModel":
        """Intrinsics of the same camera after s×s block-downsampling the image.

        Uses the pixel-center convention: original column u maps to
        (u - (s-1)/2) / s in the downsampled image.
        """
        s = float(factor)
        off = (s - 1.0) / 2.0
        return CameraModel(self.fx / s, self.fy / s, (self.cx - off) / s, (self.cy - off) / s)


@dataclass(frozen=True, eq=False)
class RigidPose:
    """SE(3) transform x' = R @ x + t with R orthonormal, det(R) = 1."""

    rotation: np.ndarray
    translation: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, RigidPose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("RigidPose expects a 3×3 rotation and a 3-vector translation")
        if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("rotation is not orthonormal within 1e-6")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation determinant differs from 1 by more than 1e-6")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_translation(t) -> "RigidPose":
        return RigidPose(np.eye(3), np.asarray(t, dtype=np.float64))

    @staticmethod
    def rotation_y(angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidPose":
        c, s = np.cos(angle), np.sin(angle)
        r = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        return RigidPose(r, np.asarray(translation, dtype=np.float64))

    def is_identity(self) -> bool:
        return bool(
            np.array_equal(self.rotation, np.eye(3)) and not self.translation.any()
        )

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self ∘ other: apply ``other`` first, then ``self``."""
        return RigidPose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidPose":
        rt = self.rotation.T
        return RigidPose(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (..., 3) array of points."""
        return points @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Projection:
    """Continuous sample coordinates (H×W×2, u then v) and post-transform depth."""

    coords: np.ndarray
    depth: np.ndarray


@dataclass(frozen=True)
class WarpResult:
    """A synthesized view plus its validity mask.

    Validity is 0 exactly where the sample coordinates leave
    [0, W-1] × [0, H-1] or the projected depth is non-positive.
    """

    image: ImageGrid
    validity: BinaryMask


def _pixel_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    return np.meshgrid(u, v)


def project(d: DepthMap, pose: RigidPose, cam: CameraModel) -> Projection:
    """Backproject each pixel with its depth, transform, and reproject.

    Pixels whose transformed depth is non-positive get the sentinel
    coordinates (-1, -1), which downstream sampling treats as out of view.
    The identity pose returns the pixel grid exactly.
    """
    h, w = d.height, d.width
    u, v = _pixel_grid(h, w)
    if pose.is_identity():
        coords = np.stack([u, v], axis=-1)
        return Projection(coords, d.data.copy())

    a = (u - cam.cx) / cam.fx
    b = (v - cam.cy) / cam.fy
    rays = np.stack([a, b, np.ones_like(a)], axis=0)
    r = np.einsum("ij,jhw->ihw", pose.rotation, rays)
    z = d.data
    px = z * r[0] + pose.translation[0]
    py = z * r[1] + pose.translation[1]
    pz = z * r[2] + pose.translation[2]

    valid = pz > 0.0
    safe_z = np.where(valid, pz, 1.0)
    up = cam.fx * px / safe_z + cam.cx
    vp = cam.fy * py / safe_z + cam.cy
    up = np.where(valid, up, -1.0)
    vp = np.where(valid, vp, -1.0)
    return Projection(np.stack([up, vp], axis=-1), pz)


_BORDER_EPS = 1e-9


def _snap_to_border(x: np.ndarray, limit: float) -> np.ndarray:
    """Pull coordinates within 1e-9 of the valid range onto its boundary.

    Projection arithmetic can land a mathematically-on-border coordinate a
    few ulps outside (e.g. the top row under a pure translation); such
    sub-geometric jitter must not flip validity.
    """
    x = np.where((x < 0.0) & (x >= -_BORDER_EPS), 0.0, x)
    return np.where((x > limit) & (x <= limit + _BORDER_EPS), limit, x)


def sample_bilinear(data: np.ndarray, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly sample an H×W×C array at continuous (u, v) coordinates.

    Returns (values, valid). Out-of-bounds coordinates yield value 0 and
    valid False; in-bounds integer coordinates reproduce source values
    exactly because the interpolation weights collapse to {0, 1}. Coordinates
    within 1e-9 of the border count as on it.
    """
    if coords.ndim != 3 or coords.shape[2] != 2:
        raise ValueError(f"coords must be H×W×2, got shape {coords.shape}")
    h, w = data.shape[:2]
    u = _snap_to_border(coords[:, :, 0], w - 1.0)
    v = _snap_to_border(coords[:, :, 1], h - 1.0)
    valid = (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)

    u0 = np.floor(u)
    v0 = np.floor(v)
    fu = u - u0
    fv = v - v0
    u0i = np.clip(u0.astype(np.int64), 0, w - 1)
    u1i = np.clip(u0i + 1, 0, w - 1)
    v0i = np.clip(v0.astype(np.int64), 0, h - 1)
    v1i = np.clip(v0i + 1, 0, h - 1)

    fu = fu[:, :, None]
    fv = fv[:, :, None]
    vals = (
        (1.0 - fu) * (1.0 - fv) * data[v0i, u0i]
        + fu * (1.0 - fv) * data[v0i, u1i]
        + (1.0 - fu) * fv * data[v1i, u0i]
        + fu * fv * data[v1i, u1i]
    )
    vals = vals * valid[:, :, None]
    return vals, valid


def sample_bilinear_gradient(
    data: np.ndarray, coords: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Spatial derivative of the bilinear sample w.r.t. the (u, v) coordinates.

    Exact inside each interpolation cell. Returns (d/du, d/dv), both H×W×C,
    zero where the coordinates are out of bounds.
    """
    h, w = data.shape[:2]
    u = _snap_to_border(coords[:, :, 0], w - 1.0)
    v = _snap_to_border(coords[:, :, 1], h - 1.0)
    valid = (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)

    u0 = np.floor(u)
    v0 = np.floor(v)
    fu = (u - u0)[:, :, None]
    fv = (v - v0)[:, :, None]
    u0i = np.clip(u0.astype(np.int64), 0, w - 1)
    u1i = np.clip(u0i + 1, 0, w - 1)
    v0i = np.clip(v0.astype(np.int64), 0, h - 1)
    v1i = np.clip(v0i + 1, 0, h - 1)

    i00 = data[v0i, u0i]
    i01 = data[v0i, u1i]
    i10 = data[v1i, u0i]
    i11 = data[v1i, u1i]
    du = (1.0 - fv) * (i01 - i00) + fv * (i11 - i10)
    dv = (1.0 - fu) * (i10 - i00) + fu * (i11 - i01)
    du = du * valid[:, :, None]
    dv = dv * valid[:, :, None]
    return du, dv


def bilinear_sample(src: ImageGrid, coords: np.ndarray) -> WarpResult:
    """Sample an image at continuous coordinates; see :func:`sample_bilinear`."""
    vals, valid = sample_bilinear(src.data, coords)
    return WarpResult(ImageGrid(vals), BinaryMask(valid.astype(np.uint8)))


def inverse_warp(src: ImageGrid, d: DepthMap, pose: RigidPose, cam: CameraModel) -> WarpResult:
    """Synthesize the target view from a source image, a depth map, and a pose."""
    proj = project(d, pose, cam)
    return bilinear_sample(src, proj.coords)


def warp_jacobian_depth(d: DepthMap, pose: RigidPose, cam: CameraModel) -> np.ndarray:
    """Per-pixel derivative (∂u'/∂d, ∂v'/∂d) of the sample coordinates.

    With ray r = R @ K⁻¹ (u, v, 1) and transformed depth z' = d·r_z + t_z:

        ∂u'/∂d = fx (r_x t_z - t_x r_z) / z'²
        ∂v'/∂d = fy (r_y t_z - t_y r_z) / z'²

    Returns an H×W×2 field, zero where the projection is invalid (z' ≤ 0).
    """
    h, w = d.height, d.width
    u, v = _pixel_grid(h, w)
    a = (u - cam.cx) / cam.fx
    b = (v - cam.cy) / cam.fy
    rays = np.stack([a, b, np.ones_like(a)], axis=0)
    r = np.einsum("ij,jhw->ihw", pose.rotation, rays)
    tx, ty, tz = pose.translation
    pz = d.data * r[2] + tz
    valid = pz > 0.0
    safe_z2 = np.where(valid, pz * pz, 1.0)
    du = cam.fx * (r[0] * tz - tx * r[2]) / safe_z2
    dv = cam.fy * (r[1] * tz - ty * r[2]) / safe_z2
    du = np.where(valid, du, 0.0)
    dv = np.where(valid, dv, 0.0)
    return np.stack([du, dv], axis=-1)
