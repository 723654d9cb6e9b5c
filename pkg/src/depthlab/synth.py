"""Analytic synthetic scenes: textured fronto-parallel planes, moving sprites,
a camera trajectory, and exact ground truth.

A scene is a background plane plus rectangular sprites at fixed depths, all
parallel to the world XY plane. Sprites translate in the plane at constant
velocity (given in pixels per frame as seen by the canonical camera at the
world origin). Rendering intersects each pixel ray with the planes
analytically, so ground-truth depth and the dynamic-region oracle are exact.
Textures are seeded value noise evaluated in world coordinates, making every
render a pure function of the scene description.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import BinaryMask, DepthMap, ImageGrid
from .geometry import CameraModel, RigidPose

_CHANNEL_SEED_STRIDE = 7919


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic lattice hash to [0, 1); integer mixing, no RNG state."""
    with np.errstate(over="ignore"):
        h = (
            ix.astype(np.int64).view(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
            + iy.astype(np.int64).view(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
            + np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * np.uint64(0xD6E8FEB86659FD93)
        )
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xFF51AFD7ED558CCD)
        h ^= h >> np.uint64(29)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _lattice_noise(x: np.ndarray, y: np.ndarray, seed: int) -> np.ndarray:
    i0 = np.floor(x)
    j0 = np.floor(y)
    tx = x - i0
    ty = y - j0
    # smoothstep keeps the field C1, so bilinear resampling stays accurate
    tx = tx * tx * (3.0 - 2.0 * tx)
    ty = ty * ty * (3.0 - 2.0 * ty)
    i0 = i0.astype(np.int64)
    j0 = j0.astype(np.int64)
    n00 = _hash01(i0, j0, seed)
    n01 = _hash01(i0 + 1, j0, seed)
    n10 = _hash01(i0, j0 + 1, seed)
    n11 = _hash01(i0 + 1, j0 + 1, seed)
    top = n00 + tx * (n01 - n00)
    bot = n10 + tx * (n11 - n10)
    return top + ty * (bot - top)


def value_noise(x: np.ndarray, y: np.ndarray, seed: int, cell: float) -> np.ndarray:
    """Two-octave value noise in [0, 1] over world coordinates."""
    n = 0.65 * _lattice_noise(x / cell, y / cell, seed)
    n += 0.35 * _lattice_noise(2.0 * x / cell, 2.0 * y / cell, seed + 101)
    return n


def plane_texture(
    x: np.ndarray, y: np.ndarray, seed: int, contrast: float, cell: float, level: float = 0.5
) -> np.ndarray:
    """Seeded texture centered on ``level`` with the given contrast, clipped to [0, 1]."""
    return np.clip(level + contrast * (value_noise(x, y, seed, cell) - 0.5), 0.0, 1.0)


@dataclass(frozen=True)
class BackgroundSpec:
    depth: float
    seed: int
    contrast: float = 0.9
    cell_px: float = 8.0

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError(f"background depth must be positive, got {self.depth}")
        if not 0.0 < self.contrast <= 1.0:
            raise ValueError(f"contrast must be in (0, 1], got {self.contrast}")


@dataclass(frozen=True)
class SpriteSpec:
    """Rectangle on a fronto-parallel plane.

    ``center`` (u, v), ``size`` (width, height) and ``velocity`` (per frame)
    are all in pixels as seen by the canonical camera at the world origin;
    they are converted to world units at the sprite's depth. ``level`` is the
    sprite's mean luminance: the default low contrast around a level far from
    the background mean models weakly textured moving objects, the case that
    corrupts cost-volume matching the most.
    """

    center: tuple[float, float]
    size: tuple[float, float]
    depth: float
    seed: int
    velocity: tuple[float, float] = (0.0, 0.0)
    level: float = 0.2
    contrast: float = 0.15
    cell_px: float = 5.0

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError(f"sprite depth must be positive, got {self.depth}")
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError(f"sprite size must be positive, got {self.size}")
        if not 0.0 <= self.level <= 1.0:
            raise ValueError(f"sprite level must be in [0, 1], got {self.level}")

    @property
    def is_moving(self) -> bool:
        return self.velocity[0] != 0.0 or self.velocity[1] != 0.0


@dataclass(frozen=True)
class SceneSpec:
    """World description: background, sprites, camera trajectory, intrinsics."""

    size: tuple[int, int]  # (height, width)
    cam: CameraModel
    background: BackgroundSpec
    sprites: tuple[SpriteSpec, ...] = ()
    trajectory: tuple[RigidPose, ...] = ()
    channels: int = 1
    seed: int = 0  # generator seed, kept as metadata for reports

    def __post_init__(self):
        if self.size[0] < 2 or self.size[1] < 2:
            raise ValueError(f"scene size too small: {self.size}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        for sp in self.sprites:
            if sp.depth >= self.background.depth:
                raise ValueError(
                    f"sprite depth {sp.depth} must be closer than background "
                    f"{self.background.depth}"
                )
        object.__setattr__(self, "sprites", tuple(self.sprites))
        object.__setattr__(self, "trajectory", tuple(self.trajectory))


@dataclass(frozen=True)
class FrameTriplet:
    """Frames (t-1, t, t+1) with exact ground truth for the center frame."""

    images: tuple[ImageGrid, ImageGrid, ImageGrid]
    gt_depth: DepthMap
    pose_prev: RigidPose  # target -> previous source
    pose_next: RigidPose  # target -> next source
    dynamic_oracle: BinaryMask
    cam: CameraModel

    def __post_init__(self):
        shape = self.images[1].data.shape
        for img in self.images:
            if img.data.shape != shape:
                raise ValueError("triplet frames must share a shape")
        if (self.gt_depth.height, self.gt_depth.width) != shape[:2]:
            raise ValueError("ground-truth depth shape differs from frames")
        if (self.dynamic_oracle.height, self.dynamic_oracle.width) != shape[:2]:
            raise ValueError("oracle mask shape differs from frames")

    @property
    def target(self) -> ImageGrid:
        return self.images[1]

    @property
    def sources(self) -> tuple[ImageGrid, ImageGrid]:
        return self.images[0], self.images[2]

    @property
    def poses(self) -> tuple[RigidPose, RigidPose]:
        return self.pose_prev, self.pose_next


def _render_arrays(spec: SceneSpec, frame_index: int):
    if not 0 <= frame_index < len(spec.trajectory):
        raise ValueError(f"frame index {frame_index} outside trajectory")
    pose = spec.trajectory[frame_index]
    cam = spec.cam
    h, w = spec.size
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dirs = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u)])
    dw = np.einsum("ij,jhw->ihw", pose.rotation, dirs)
    center = pose.translation
    rz = dw[2]
    if np.any(rz <= 1e-12):
        raise ValueError("camera ray parallel to or facing away from the scene planes")

    def hit(plane_z: float):
        lam = (plane_z - center[2]) / rz
        return lam, center[0] + lam * dw[0], center[1] + lam * dw[1]

    bg = spec.background
    lam, x, y = hit(bg.depth)
    if np.any(lam <= 0.0):
        raise ValueError("camera is at or beyond the background plane")
    cell = bg.cell_px * bg.depth / cam.fx
    img = np.stack(
        [
            plane_texture(x, y, bg.seed + _CHANNEL_SEED_STRIDE * c, bg.contrast, cell)
            for c in range(spec.channels)
        ],
        axis=-1,
    )
    depth = lam.copy()
    moving = np.zeros((h, w), dtype=bool)

    for sp in spec.sprites:
        lam, x, y = hit(sp.depth)
        sx = (sp.center[0] - cam.cx) / cam.fx * sp.depth + sp.velocity[0] * sp.depth / cam.fx * frame_index
        sy = (sp.center[1] - cam.cy) / cam.fy * sp.depth + sp.velocity[1] * sp.depth / cam.fy * frame_index
        half_w = 0.5 * sp.size[0] * sp.depth / cam.fx
        half_h = 0.5 * sp.size[1] * sp.depth / cam.fy
        lx = x - sx
        ly = y - sy
        inside = (lam > 0.0) & (np.abs(lx) <= half_w) & (np.abs(ly) <= half_h)
        if not inside.any():
            continue
        cell = sp.cell_px * sp.depth / cam.fx
        for c in range(spec.channels):
            tex = plane_texture(
                lx, ly, sp.seed + _CHANNEL_SEED_STRIDE * c, sp.contrast, cell, level=sp.level
            )
            img[:, :, c] = np.where(inside, tex, img[:, :, c])
        depth = np.where(inside, lam, depth)
        if sp.is_moving:
            moving |= inside
        else:
            moving &= ~inside
    return img, depth, moving


def render(spec: SceneSpec, frame_index: int) -> tuple[ImageGrid, DepthMap]:
    """Painter's-algorithm render of one frame plus its exact depth."""
    img, depth, _ = _render_arrays(spec, frame_index)
    return ImageGrid(img), DepthMap(depth)


def generate_triplet(spec: SceneSpec) -> FrameTriplet:
    """Render frames 0, 1, 2 as (t-1, t, t+1) with poses and the oracle mask.

    Trajectory poses are camera-to-world, so the target-to-source transforms
    are T_s⁻¹ ∘ T_t.
    """
    if len(spec.trajectory) < 3:
        raise ValueError(f"triplet needs at least 3 trajectory poses, got {len(spec.trajectory)}")
    frames = [_render_arrays(spec, i) for i in range(3)]
    t_prev, t_mid, t_next = spec.trajectory[0], spec.trajectory[1], spec.trajectory[2]
    return FrameTriplet(
        images=tuple(ImageGrid(f[0]) for f in frames),
        gt_depth=DepthMap(frames[1][1]),
        pose_prev=t_prev.inverse().compose(t_mid),
        pose_next=t_next.inverse().compose(t_mid),
        dynamic_oracle=BinaryMask(frames[1][2].astype(np.uint8)),
        cam=spec.cam,
    )


def default_dynamic_scene(
    seed: int,
    height: int = 64,
    width: int = 96,
    n_sprites: int = 2,
    baseline: float = 1.2,
    dynamic: bool = True,
) -> SceneSpec:
    """Seeded standard scene: textured background plane, weakly textured
    sprites moving mostly across the epipolar direction, camera translating
    along +x. Every parameter derives from the seed.

    Sprite motion is dominantly vertical on purpose: motion along the
    camera baseline can be explained away by a wrong depth (a consistent
    spurious match), while cross-epipolar motion cannot, which is the
    failure mode the uncertainty fusion has to flag. Sprites are placed so
    that both source-frame warps of their footprint stay inside the image.
    """
    rng = np.random.default_rng(seed)
    cam = CameraModel(fx=120.0, fy=120.0, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)
    background = BackgroundSpec(
        depth=float(rng.uniform(16.0, 22.0)), seed=int(rng.integers(1 << 31))
    )
    sprites = []
    for k in range(n_sprites):
        slot = 0.34 + 0.30 * (k + rng.uniform(0.15, 0.85)) / n_sprites
        center = (width * slot, float(rng.uniform(0.34 * height, 0.62 * height)))
        vy = float(rng.uniform(4.0, 6.0)) * (1.0 if k % 2 == 0 else -1.0)
        vx = float(rng.uniform(-1.5, 1.5))
        level = float(rng.uniform(0.12, 0.28)) if k % 2 == 0 else float(rng.uniform(0.72, 0.88))
        sprites.append(
            SpriteSpec(
                center=center,
                size=(float(rng.uniform(14.0, 18.0)), float(rng.uniform(12.0, 16.0))),
                depth=float(rng.uniform(7.0, 11.0)),
                seed=int(rng.integers(1 << 31)),
                velocity=(vx, vy) if dynamic else (0.0, 0.0),
                level=level,
            )
        )
    trajectory = tuple(
        RigidPose.from_translation(((f - 1) * baseline, 0.0, 0.0)) for f in range(3)
    )
    return SceneSpec(
        size=(height, width),
        cam=cam,
        background=background,
        sprites=tuple(sprites),
        trajectory=trajectory,
        seed=seed,
    )


def default_static_scene(
    seed: int, height: int = 64, width: int = 96, n_sprites: int = 2, baseline: float = 1.2
) -> SceneSpec:
    """Same construction with zero sprite velocities."""
    return default_dynamic_scene(
        seed, height=height, width=width, n_sprites=n_sprites, baseline=baseline, dynamic=False
    )


def matching_test_scene(seed: int, depth: float, baseline: float = 1.6) -> SceneSpec:
    """Bare textured plane at an exact depth, for plane-sweep verification."""
    cam = CameraModel(fx=120.0, fy=120.0, cx=47.5, cy=31.5)
    rng = np.random.default_rng(seed)
    return SceneSpec(
        size=(64, 96),
        cam=cam,
        background=BackgroundSpec(depth=depth, seed=int(rng.integers(1 << 31))),
        sprites=(),
        trajectory=tuple(RigidPose.from_translation(((f - 1) * baseline, 0.0, 0.0)) for f in range(3)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# JSON scene description (the on-disk schema used by the CLI).
# ---------------------------------------------------------------------------


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ValueError(f"missing required field '{where}{key}'")
    return doc[key]


def scene_spec_from_json(doc: dict) -> SceneSpec:
    """Build a scene from its JSON document; errors name the offending field."""
    size = _require(doc, "size", "")
    if not (isinstance(size, (list, tuple)) and len(size) == 2):
        raise ValueError("field 'size' must be [height, width]")
    intr = _require(doc, "intrinsics", "")
    cam = CameraModel(
        fx=float(_require(intr, "fx", "intrinsics.")),
        fy=float(_require(intr, "fy", "intrinsics.")),
        cx=float(_require(intr, "cx", "intrinsics.")),
        cy=float(_require(intr, "cy", "intrinsics.")),
    )
    bg_doc = _require(doc, "background", "")
    background = BackgroundSpec(
        depth=float(_require(bg_doc, "depth", "background.")),
        seed=int(_require(bg_doc, "seed", "background.")),
        contrast=float(bg_doc.get("contrast", 0.9)),
        cell_px=float(bg_doc.get("cell_px", 8.0)),
    )
    sprites = []
    for i, sp in enumerate(doc.get("sprites", [])):
        where = f"sprites[{i}]."
        sprites.append(
            SpriteSpec(
                center=tuple(float(x) for x in _require(sp, "center", where)),
                size=tuple(float(x) for x in _require(sp, "size", where)),
                depth=float(_require(sp, "depth", where)),
                seed=int(_require(sp, "seed", where)),
                velocity=tuple(float(x) for x in sp.get("velocity", (0.0, 0.0))),
                level=float(sp.get("level", 0.2)),
                contrast=float(sp.get("contrast", 0.15)),
                cell_px=float(sp.get("cell_px", 5.0)),
            )
        )
    poses = []
    for i, entry in enumerate(_require(doc, "trajectory", "")):
        where = f"trajectory[{i}]."
        t = np.asarray(_require(entry, "translation", where), dtype=np.float64)
        r = np.asarray(entry.get("rotation", np.eye(3)), dtype=np.float64)
        poses.append(RigidPose(r, t))
    return SceneSpec(
        size=(int(size[0]), int(size[1])),
        cam=cam,
        background=background,
        sprites=tuple(sprites),
        trajectory=tuple(poses),
        channels=int(doc.get("channels", 1)),
        seed=int(doc.get("seed", 0)),
    )


def scene_spec_to_json(spec: SceneSpec) -> dict:
    return {
        "seed": spec.seed,
        "size": [spec.size[0], spec.size[1]],
        "channels": spec.channels,
        "intrinsics": {"fx": spec.cam.fx, "fy": spec.cam.fy, "cx": spec.cam.cx, "cy": spec.cam.cy},
        "background": {
            "depth": spec.background.depth,
            "seed": spec.background.seed,
            "contrast": spec.background.contrast,
            "cell_px": spec.background.cell_px,
        },
        "sprites": [
            {
                "center": list(sp.center),
                "size": list(sp.size),
                "depth": sp.depth,
                "seed": sp.seed,
                "velocity": list(sp.velocity),
                "level": sp.level,
                "contrast": sp.contrast,
                "cell_px": sp.cell_px,
            }
            for sp in spec.sprites
        ],
        "trajectory": [
            {"rotation": p.rotation.tolist(), "translation": p.translation.tolist()}
            for p in spec.trajectory
        ],
    }
