"""Analytic toy scene and style fixtures for end-to-end runs.

The scene lives in the unit cube: a backdrop wall plus two spheres,
each with its own smooth color field, giving three ground-truth
regions. Cameras sit on a shallow arc so every pixel of every view is
covered by geometry, which keeps photometric and segmentation targets
fully defined.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .dataset import save_camera_json
from .geometry import BoundingBox
from .images import save_image
from .rendering import Camera, _weights, sample_along_rays
from .segmentation import RegionMap, save_region_map

REGION_WALL = 0
REGION_SPHERE_A = 1
REGION_SPHERE_B = 2
NUM_TOY_REGIONS = 3

_WALL_Z = 0.85
_EDGE = 0.01
_DENSITY = 60.0
_SPHERES = (
    ((0.36, 0.44, 0.52), 0.17),
    ((0.67, 0.56, 0.50), 0.15),
)
_LOOK_AT = np.array([0.5, 0.5, 0.62])
_RADIUS = 1.55


def toy_bounding_box() -> BoundingBox:
    return BoundingBox.unit()


def _object_densities(points: torch.Tensor) -> torch.Tensor:
    """Per-object density fields [N, 3]: wall, sphere A, sphere B."""
    z = points[:, 2]
    wall = torch.sigmoid((z - _WALL_Z) / _EDGE)
    parts = [wall]
    for center, radius in _SPHERES:
        dist = (points - torch.tensor(center, dtype=points.dtype)).norm(dim=1)
        parts.append(torch.sigmoid((radius - dist) / _EDGE))
    return _DENSITY * torch.stack(parts, dim=1)


def _object_colors(points: torch.Tensor) -> torch.Tensor:
    """Per-object smooth rgb fields [N, 3, 3]."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    wall = torch.stack(
        [
            0.62 + 0.10 * torch.sin(7.1 * x),
            0.66 + 0.08 * torch.sin(5.3 * y + 1.0),
            0.78 + 0.06 * torch.sin(4.7 * (x + y)),
        ],
        dim=1,
    )
    sphere_a = torch.stack(
        [
            0.82 + 0.08 * torch.sin(9.0 * z),
            0.30 + 0.05 * torch.sin(8.0 * y),
            torch.full_like(x, 0.24),
        ],
        dim=1,
    )
    sphere_b = torch.stack(
        [
            torch.full_like(x, 0.22),
            0.68 + 0.07 * torch.sin(8.3 * x),
            0.34 + 0.06 * torch.sin(7.7 * z),
        ],
        dim=1,
    )
    return torch.stack([wall, sphere_a, sphere_b], dim=1).clamp(0.0, 1.0)


def toy_density(points: torch.Tensor) -> torch.Tensor:
    """Total density at [N, 3] points."""
    return _object_densities(points).sum(dim=1)


def toy_color(points: torch.Tensor) -> torch.Tensor:
    """Density-weighted blend of the object colors at [N, 3] points."""
    dens = _object_densities(points)
    colors = _object_colors(points)
    total = dens.sum(dim=1, keepdim=True).clamp_min(1e-12)
    return (dens.unsqueeze(-1) * colors).sum(dim=1) / total


def toy_cameras(num_views: int = 20, size: int = 64) -> list[Camera]:
    """Cameras on a shallow arc, all looking at the scene center."""
    cameras = []
    angles = np.linspace(-0.35, 0.35, num_views)
    for theta in angles:
        offset = np.array([np.sin(theta), 0.0, -np.cos(theta)]) * _RADIUS
        pos = _LOOK_AT + offset
        forward = _LOOK_AT - pos
        forward = forward / np.linalg.norm(forward)
        right = np.cross([0.0, 1.0, 0.0], forward)
        right = right / np.linalg.norm(right)
        down = np.cross(forward, right)
        pose = np.eye(4)
        pose[:3, 0] = right
        pose[:3, 1] = down
        pose[:3, 2] = forward
        pose[:3, 3] = pos
        f = size * 1.875
        cameras.append(
            Camera(
                width=size,
                height=size,
                fx=f,
                fy=f,
                cx=size / 2,
                cy=size / 2,
                camera_to_world=pose,
                near=1.0,
                far=2.4,
            )
        )
    return cameras


def render_ground_truth(
    camera: Camera, n_samples: int = 256
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense-quadrature render of the analytic scene.

    Returns (rgb [H,W,3], region labels [H,W], opacity [H,W]); labels are
    the argmax of per-object accumulated weight mass.
    """
    origins, dirs = camera.rays()
    n = origins.shape[0]
    near = torch.full((n,), camera.near)
    far = torch.full((n,), camera.far)
    t, positions = sample_along_rays(origins, dirs, near, far, n_samples)
    flat = positions.reshape(-1, 3)
    dens = _object_densities(flat)
    colors = _object_colors(flat)
    total = dens.sum(dim=1)
    blend = (dens.unsqueeze(-1) * colors).sum(dim=1) / total.clamp_min(1e-12).unsqueeze(-1)

    deltas = torch.diff(t, dim=1)
    deltas = torch.cat([deltas, far.unsqueeze(-1) - t[:, -1:]], dim=1)
    w = _weights(deltas, total.reshape(n, n_samples))
    rgb = (w.unsqueeze(-1) * blend.reshape(n, n_samples, 3)).sum(dim=1)
    fractions = dens / total.clamp_min(1e-12).unsqueeze(-1)
    mass = (w.unsqueeze(-1) * fractions.reshape(n, n_samples, 3)).sum(dim=1)
    labels = mass.argmax(dim=1).to(torch.int32)
    opacity = w.sum(dim=1)
    h, wid = camera.height, camera.width
    return (
        rgb.reshape(h, wid, 3).numpy().astype(np.float32),
        labels.reshape(h, wid).numpy(),
        opacity.reshape(h, wid).numpy().astype(np.float32),
    )


def make_toy_dataset(
    out_dir, num_views: int = 20, size: int = 64, n_samples: int = 256
) -> Path:
    """Write images, cameras, and ground-truth region maps for the toy scene.

    Layout: images/view_###.png, cameras.json, gt_regions/view_###.png.
    Every ray must terminate on geometry; the generator asserts full
    coverage so downstream photometric targets are never background.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "gt_regions").mkdir(parents=True, exist_ok=True)
    cameras = toy_cameras(num_views=num_views, size=size)
    frames = []
    for i, camera in enumerate(cameras):
        rgb, labels, opacity = render_ground_truth(camera, n_samples=n_samples)
        assert float(opacity.min()) >= 0.995, "toy frustum escaped the scene geometry"
        name = f"view_{i:03d}.png"
        save_image(out / "images" / name, rgb)
        save_region_map(
            out / "gt_regions" / name,
            RegionMap(labels, NUM_TOY_REGIONS, "scene"),
            source_image=f"images/{name}",
        )
        frames.append((f"images/{name}", camera.camera_to_world))
    first = cameras[0]
    save_camera_json(
        out / "cameras.json",
        width=first.width,
        height=first.height,
        fx=first.fx,
        fy=first.fy,
        cx=first.cx,
        cy=first.cy,
        frames=frames,
        near=first.near,
        far=first.far,
    )
    return out


def make_style_image(
    size: int = 128, palette: str = "duotone"
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Two-region style image split down the middle.

    "duotone" is warm left, cool right; "ember" is dark red left, amber
    right, far from duotone in every channel so stylizations toward the
    two are visibly different. Returns the [size, size, 3] image and the
    two boolean region masks.
    """
    u = np.linspace(0.0, 1.0, size, dtype=np.float32)
    uu, vv = np.meshgrid(u, u)
    left = uu < 0.5
    if palette == "duotone":
        first = np.stack(
            [
                0.85 + 0.10 * np.sin(12.0 * vv),
                0.45 + 0.10 * uu,
                np.full_like(uu, 0.20),
            ],
            axis=-1,
        )
        second = np.stack(
            [
                np.full_like(uu, 0.15),
                0.50 + 0.10 * vv,
                0.80 + 0.10 * np.sin(9.0 * uu),
            ],
            axis=-1,
        )
    elif palette == "ember":
        first = np.stack(
            [
                0.35 + 0.08 * np.sin(10.0 * vv),
                np.full_like(uu, 0.08),
                0.10 + 0.05 * uu,
            ],
            axis=-1,
        )
        second = np.stack(
            [
                0.95 - 0.05 * vv,
                0.60 + 0.08 * np.sin(7.0 * uu),
                np.full_like(uu, 0.12),
            ],
            axis=-1,
        )
    else:
        raise ValueError(f"unknown palette {palette!r}")
    image = np.zeros((size, size, 3), dtype=np.float32)
    image[left] = first[left]
    image[~left] = second[~left]
    image = np.clip(image, 0.0, 1.0)
    return image, [left, ~left]


def write_style_fixture(
    out_dir, size: int = 128, palette: str = "duotone", stem: str = "style"
) -> tuple[Path, Path]:
    """Write a style image and its region map; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image, masks = make_style_image(size=size, palette=palette)
    image_path = out / f"{stem}.png"
    save_image(image_path, image)
    labels = np.full((size, size), -1, dtype=np.int32)
    for idx, mask in enumerate(masks):
        labels[mask] = idx
    regions_path = out / f"{stem}.regions.png"
    save_region_map(
        regions_path,
        RegionMap(labels, len(masks), "style"),
        source_image=f"{stem}.png",
    )
    return image_path, regions_path


def corrupt_pose_row(cameras_json_path, row: int) -> None:
    """Damage one frame's transform in place; used by ingestion tests."""
    path = Path(cameras_json_path)
    payload = json.loads(path.read_text())
    payload["frames"][row]["transform"] = [float("nan")] * 16
    path.write_text(json.dumps(payload))
