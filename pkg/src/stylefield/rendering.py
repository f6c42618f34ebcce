"""Ray generation, stratified sampling, and transmittance-weighted integration.

Per-pixel region probabilities come from integrating the raw segmentation
logits with the same transmittance weights as color and passing the result
through a softmax, in that order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import DomainError
from .field import RadianceModel
from .geometry import BoundingBox


@dataclass
class Camera:
    """Pinhole camera, OpenCV axes (x right, y down, z forward)."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    camera_to_world: np.ndarray  # [4,4]
    near: float
    far: float

    def __post_init__(self):
        self.camera_to_world = np.asarray(self.camera_to_world, dtype=np.float64)
        if self.camera_to_world.shape != (4, 4):
            raise DomainError("camera_to_world must be a 4x4 matrix")
        if self.fx <= 0 or self.fy <= 0:
            raise DomainError("focal lengths must be positive")
        if not self.near < self.far:
            raise DomainError(f"near ({self.near}) must be < far ({self.far})")
        rot = self.camera_to_world[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-5):
            raise DomainError("camera rotation is not orthonormal")

    def rays(self) -> tuple[torch.Tensor, torch.Tensor]:
        """Unit-direction rays through all pixel centers, row-major order."""
        ys, xs = np.meshgrid(
            np.arange(self.height, dtype=np.float64),
            np.arange(self.width, dtype=np.float64),
            indexing="ij",
        )
        dirs_cam = np.stack(
            [
                (xs + 0.5 - self.cx) / self.fx,
                (ys + 0.5 - self.cy) / self.fy,
                np.ones_like(xs),
            ],
            axis=-1,
        ).reshape(-1, 3)
        rot = self.camera_to_world[:3, :3]
        origin = self.camera_to_world[:3, 3]
        dirs_world = dirs_cam @ rot.T
        dirs_world /= np.linalg.norm(dirs_world, axis=-1, keepdims=True)
        origins = np.broadcast_to(origin, dirs_world.shape).copy()
        return (
            torch.from_numpy(origins.astype(np.float32)),
            torch.from_numpy(dirs_world.astype(np.float32)),
        )


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        norm = np.linalg.norm(self.direction)
        if abs(norm - 1.0) > 1e-6:
            raise DomainError(f"ray direction must be unit length, |d| = {norm}")
        if not self.t_near < self.t_far:
            raise DomainError(f"degenerate ray: t_near={self.t_near} >= t_far={self.t_far}")


@dataclass
class RenderedPixel:
    rgb: np.ndarray  # [3] in [0,1]
    region_probs: np.ndarray  # [C], sums to 1
    opacity: float


def sample_ray(
    ray: Ray, n_samples: int, stratified: bool = False, rng_seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Strictly increasing depths in [t_near, t_far] and their positions.

    Depths sit at the midpoints of n equal bins, or jitter uniformly inside
    each bin when stratified. Deterministic for a fixed seed.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    edges = np.linspace(ray.t_near, ray.t_far, n_samples + 1)
    lo, hi = edges[:-1], edges[1:]
    if stratified:
        rng = np.random.default_rng(rng_seed)
        u = rng.random(n_samples)
    else:
        u = np.full(n_samples, 0.5)
    t = lo + u * (hi - lo)
    positions = ray.origin[None, :] + t[:, None] * ray.direction[None, :]
    return t, positions


def sample_along_rays(
    origins: torch.Tensor,
    dirs: torch.Tensor,
    t_near: torch.Tensor,
    t_far: torch.Tensor,
    n_samples: int,
    stratified: bool = False,
    seed: int = 0,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Batched bin sampling: depths [B,n] and positions [B,n,3]."""
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    b = origins.shape[0]
    steps = torch.arange(n_samples, dtype=torch.float32)
    if stratified:
        gen = torch.Generator().manual_seed(seed)
        u = torch.rand(b, n_samples, generator=gen)
    else:
        u = torch.full((b, n_samples), 0.5)
    width = ((t_far - t_near) / n_samples).unsqueeze(-1)
    t = t_near.unsqueeze(-1) + (steps.unsqueeze(0) + u) * width
    positions = origins.unsqueeze(1) + t.unsqueeze(-1) * dirs.unsqueeze(1)
    return t, positions


def _weights(deltas: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """Transmittance weights w_i = T_i * (1 - exp(-sigma_i * delta_i))."""
    optical = sigma * deltas
    alpha = 1.0 - torch.exp(-optical)
    accumulated = torch.cumsum(optical, dim=-1) - optical  # exclusive prefix sum
    transmittance = torch.exp(-accumulated)
    return transmittance * alpha


def integrate_batch(
    deltas: torch.Tensor,
    sigma: torch.Tensor,
    rgb: torch.Tensor,
    region_logits: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Differentiable core: [B,n] samples -> rgb [B,3], probs [B,C], opacity [B]."""
    w = _weights(deltas, sigma)
    out_rgb = (w.unsqueeze(-1) * rgb).sum(dim=1)
    raw_regions = (w.unsqueeze(-1) * region_logits).sum(dim=1)
    probs = torch.softmax(raw_regions, dim=-1)
    opacity = w.sum(dim=-1)
    return out_rgb, probs, opacity


def integrate(
    t_values,
    sigma,
    rgb,
    region_logits,
    t_far: float | None = None,
    deltas=None,
) -> RenderedPixel:
    """Integrate one ray's samples into a rendered pixel.

    With no explicit deltas, forward differences are used and the last
    sample extends to t_far.
    """
    t = np.asarray(t_values, dtype=np.float64)
    sig = np.asarray(sigma, dtype=np.float64)
    col = np.asarray(rgb, dtype=np.float64)
    logits = np.asarray(region_logits, dtype=np.float64)
    if t.ndim != 1 or len(t) == 0:
        raise DomainError("t_values must be a non-empty 1-d sequence")
    if np.any(np.diff(t) <= 0):
        raise DomainError("t_values must be strictly increasing")
    if np.any(sig < 0):
        raise DomainError("density must be non-negative")
    if deltas is None:
        if t_far is None:
            raise DomainError("either deltas or t_far must be provided")
        deltas = np.diff(t, append=t_far)
        if deltas[-1] < 0:
            raise DomainError("t_far must be >= the last sample")
    d = torch.from_numpy(np.asarray(deltas, dtype=np.float64)).unsqueeze(0)
    out_rgb, probs, opacity = integrate_batch(
        d,
        torch.from_numpy(sig).unsqueeze(0),
        torch.from_numpy(col).unsqueeze(0),
        torch.from_numpy(logits).unsqueeze(0),
    )
    return RenderedPixel(
        rgb=out_rgb[0].numpy(),
        region_probs=probs[0].numpy(),
        opacity=float(opacity[0]),
    )


def ray_box_intersection(
    origins: torch.Tensor, dirs: torch.Tensor, box: BoundingBox
) -> tuple[torch.Tensor, torch.Tensor]:
    """Slab test: entry and exit depths of each ray against the box."""
    lo = torch.as_tensor(box.min_corner, dtype=origins.dtype)
    hi = torch.as_tensor(box.max_corner, dtype=origins.dtype)
    inv = 1.0 / dirs
    t0 = (lo - origins) * inv
    t1 = (hi - origins) * inv
    near = torch.minimum(t0, t1)
    far = torch.maximum(t0, t1)
    near = torch.nan_to_num(near, nan=-torch.inf)
    far = torch.nan_to_num(far, nan=torch.inf)
    return near.amax(dim=-1), far.amin(dim=-1)


def render_rays(
    model: RadianceModel,
    origins: torch.Tensor,
    dirs: torch.Tensor,
    near: float,
    far: float,
    style_index: int = 0,
    n_samples: int = 128,
    stratified: bool = False,
    seed: int = 0,
) -> dict[str, torch.Tensor]:
    """Differentiable render of a ray batch, clipped to the scene box.

    Rays missing the box contribute zero color and opacity and uniform
    region probabilities.
    """
    b = origins.shape[0]
    box_near, box_far = ray_box_intersection(origins, dirs, model.bounding_box)
    t_near = torch.clamp(box_near, min=near)
    t_far = torch.clamp(box_far, max=far)
    hit = t_far > t_near
    c = model.num_scene_regions

    out_rgb = torch.zeros(b, 3)
    out_probs = torch.full((b, c), 1.0 / c)
    out_opacity = torch.zeros(b)
    if hit.any():
        # Nudge inward so sampled points stay inside the box under float error.
        span = (t_far[hit] - t_near[hit]) * 1e-4
        t, positions = sample_along_rays(
            origins[hit],
            dirs[hit],
            t_near[hit] + span,
            t_far[hit] - span,
            n_samples,
            stratified=stratified,
            seed=seed,
        )
        flat = positions.reshape(-1, 3)
        samples = model.query(flat, style_index)
        n_hit = int(hit.sum())
        sigma = samples.sigma.reshape(n_hit, n_samples)
        rgb = samples.rgb.reshape(n_hit, n_samples, 3)
        logits = samples.region_logits.reshape(n_hit, n_samples, c)
        deltas = torch.cat(
            [t[:, 1:] - t[:, :-1], (t_far[hit] - span - t[:, -1]).clamp_min(0).unsqueeze(-1)],
            dim=-1,
        )
        rgb_hit, probs_hit, opacity_hit = integrate_batch(deltas, sigma, rgb, logits)
        out_rgb = torch.zeros(b, 3, dtype=rgb_hit.dtype)
        out_probs = torch.full((b, c), 1.0 / c, dtype=probs_hit.dtype)
        out_opacity = torch.zeros(b, dtype=opacity_hit.dtype)
        out_rgb[hit] = rgb_hit
        out_probs[hit] = probs_hit
        out_opacity[hit] = opacity_hit
    return {"rgb": out_rgb, "region_probs": out_probs, "opacity": out_opacity}


@dataclass
class RenderResult:
    rgb: np.ndarray  # [H,W,3] float32
    region_probs: np.ndarray  # [H,W,C] float32
    opacity: np.ndarray  # [H,W] float32

    def labels(self) -> np.ndarray:
        return self.region_probs.argmax(axis=-1).astype(np.int32)


def render_view(
    model: RadianceModel,
    camera: Camera,
    style_index: int = 0,
    chunk_size: int = 4096,
    n_samples: int = 128,
    white_background: bool = False,
) -> RenderResult:
    """Full-frame render in pixel chunks; output independent of chunking.

    Chunks are floored at 64 rays: very small float32 batches can take a
    different matmul path and perturb low-order bits.
    """
    if chunk_size < 1:
        raise DomainError("chunk_size must be >= 1")
    chunk_size = max(chunk_size, 64)
    origins, dirs = camera.rays()
    total = origins.shape[0]
    rgb_parts, prob_parts, opacity_parts = [], [], []
    with torch.no_grad():
        for start in range(0, total, chunk_size):
            end = min(start + chunk_size, total)
            out = render_rays(
                model,
                origins[start:end],
                dirs[start:end],
                camera.near,
                camera.far,
                style_index=style_index,
                n_samples=n_samples,
                stratified=False,
            )
            rgb_parts.append(out["rgb"])
            prob_parts.append(out["region_probs"])
            opacity_parts.append(out["opacity"])
    rgb = torch.cat(rgb_parts).reshape(camera.height, camera.width, 3)
    probs = torch.cat(prob_parts).reshape(camera.height, camera.width, -1)
    opacity = torch.cat(opacity_parts).reshape(camera.height, camera.width)
    if white_background:
        rgb = rgb + (1.0 - opacity.unsqueeze(-1))
    return RenderResult(
        rgb=rgb.numpy().astype(np.float32),
        region_probs=probs.numpy().astype(np.float32),
        opacity=opacity.numpy().astype(np.float32),
    )
