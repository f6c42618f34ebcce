"""Training losses, the color-transform pre-pass, and deferred backprop.

The style losses measure nearest-neighbor cosine distance between feature
cells; the region variant restricts each scene cell's candidate set to
the style region its scene region is matched with.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import (
    ConfigurationError,
    DegeneratePaletteError,
    DomainError,
    StageError,
    StyleFieldError,
)
from .features import FeatureMap
from .field import STAGE_RECONSTRUCTION, RadianceModel
from .rendering import Camera, render_rays
from .segmentation import RegionMap

EPS_NORM = 1e-8
EPS_LOG = 1e-12
_MIN_CHUNK = 4096


def _normalized(cells: torch.Tensor) -> torch.Tensor:
    return cells / cells.norm(dim=1, keepdim=True).clamp_min(EPS_NORM)


def _min_cosine_distances(query: torch.Tensor, bank: torch.Tensor) -> torch.Tensor:
    """Per-query minimum cosine distance to any bank vector, chunked."""
    q = _normalized(query)
    b = _normalized(bank)
    mins = []
    for start in range(0, q.shape[0], _MIN_CHUNK):
        sims = q[start : start + _MIN_CHUNK] @ b.T
        mins.append((1.0 - sims).amin(dim=1))
    return torch.cat(mins)


def _check_pair(f_y: FeatureMap, f_s: FeatureMap) -> None:
    if f_y.num_cells == 0 or f_s.num_cells == 0:
        raise DomainError("feature maps must be non-empty")
    if f_y.depth != f_s.depth:
        raise DomainError(f"feature depths differ: {f_y.depth} vs {f_s.depth}")


def nnfm_loss(f_y: FeatureMap, f_s: FeatureMap) -> torch.Tensor:
    """Mean over rendered cells of the min cosine distance to any style cell."""
    _check_pair(f_y, f_s)
    return _min_cosine_distances(f_y.cells(), f_s.cells()).mean()


def region_style_loss(
    f_y: FeatureMap,
    f_s: FeatureMap,
    scene_map: RegionMap,
    style_map: RegionMap,
    matching: dict[int, int],
) -> torch.Tensor:
    """Region-restricted nearest-neighbor style loss.

    Each scene cell searches only the style region its scene region maps
    to; a matched style region empty at feature resolution falls back to
    the whole style image for the affected cells.
    """
    _check_pair(f_y, f_s)
    if tuple(scene_map.labels.shape) != tuple(f_y.features.shape[:2]):
        raise DomainError("scene map resolution must match rendered features")
    if tuple(style_map.labels.shape) != tuple(f_s.features.shape[:2]):
        raise DomainError("style map resolution must match style features")
    cells_y = f_y.cells()
    cells_s = f_s.cells()
    scene_flat = scene_map.labels.ravel()
    style_flat = style_map.labels.ravel()
    total = cells_y.new_zeros(())
    for label in np.unique(scene_flat):
        label = int(label)
        if label not in matching:
            raise ConfigurationError(f"scene region {label} missing from matching")
        member = torch.from_numpy(scene_flat == label)
        bank_mask = torch.from_numpy(style_flat == matching[label])
        bank = cells_s[bank_mask] if bool(bank_mask.any()) else cells_s
        total = total + _min_cosine_distances(cells_y[member], bank).sum()
    return total / f_y.num_cells


def content_loss(f_y: FeatureMap, f_target: FeatureMap) -> torch.Tensor:
    """Mean squared feature difference over all cells and channels."""
    if f_y.features.shape != f_target.features.shape:
        raise DomainError(
            f"feature shapes differ: {tuple(f_y.features.shape)} vs "
            f"{tuple(f_target.features.shape)}"
        )
    return ((f_y.features - f_target.features) ** 2).mean()


def segmentation_ce_loss(k, k_hat) -> torch.Tensor:
    """Cross-entropy of a predicted region distribution against a one-hot target."""
    k = torch.as_tensor(k)
    k_hat = torch.as_tensor(k_hat, dtype=k.dtype)
    if k.ndim != 1 or k.shape != k_hat.shape:
        raise DomainError("k and k_hat must be 1-d with equal length")
    total = float(k.detach().sum())
    if abs(total - 1.0) > 1e-4:
        raise DomainError(f"k must sum to 1 within 1e-4, got {total}")
    hat = k_hat.detach()
    if not (((hat == 0) | (hat == 1)).all() and float(hat.sum()) == 1.0):
        raise DomainError("k_hat must be one-hot")
    return -(k_hat * torch.log(k + EPS_LOG)).sum()


def segmentation_ce_batch(
    probs: torch.Tensor, targets: torch.Tensor, reduction: str = "sum"
) -> torch.Tensor:
    """Batched -log p[target] with the same log floor as the scalar op."""
    if reduction not in ("sum", "mean"):
        raise DomainError(f"unknown reduction {reduction!r}")
    picked = probs.gather(1, targets.view(-1, 1)).squeeze(1)
    losses = -torch.log(picked + EPS_LOG)
    return losses.sum() if reduction == "sum" else losses.mean()


@dataclass
class ColorTransform:
    """Affine rgb map x -> A x + b fitted to match pixel statistics."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.offset = np.asarray(self.offset, dtype=np.float64)
        if self.matrix.shape != (3, 3) or self.offset.shape != (3,):
            raise DomainError("transform must be a 3x3 matrix and a 3-vector")
        if not (np.isfinite(self.matrix).all() and np.isfinite(self.offset).all()):
            raise DomainError("transform must be finite")
        singular = np.linalg.svd(self.matrix, compute_uv=False)
        if singular[-1] <= 0 or singular[0] / singular[-1] > 1e6:
            raise DegeneratePaletteError("color transform matrix is not invertible")


def _symmetric_sqrt(matrix: np.ndarray, inverse: bool) -> np.ndarray:
    values, vectors = np.linalg.eigh(matrix)
    values = np.clip(values, 0.0, None)
    if inverse:
        if values.min() <= 0:
            raise DegeneratePaletteError("covariance is singular beyond loading")
        roots = 1.0 / np.sqrt(values)
    else:
        roots = np.sqrt(values)
    return (vectors * roots) @ vectors.T


def fit_color_transform(content_pixels, style_pixels) -> ColorTransform:
    """Affine map taking the content palette's mean and covariance to the style's."""
    content = np.asarray(content_pixels, dtype=np.float64).reshape(-1, 3)
    style = np.asarray(style_pixels, dtype=np.float64).reshape(-1, 3)
    if len(content) < 4 or len(style) < 4:
        raise DomainError("need at least 4 pixels per palette")
    mu_c = content.mean(axis=0)
    mu_s = style.mean(axis=0)
    cov_c = np.cov(content, rowvar=False) + 1e-6 * np.eye(3)
    cov_s = np.cov(style, rowvar=False)
    matrix = _symmetric_sqrt(cov_s, inverse=False) @ _symmetric_sqrt(cov_c, inverse=True)
    return ColorTransform(matrix, mu_s - matrix @ mu_c)


def apply_color_transform(image: np.ndarray, transform: ColorTransform) -> np.ndarray:
    """Apply the affine map per pixel and clamp into [0,1]."""
    arr = np.asarray(image, dtype=np.float64)
    out = arr @ transform.matrix.T + transform.offset
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def deferred_backprop_step(
    model: RadianceModel,
    camera: Camera,
    loss_fn,
    style_index: int = 0,
    n_samples: int = 128,
    patch_size: int = 32,
    chunk_size: int = 4096,
) -> dict:
    """Whole-image loss with patch-bounded memory.

    Phase 1 renders the full view without derivative recording. Phase 2
    evaluates loss_fn on the rendered image and caches its per-pixel
    gradient. Phase 3 re-renders patch by patch, seeding backpropagation
    of each patch with the cached gradients, which accumulates the same
    parameter gradients as one whole-image backward pass.
    """
    if model.stage == STAGE_RECONSTRUCTION:
        raise StageError("deferred backprop requires frozen geometry")
    if patch_size < 1:
        raise DomainError("patch_size must be >= 1")
    origins, dirs = camera.rays()
    h, w = camera.height, camera.width

    parts = []
    with torch.no_grad():
        for start in range(0, h * w, chunk_size):
            out = render_rays(
                model,
                origins[start : start + chunk_size],
                dirs[start : start + chunk_size],
                camera.near,
                camera.far,
                style_index=style_index,
                n_samples=n_samples,
            )
            parts.append(out["rgb"])
    rendered = torch.cat(parts).reshape(h, w, 3)

    leaf = rendered.detach().requires_grad_(True)
    loss = loss_fn(leaf)
    pixel_grad = torch.autograd.grad(loss, leaf)[0]

    covered = 0
    for y0 in range(0, h, patch_size):
        for x0 in range(0, w, patch_size):
            y1 = min(y0 + patch_size, h)
            x1 = min(x0 + patch_size, w)
            rows = torch.arange(y0, y1)
            cols = torch.arange(x0, x1)
            idx = (rows.view(-1, 1) * w + cols.view(1, -1)).reshape(-1)
            out = render_rays(
                model,
                origins[idx],
                dirs[idx],
                camera.near,
                camera.far,
                style_index=style_index,
                n_samples=n_samples,
            )
            grads = pixel_grad[y0:y1, x0:x1].reshape(-1, 3)
            # a patch whose rays all miss the bounds renders without a graph
            if out["rgb"].grad_fn is not None:
                torch.autograd.backward(out["rgb"], grad_tensors=grads)
            covered += len(idx)
    if covered != h * w:
        raise StyleFieldError(
            f"patch grid covered {covered} of {h * w} pixels; refusing truncation"
        )
    return {"loss": float(loss.detach()), "rendered": rendered}
