"""Scene and style region labeling.

Scene views are labeled by a small convolutional response network trained
without supervision: each pixel's response is pulled toward its own argmax
class while neighboring responses are pulled together, so flat areas merge
and the surviving class count C emerges from the data. Style images are
labeled by filtering an ordered list of candidate masks for overlap and
minimum size, then merging the survivors into one disjoint label map.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn

from .errors import DomainError, ExternalDependencyError

SCENE = "scene"
STYLE = "style"
UNASSIGNED_16 = 65535
REGION_MAP_FORMAT_VERSION = 1


@dataclass
class RegionMap:
    """Integer label image with values in {-1} union [0, count)."""

    labels: np.ndarray
    count: int
    provenance: str

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2 or not np.issubdtype(self.labels.dtype, np.integer):
            raise DomainError("labels must be a 2-d integer array")
        self.labels = self.labels.astype(np.int32)
        if self.provenance not in (SCENE, STYLE):
            raise DomainError(f"provenance must be scene or style, got {self.provenance!r}")
        if self.count < 0:
            raise DomainError("count must be >= 0")
        if self.labels.size:
            lo = int(self.labels.min())
            hi = int(self.labels.max())
            if lo < -1 or hi >= self.count:
                raise DomainError(
                    f"labels must lie in [-1, {self.count}), found range [{lo}, {hi}]"
                )
            if self.provenance == SCENE and lo < 0:
                raise DomainError("scene region maps must label every pixel")

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def save_region_map(path, region_map: RegionMap, source_image: str | None = None) -> None:
    """Write labels as 16-bit PNG (65535 = unassigned) plus a JSON sidecar."""
    if int(region_map.labels.max(initial=-1)) >= UNASSIGNED_16:
        raise DomainError("label values out of 16-bit range")
    out = region_map.labels.astype(np.int64).copy()
    out[out == -1] = UNASSIGNED_16
    path = Path(path)
    Image.fromarray(out.astype(np.uint16)).save(str(path))
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(
        json.dumps(
            {
                "version": REGION_MAP_FORMAT_VERSION,
                "count": int(region_map.count),
                "provenance": region_map.provenance,
                "source_image": source_image,
                "unassigned": UNASSIGNED_16,
            },
            indent=2,
        )
        + "\n"
    )


def load_region_map(path) -> tuple[RegionMap, dict]:
    """Read a region map PNG and its sidecar; returns (map, sidecar dict)."""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    if not sidecar.exists():
        raise DomainError(f"missing region map sidecar: {sidecar}")
    meta = json.loads(sidecar.read_text())
    if meta.get("version") != REGION_MAP_FORMAT_VERSION:
        raise DomainError(f"unsupported region map version: {meta.get('version')!r}")
    with Image.open(str(path)) as img:
        data = np.asarray(img, dtype=np.int64)
    labels = data.copy()
    labels[labels == UNASSIGNED_16] = -1
    return RegionMap(labels.astype(np.int32), int(meta["count"]), meta["provenance"]), meta


@dataclass
class SegNetConfig:
    """Hyperparameters of the unsupervised scene segmenter."""

    q: int = 64  # upper bound on region count
    batch_size: int = 4
    iterations: int = 500
    continuity_weight: float = 5.0
    learning_rate: float = 0.01

    def __post_init__(self):
        if self.q < 2:
            raise DomainError("q must be >= 2")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if self.iterations < 1:
            raise DomainError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be positive")


def _seed_conv_init(module: nn.Module, generator: torch.Generator) -> None:
    """Replay the default conv init from a local generator for determinism."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=generator)
                if m.bias is not None:
                    m.bias.uniform_(-bound, bound, generator=generator)


class _ResponseNet(nn.Module):
    """Three conv layers with per-channel response normalization."""

    def __init__(self, q: int, seed: int):
        super().__init__()
        self.conv1 = nn.Conv2d(3, q, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(q)
        self.conv2 = nn.Conv2d(q, q, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(q)
        self.conv3 = nn.Conv2d(q, q, 1)
        self.bn3 = nn.BatchNorm2d(q)
        _seed_conv_init(self, torch.Generator().manual_seed(seed))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.bn1(torch.relu(self.conv1(x)))
        x = self.bn2(torch.relu(self.conv2(x)))
        return self.bn3(self.conv3(x))


def segmenter_losses(response: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Self-labeling and continuity terms for a response batch [B,Q,H,W].

    The first is the summed cross-entropy of each pixel's response against
    its own argmax; the second is the summed L1 difference of horizontally
    and vertically adjacent responses.
    """
    b, q, h, w = response.shape
    flat = response.permute(0, 2, 3, 1).reshape(-1, q)
    targets = flat.argmax(dim=1).detach()
    l_sim = nn.functional.cross_entropy(flat, targets, reduction="sum")
    l_con = (response[:, :, 1:, :] - response[:, :, :-1, :]).abs().sum() + (
        response[:, :, :, 1:] - response[:, :, :, :-1]
    ).abs().sum()
    return l_sim, l_con


def _stack_images(images) -> torch.Tensor:
    if len(images) == 0:
        raise DomainError("need at least one image")
    arrays = [np.asarray(img, dtype=np.float32) for img in images]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise DomainError("all images must share one resolution")
    if len(shape) != 3 or shape[2] != 3:
        raise DomainError("images must be [H,W,3]")
    return torch.from_numpy(np.stack(arrays)).permute(0, 3, 1, 2)


@dataclass
class SceneSegmenter:
    """Trained response network plus its surviving class relabeling."""

    net: _ResponseNet
    active_classes: list[int]
    count: int = field(init=False)

    def __post_init__(self):
        self.count = len(self.active_classes)

    def label(self, batch: torch.Tensor) -> np.ndarray:
        """Argmax labels restricted to surviving classes, reindexed to 0..C-1."""
        self.net.eval()
        with torch.no_grad():
            response = self.net(batch)
        keep = torch.full((response.shape[1],), -torch.inf)
        keep[self.active_classes] = 0.0
        restricted = response + keep.view(1, -1, 1, 1)
        raw = restricted.argmax(dim=1).numpy()
        lookup = np.full(response.shape[1], -1, dtype=np.int32)
        for new, old in enumerate(self.active_classes):
            lookup[old] = new
        return lookup[raw]


def train_scene_segmenter(
    training_images, config: SegNetConfig | None = None, rng_seed: int = 0
) -> tuple[SceneSegmenter, int]:
    """Fit the response network on the views and return it with its class count.

    Classes that win no pixel anywhere in the training set are dropped and
    the survivors are reindexed contiguously from 0.
    """
    config = config or SegNetConfig()
    stack = _stack_images(training_images)
    n = stack.shape[0]
    net = _ResponseNet(config.q, rng_seed)
    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    gen = torch.Generator().manual_seed(rng_seed + 1)
    net.train()
    for _ in range(config.iterations):
        idx = torch.randint(0, n, (min(config.batch_size, n),), generator=gen)
        response = net(stack[idx])
        l_sim, l_con = segmenter_losses(response)
        loss = l_sim + config.continuity_weight * l_con
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    net.eval()
    with torch.no_grad():
        active: set[int] = set()
        for i in range(n):
            response = net(stack[i : i + 1])
            active.update(np.unique(response.argmax(dim=1).numpy()).tolist())
    segmenter = SceneSegmenter(net, sorted(int(a) for a in active))
    return segmenter, segmenter.count


def segment_views(segmenter: SceneSegmenter, images) -> list[RegionMap]:
    """One scene RegionMap per view, deterministic for a trained segmenter."""
    stack = _stack_images(images)
    labels = segmenter.label(stack)
    return [RegionMap(labels[i], segmenter.count, SCENE) for i in range(labels.shape[0])]


class StubMaskBackend:
    """Returns a fixed mask list; for tests and precomputed segmentations."""

    def __init__(self, masks):
        self._masks = list(masks)

    def __call__(self, image):
        return self._masks


class ColorClusterBackend:
    """K-means over rgb as a dependency-free stand-in mask proposer."""

    def __init__(self, num_clusters: int = 4, seed: int = 0, iterations: int = 20):
        if num_clusters < 1:
            raise DomainError("num_clusters must be >= 1")
        self.num_clusters = num_clusters
        self.seed = seed
        self.iterations = iterations

    def __call__(self, image):
        pixels = np.asarray(image, dtype=np.float64).reshape(-1, 3)
        rng = np.random.default_rng(self.seed)
        k = min(self.num_clusters, len(np.unique(pixels, axis=0)))
        centers = pixels[rng.choice(len(pixels), size=k, replace=False)]
        for _ in range(self.iterations):
            dists = ((pixels[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
            owner = dists.argmin(axis=1)
            for c in range(k):
                member = owner == c
                if member.any():
                    centers[c] = pixels[member].mean(axis=0)
        h, w = np.asarray(image).shape[:2]
        owner = owner.reshape(h, w)
        return [owner == c for c in range(k) if (owner == c).any()]


class PromptableMaskBackend:
    """Adapter for an external promptable mask generator; optional dependency."""

    def __init__(self, checkpoint_path=None):
        self.checkpoint_path = checkpoint_path

    def __call__(self, image):
        try:
            import segment_anything  # noqa: F401
        except ImportError as exc:
            raise ExternalDependencyError(
                "promptable mask generation needs the segment-anything package and a "
                "ViT-H checkpoint; install it and pass checkpoint_path, or use "
                "ColorClusterBackend / StubMaskBackend instead"
            ) from exc
        raise ExternalDependencyError(
            "no checkpoint configured for the promptable mask backend"
        )


def extract_style_masks(style_image, mask_backend) -> list[np.ndarray]:
    """Candidate masks from the backend, sorted by decreasing pixel count.

    The sort is stable, so equal-area masks keep the backend's order.
    Overlaps are left untouched here; filter_style_regions resolves them.
    """
    image = np.asarray(style_image)
    raw = mask_backend(image)
    masks = []
    for entry in raw:
        mask = entry["mask"] if isinstance(entry, dict) else entry
        mask = np.asarray(mask).astype(bool)
        if mask.shape != image.shape[:2]:
            raise DomainError(
                f"mask shape {mask.shape} does not match image {image.shape[:2]}"
            )
        masks.append(mask)
    return sorted(masks, key=lambda m: -int(m.sum()))


@dataclass
class StyleRegionSet:
    """Accepted style masks (largest first) and their merged label map."""

    masks: list[np.ndarray]
    areas: list[int]
    region_map: RegionMap


def filter_style_regions(
    masks, lambda_t: float = 0.05, lambda_m: float = 0.004
) -> StyleRegionSet:
    """Greedy overlap filtering of size-ordered masks.

    A candidate is accepted iff at most lambda_t of it is already covered
    and its relative area is at least lambda_m. Accepted masks write their
    label over all their pixels, so a later acceptance may overwrite up to
    lambda_t of an earlier one.
    """
    if not 0.0 <= lambda_t <= 1.0:
        raise DomainError("lambda_t must be in [0, 1]")
    if not 0.0 < lambda_m < 1.0:
        raise DomainError("lambda_m must be in (0, 1)")
    masks = [np.asarray(m).astype(bool) for m in masks]
    if masks and any(m.shape != masks[0].shape for m in masks):
        raise DomainError("masks must share one shape")
    if not masks:
        raise DomainError("no candidate masks to filter")
    shape = masks[0].shape
    total = shape[0] * shape[1]
    covered = np.zeros(shape, dtype=bool)
    labels = np.full(shape, -1, dtype=np.int32)
    accepted_masks: list[np.ndarray] = []
    accepted_areas: list[int] = []
    next_label = 0
    for mask in masks:
        area = int(mask.sum())
        if area == 0:
            continue
        covered_fraction = float(covered[mask].sum()) / area
        if covered_fraction <= lambda_t and area / total >= lambda_m:
            covered[mask] = True
            labels[mask] = next_label
            accepted_masks.append(mask)
            accepted_areas.append(area)
            next_label += 1
    region_map = RegionMap(labels, next_label, STYLE)
    return StyleRegionSet(accepted_masks, accepted_areas, region_map)


def downscale_region_map(region_map: RegionMap, target_w: int, target_h: int) -> RegionMap:
    """Nearest-neighbor label resampling.

    Output pixel (u, v) reads input pixel (floor((u+0.5)*W_in/W_out),
    floor((v+0.5)*H_in/H_out)), evaluated in exact integer arithmetic.
    """
    if target_w < 1 or target_h < 1:
        raise DomainError("target dimensions must be >= 1")
    h_in, w_in = region_map.labels.shape
    us = np.arange(target_w)
    vs = np.arange(target_h)
    src_x = ((2 * us + 1) * w_in) // (2 * target_w)
    src_y = ((2 * vs + 1) * h_in) // (2 * target_h)
    labels = region_map.labels[np.ix_(src_y, src_x)]
    return RegionMap(labels.copy(), region_map.count, region_map.provenance)
