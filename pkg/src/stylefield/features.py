"""Frozen convolutional feature extraction for style and content losses.

The extractor mirrors the first three blocks of a classic 16-layer
convnet: two 64-channel convs, pool, two 128-channel convs, pool, then
three 256-channel convs whose post-activation maps are concatenated to a
768-channel feature map at quarter resolution. Weights are either loaded
from a pinned pretrained file (content-addressed by hash) or drawn from a
seeded random init for dependency-free runs; they are frozen either way.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn

from .errors import DomainError, ExternalDependencyError

FEATURE_DEPTH = 768
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# torchvision layer index -> our conv attribute
_PRETRAINED_KEY_MAP = {
    "0": "conv1_1",
    "2": "conv1_2",
    "5": "conv2_1",
    "7": "conv2_2",
    "10": "conv3_1",
    "12": "conv3_2",
    "14": "conv3_3",
}


@dataclass
class FeatureMap:
    """Spatial feature grid [h, w, d] with provenance."""

    features: torch.Tensor
    source_resolution: tuple[int, int]
    extractor_id: str

    def __post_init__(self):
        if self.features.ndim != 3:
            raise DomainError("features must be [h, w, d]")
        if not torch.isfinite(self.features).all():
            raise DomainError("features must be finite")

    @property
    def depth(self) -> int:
        return self.features.shape[2]

    @property
    def num_cells(self) -> int:
        return self.features.shape[0] * self.features.shape[1]

    def cells(self) -> torch.Tensor:
        """Features flattened to [num_cells, d], row-major."""
        return self.features.reshape(-1, self.depth)


class FeatureExtractor(nn.Module):
    """Frozen conv stack producing concatenated third-block activations."""

    def __init__(self, weights: str | Path = "random", seed: int = 0):
        super().__init__()
        self.conv1_1 = nn.Conv2d(3, 64, 3, padding=1)
        self.conv1_2 = nn.Conv2d(64, 64, 3, padding=1)
        self.conv2_1 = nn.Conv2d(64, 128, 3, padding=1)
        self.conv2_2 = nn.Conv2d(128, 128, 3, padding=1)
        self.conv3_1 = nn.Conv2d(128, 256, 3, padding=1)
        self.conv3_2 = nn.Conv2d(256, 256, 3, padding=1)
        self.conv3_3 = nn.Conv2d(256, 256, 3, padding=1)
        if weights == "random":
            self._random_init(seed)
            self.identifier = f"conv3-random-seed{seed}"
        else:
            digest = self._load_pretrained(Path(weights))
            self.identifier = f"conv3-pretrained-{digest[:16]}"
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
        self.register_buffer("input_mean", mean)
        self.register_buffer("input_std", std)

    def _random_init(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                with torch.no_grad():
                    m.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
                    m.bias.zero_()

    def _load_pretrained(self, path: Path) -> str:
        if not path.exists():
            raise ExternalDependencyError(
                f"pretrained extractor weights not found at {path}; download the "
                "standard 16-layer convnet weights, or construct the extractor "
                'with weights="random" for a dependency-free run'
            )
        raw = path.read_bytes()
        digest = hashlib.sha256(raw).hexdigest()
        state = torch.load(path, map_location="cpu", weights_only=True)
        remapped = {}
        for idx, name in _PRETRAINED_KEY_MAP.items():
            for kind in ("weight", "bias"):
                full_key = f"features.{idx}.{kind}"
                own_key = f"{name}.{kind}"
                if full_key in state:
                    remapped[own_key] = state[full_key]
                elif own_key in state:
                    remapped[own_key] = state[own_key]
                else:
                    raise ExternalDependencyError(
                        f"weights file {path} is missing {full_key}"
                    )
        self.load_state_dict(remapped, strict=False)
        return digest

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        x = image.permute(2, 0, 1).unsqueeze(0)
        x = (x - self.input_mean) / self.input_std
        x = torch.relu(self.conv1_1(x))
        x = torch.relu(self.conv1_2(x))
        x = torch.max_pool2d(x, 2)
        x = torch.relu(self.conv2_1(x))
        x = torch.relu(self.conv2_2(x))
        x = torch.max_pool2d(x, 2)
        r1 = torch.relu(self.conv3_1(x))
        r2 = torch.relu(self.conv3_2(r1))
        r3 = torch.relu(self.conv3_3(r2))
        return torch.cat([r1, r2, r3], dim=1).squeeze(0).permute(1, 2, 0)


def extract_features(image, extractor: FeatureExtractor) -> FeatureMap:
    """Run the frozen extractor over an rgb image in [0,1].

    Accepts numpy [H,W,3] or a torch tensor; a tensor keeps its autograd
    graph so losses can differentiate through the extraction.
    """
    if isinstance(image, np.ndarray):
        tensor = torch.from_numpy(image.astype(np.float32))
    else:
        tensor = image
    if tensor.ndim != 3 or tensor.shape[2] != 3:
        raise DomainError("image must be [H, W, 3]")
    h, w = tensor.shape[:2]
    if h < 4 or w < 4:
        raise DomainError("image must be at least 4x4 for quarter-resolution features")
    with torch.no_grad():
        lo = float(tensor.detach().min())
        hi = float(tensor.detach().max())
    if lo < -1e-4 or hi > 1.0 + 1e-4:
        raise DomainError(f"image values must lie in [0,1], found [{lo}, {hi}]")
    features = extractor(tensor)
    return FeatureMap(features, (h, w), extractor.identifier)


def resize_long_side(image: np.ndarray, target: int = 512) -> np.ndarray:
    """Scale an rgb image so its longer side equals target, preserving aspect."""
    if target < 1:
        raise DomainError("target must be >= 1")
    h, w = image.shape[:2]
    long_side = max(h, w)
    if long_side == target:
        return image
    scale = target / long_side
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    pil = Image.fromarray(np.round(np.clip(image, 0, 1) * 255).astype(np.uint8))
    resized = pil.resize((new_w, new_h), Image.BILINEAR)
    return np.asarray(resized, dtype=np.float32) / 255.0
