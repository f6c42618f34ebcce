"""Dual-branch radiance field.

Geometry branch: hash grid + one-hidden-layer MLP emitting density and a
geometry feature. Appearance branch: a second, style-indexed hash grid and
a two-hidden-layer MLP emitting rgb. A segmentation head reads the
appearance encoding and emits one logit per scene region. There is no view
direction input anywhere, so renders are view-consistent by construction,
and density never depends on the style index because the geometry grid is
single-style.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import DomainError, StageError
from .hashgrid import HashGrid, HashGridConfig

STAGE_RECONSTRUCTION = "reconstruction"
STAGE_RECONSTRUCTED = "reconstructed"
STAGE_STYLIZED = "stylized"

GEOMETRY_FEATURE_DIM = 15
HIDDEN_WIDTH = 64

# Raw density is exponentiated; the clamp keeps the optimizer out of the
# overflow region.
_SIGMA_CLAMP = 15.0


@dataclass
class PointSampleBatch:
    """Model outputs for a batch of query points."""

    positions: torch.Tensor  # [N,3]
    sigma: torch.Tensor  # [N]
    rgb: torch.Tensor  # [N,3]
    region_logits: torch.Tensor  # [N,C]


def _mlp(in_dim: int, hidden: int, out_dim: int, hidden_layers: int) -> nn.Sequential:
    layers: list[nn.Module] = [nn.Linear(in_dim, hidden), nn.ReLU()]
    for _ in range(hidden_layers - 1):
        layers += [nn.Linear(hidden, hidden), nn.ReLU()]
    layers.append(nn.Linear(hidden, out_dim))
    return nn.Sequential(*layers)


def _reinit_linears(module: nn.Module, gen: torch.Generator):
    # Replays the default nn.Linear init with a local generator so model
    # construction is deterministic for a given seed.
    for m in module.modules():
        if isinstance(m, nn.Linear):
            fan_in = m.weight.shape[1]
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=gen)
                if m.bias is not None:
                    m.bias.uniform_(-bound, bound, generator=gen)


class RadianceModel(nn.Module):
    """Geometry, appearance, and segmentation heads over two hash grids."""

    def __init__(
        self,
        geometry_config: HashGridConfig,
        appearance_config: HashGridConfig,
        num_scene_regions: int,
        seed: int = 0,
    ):
        super().__init__()
        if geometry_config.num_styles != 1:
            raise DomainError("geometry grid must be single-style so density is style-invariant")
        if num_scene_regions < 1:
            raise DomainError("num_scene_regions must be >= 1")
        if geometry_config.bounding_box != appearance_config.bounding_box:
            raise DomainError("geometry and appearance grids must share a bounding box")
        self.num_scene_regions = num_scene_regions
        self.geometry_grid = HashGrid(geometry_config, seed=seed)
        self.appearance_grid = HashGrid(appearance_config, seed=seed + 1)
        self.geometry_mlp = _mlp(
            geometry_config.feature_dim, HIDDEN_WIDTH, 1 + GEOMETRY_FEATURE_DIM, hidden_layers=1
        )
        self.appearance_mlp = _mlp(appearance_config.feature_dim, HIDDEN_WIDTH, 3, hidden_layers=2)
        self.segmentation_mlp = _mlp(
            appearance_config.feature_dim, HIDDEN_WIDTH, num_scene_regions, hidden_layers=2
        )
        gen = torch.Generator().manual_seed(seed + 2)
        for mod in (self.geometry_mlp, self.appearance_mlp, self.segmentation_mlp):
            _reinit_linears(mod, gen)

        self.stage = STAGE_RECONSTRUCTION
        self.geometry_frozen = False
        self._geometry_digest: str | None = None

    @property
    def num_styles(self) -> int:
        return self.appearance_grid.config.num_styles

    @property
    def bounding_box(self):
        return self.geometry_grid.config.bounding_box

    def density(self, points: torch.Tensor) -> torch.Tensor:
        """Density only; never sees the style index."""
        geo = self.geometry_mlp(self.geometry_grid.encode(points))
        return torch.exp(geo[:, 0].clamp(-_SIGMA_CLAMP, _SIGMA_CLAMP))

    def query(self, points: torch.Tensor, style_index: int = 0) -> PointSampleBatch:
        """Evaluate all branches at points inside the bounding box."""
        sigma = self.density(points)
        app_feat = self.appearance_grid.encode(points, style_index)
        rgb = torch.sigmoid(self.appearance_mlp(app_feat))
        logits = self.segmentation_mlp(app_feat)
        return PointSampleBatch(positions=points, sigma=sigma, rgb=rgb, region_logits=logits)


def geometry_digest(model: RadianceModel) -> str:
    """SHA-256 over the serialized geometry branch, stable across runs."""
    h = hashlib.sha256()
    cfg = model.geometry_grid.config
    meta = {
        "num_levels": cfg.num_levels,
        "base_resolution": cfg.base_resolution,
        "per_level_scale": cfg.per_level_scale,
        "features_per_level": cfg.features_per_level,
        "table_size": cfg.table_size,
        "hash_coeffs": list(cfg.hash_coeffs),
        "num_styles": cfg.num_styles,
        "bounding_box": [list(cfg.bounding_box.min_corner), list(cfg.bounding_box.max_corner)],
    }
    h.update(json.dumps(meta, sort_keys=True).encode())
    h.update(model.geometry_grid.table_bytes())
    for name, param in sorted(model.geometry_mlp.named_parameters()):
        h.update(name.encode())
        h.update(param.detach().cpu().numpy().astype("<f4").tobytes(order="C"))
    return h.hexdigest()


def freeze_geometry(model: RadianceModel) -> str:
    """Exclude the geometry branch from optimization; returns its digest.

    Idempotent. Requires the reconstruction stage to be complete.
    """
    if model.stage == STAGE_RECONSTRUCTION:
        raise StageError("freeze_geometry called before reconstruction completed")
    digest = geometry_digest(model)
    if model.geometry_frozen:
        return model._geometry_digest  # type: ignore[return-value]
    for param in model.geometry_grid.parameters():
        param.requires_grad_(False)
    for param in model.geometry_mlp.parameters():
        param.requires_grad_(False)
    model.geometry_frozen = True
    model._geometry_digest = digest
    return digest


_STYLIZATION_COMPONENTS = ("appearance_grid", "appearance_mlp")
_RECONSTRUCTION_COMPONENTS = _STYLIZATION_COMPONENTS + (
    "geometry_grid",
    "geometry_mlp",
    "segmentation_mlp",
)


def trainable_parameters(model: RadianceModel, stage: str) -> dict[str, torch.nn.Parameter]:
    """Named parameters the optimizer may update in the given stage.

    Reconstruction trains everything including the segmentation head;
    stylization trains exactly the appearance grid and MLP. The head is
    excluded there because it reads the appearance encoding that
    stylization mutates, while the region matching stays fixed.
    """
    if stage == STAGE_RECONSTRUCTION:
        components = _RECONSTRUCTION_COMPONENTS
    elif stage in ("stylization", STAGE_STYLIZED):
        components = _STYLIZATION_COMPONENTS
    else:
        raise DomainError(f"unknown stage {stage!r}")
    out: dict[str, torch.nn.Parameter] = {}
    for name, param in model.named_parameters():
        if name.split(".", 1)[0] in components:
            out[name] = param
    return out
