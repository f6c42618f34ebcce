"""Versioned checkpoint container for models, optimizers, and RNG state.

A checkpoint stores everything needed to resume training exactly: the
model config and weights, the optimizer moments, the sampling generator
state, the stage marker, and the frozen-geometry digest. Saving after
reconstruction re-verifies the digest so any geometry drift fails loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigurationError, StyleFieldError
from .field import STAGE_RECONSTRUCTION, RadianceModel, freeze_geometry, geometry_digest
from .geometry import BoundingBox
from .hashgrid import HashGridConfig

CHECKPOINT_FORMAT_VERSION = 1


def _grid_config_to_dict(config: HashGridConfig) -> dict:
    return {
        "num_levels": config.num_levels,
        "base_resolution": config.base_resolution,
        "per_level_scale": config.per_level_scale,
        "features_per_level": config.features_per_level,
        "table_size": config.table_size,
        "hash_coeffs": list(config.hash_coeffs),
        "num_styles": config.num_styles,
        "bounding_box": {
            "min": [float(v) for v in config.bounding_box.min_corner],
            "max": [float(v) for v in config.bounding_box.max_corner],
        },
    }


def _grid_config_from_dict(raw: dict) -> HashGridConfig:
    return HashGridConfig(
        num_levels=int(raw["num_levels"]),
        base_resolution=int(raw["base_resolution"]),
        per_level_scale=float(raw["per_level_scale"]),
        features_per_level=int(raw["features_per_level"]),
        table_size=int(raw["table_size"]),
        hash_coeffs=tuple(int(c) for c in raw["hash_coeffs"]),
        num_styles=int(raw["num_styles"]),
        bounding_box=BoundingBox(
            tuple(raw["bounding_box"]["min"]), tuple(raw["bounding_box"]["max"])
        ),
    )


@dataclass
class Checkpoint:
    """In-memory checkpoint: a live model plus resumable training state."""

    model: RadianceModel
    stage: str
    iteration: int
    geometry_digest: str | None = None
    optimizer_state: dict | None = None
    generator_state: torch.Tensor | None = None
    color_transforms: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    loss_log: list[dict] = field(default_factory=list)


def save_checkpoint(checkpoint: Checkpoint, path) -> Path:
    """Serialize a checkpoint; verifies geometry stability after freezing."""
    if checkpoint.stage != STAGE_RECONSTRUCTION and checkpoint.geometry_digest:
        current = geometry_digest(checkpoint.model)
        if current != checkpoint.geometry_digest:
            raise StyleFieldError(
                "geometry parameters changed after freezing: "
                f"{current[:16]} != {checkpoint.geometry_digest[:16]}"
            )
    payload = {
        "version": CHECKPOINT_FORMAT_VERSION,
        "stage": checkpoint.stage,
        "iteration": int(checkpoint.iteration),
        "geometry_digest": checkpoint.geometry_digest,
        "model": {
            "geometry_config": _grid_config_to_dict(checkpoint.model.geometry_grid.config),
            "appearance_config": _grid_config_to_dict(checkpoint.model.appearance_grid.config),
            "num_scene_regions": checkpoint.model.num_scene_regions,
            "state": checkpoint.model.state_dict(),
        },
        "optimizer_state": checkpoint.optimizer_state,
        "generator_state": checkpoint.generator_state,
        "color_transforms": {
            int(k): (np.asarray(a).tolist(), np.asarray(b).tolist())
            for k, (a, b) in checkpoint.color_transforms.items()
        },
        "loss_log": checkpoint.loss_log,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def load_checkpoint(path) -> Checkpoint:
    """Rebuild a checkpoint saved by save_checkpoint."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version!r}")
    model = RadianceModel(
        _grid_config_from_dict(payload["model"]["geometry_config"]),
        _grid_config_from_dict(payload["model"]["appearance_config"]),
        num_scene_regions=int(payload["model"]["num_scene_regions"]),
    )
    model.load_state_dict(payload["model"]["state"])
    model.stage = payload["stage"]
    digest = payload.get("geometry_digest")
    if digest and payload["stage"] != STAGE_RECONSTRUCTION:
        current = geometry_digest(model)
        if current != digest:
            raise StyleFieldError(
                f"checkpoint geometry does not match its digest: {current[:16]}"
            )
        freeze_geometry(model)
    return Checkpoint(
        model=model,
        stage=payload["stage"],
        iteration=int(payload["iteration"]),
        geometry_digest=digest,
        optimizer_state=payload.get("optimizer_state"),
        generator_state=payload.get("generator_state"),
        color_transforms={
            int(k): (np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for k, (a, b) in payload.get("color_transforms", {}).items()
        },
        loss_log=list(payload.get("loss_log", [])),
    )
