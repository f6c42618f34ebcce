"""Axis-aligned scene bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in scene units."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=np.float64)
        hi = np.asarray(self.max_corner, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("bounding box corners must be 3-vectors")
        if not np.all(hi > lo):
            raise ValueError(f"degenerate bounding box: min={lo}, max={hi}")

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.max_corner) - np.asarray(self.min_corner)

    def contains(self, points: torch.Tensor) -> torch.Tensor:
        """Per-point containment mask, bounds inclusive."""
        lo = torch.as_tensor(self.min_corner, dtype=points.dtype, device=points.device)
        hi = torch.as_tensor(self.max_corner, dtype=points.dtype, device=points.device)
        return ((points >= lo) & (points <= hi)).all(dim=-1)

    def normalize(self, points: torch.Tensor) -> torch.Tensor:
        """Map box coordinates to [0,1]^3 without bounds checking."""
        lo = torch.as_tensor(self.min_corner, dtype=points.dtype, device=points.device)
        hi = torch.as_tensor(self.max_corner, dtype=points.dtype, device=points.device)
        return (points - lo) / (hi - lo)

    @staticmethod
    def unit() -> "BoundingBox":
        return BoundingBox((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
