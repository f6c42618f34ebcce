"""Multiresolution voxel hash-grid encoding.

Voxel corners are mapped to table slots by an extended geometric hash

    slot = (h1*x XOR h2*y XOR h3*z XOR h4*s) mod table_size

where s is a discrete style index letting one table hold the appearance of
several styles at once. Products wrap in unsigned 64-bit arithmetic before
the final reduction, so slot assignments are portable across platforms.
With a single style the h4 term is dropped and the classic three-term hash
is recovered. Per-point features are the trilinear interpolation of the
eight corner features at every level, concatenated across levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import DomainError, OutOfBoundsError
from .geometry import BoundingBox

# Width of the wrapping unsigned arithmetic used by the hash.
HASH_ARITH_BITS = 64
_WRAP = 1 << HASH_ARITH_BITS

# h1..h3 follow the usual spatial-hash convention; h4 is a prime outside
# that triple, reserved for the style term.
DEFAULT_HASH_COEFFS = (1, 2654435761, 805459861, 2097152999)


@dataclass(frozen=True)
class HashGridConfig:
    num_levels: int = 16
    base_resolution: int = 16
    per_level_scale: float = 1.382
    features_per_level: int = 2
    table_size: int = 1 << 19
    hash_coeffs: tuple[int, int, int, int] = DEFAULT_HASH_COEFFS
    num_styles: int = 1
    bounding_box: BoundingBox = field(default_factory=BoundingBox.unit)

    def __post_init__(self):
        if self.num_levels < 1:
            raise DomainError("num_levels must be >= 1")
        if self.base_resolution < 2:
            raise DomainError("base_resolution must be >= 2")
        if not self.per_level_scale > 1.0:
            raise DomainError("per_level_scale must be > 1")
        if self.features_per_level < 1:
            raise DomainError("features_per_level must be >= 1")
        if self.table_size < 1 or self.table_size & (self.table_size - 1):
            raise DomainError(f"table_size must be a power of two, got {self.table_size}")
        if len(self.hash_coeffs) != 4:
            raise DomainError("hash_coeffs must be (h1, h2, h3, h4)")
        if any(c < 0 for c in self.hash_coeffs):
            raise DomainError("hash coefficients must be unsigned")
        if len(set(self.hash_coeffs)) != 4:
            raise DomainError(f"hash_coeffs must be pairwise distinct, got {self.hash_coeffs}")
        if self.num_styles < 1:
            raise DomainError("num_styles must be >= 1")

    def resolution(self, level: int) -> int:
        return int(self.base_resolution * self.per_level_scale**level)

    @property
    def feature_dim(self) -> int:
        return self.num_levels * self.features_per_level


def hash_index(voxel: tuple[int, int, int], style_index: int, config: HashGridConfig) -> int:
    """Table slot of one voxel corner, in exact integer arithmetic."""
    x, y, z = (int(v) for v in voxel)
    if x < 0 or y < 0 or z < 0:
        raise DomainError(f"voxel components must be >= 0, got {(x, y, z)}")
    _check_style(style_index, config)
    h1, h2, h3, h4 = config.hash_coeffs
    acc = ((h1 * x) % _WRAP) ^ ((h2 * y) % _WRAP) ^ ((h3 * z) % _WRAP)
    if config.num_styles > 1:
        acc ^= (h4 * style_index) % _WRAP
    return acc % config.table_size


def _check_style(style_index: int, config: HashGridConfig):
    if not 0 <= style_index < config.num_styles:
        raise DomainError(
            f"style_index {style_index} out of range for {config.num_styles} style(s)"
        )


def _hash_coords(coords: torch.Tensor, style_index: int, config: HashGridConfig) -> torch.Tensor:
    """Vectorized hash of integer corner coordinates [..., 3] -> slots [...].

    int64 products wrap in two's complement, which agrees bit-for-bit with
    unsigned 64-bit wraparound; the mask picks the low bits, i.e. mod table_size.
    """
    h1, h2, h3, h4 = config.hash_coeffs
    acc = coords[..., 0] * h1 ^ coords[..., 1] * h2 ^ coords[..., 2] * h3
    if config.num_styles > 1:
        acc = acc ^ torch.tensor(h4 * style_index, dtype=torch.int64).item()
    return acc & (config.table_size - 1)


# Corner offsets of a voxel cell, fixed order (z fastest).
_CORNERS = torch.tensor(
    [[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=torch.int64
)


class HashGrid(nn.Module):
    """Learnable multiresolution feature table addressed by the spatial hash."""

    def __init__(self, config: HashGridConfig, seed: int | None = None):
        super().__init__()
        self.config = config
        gen = None
        if seed is not None:
            gen = torch.Generator().manual_seed(seed)
        table = torch.empty(config.num_levels, config.table_size, config.features_per_level)
        table.uniform_(-1e-4, 1e-4, generator=gen)
        self.table = nn.Parameter(table)
        resolutions = torch.tensor(
            [config.resolution(lv) for lv in range(config.num_levels)], dtype=torch.float32
        )
        self.register_buffer("_resolutions", resolutions)

    def extra_repr(self) -> str:
        c = self.config
        return f"levels={c.num_levels}, table={c.table_size}, styles={c.num_styles}"

    def encode(self, points: torch.Tensor, style_index: int = 0) -> torch.Tensor:
        """Encode points [N,3] inside the bounding box -> features [N, L*F]."""
        _check_style(style_index, self.config)
        if points.ndim != 2 or points.shape[-1] != 3:
            raise DomainError(f"expected points of shape [N,3], got {tuple(points.shape)}")
        box = self.config.bounding_box
        inside = box.contains(points)
        if not bool(inside.all()):
            bad = points[~inside][0].tolist()
            raise OutOfBoundsError(f"point {bad} outside bounding box {box}")
        normalized = box.normalize(points.to(self.table.dtype))

        scaled = normalized.unsqueeze(1) * self._resolutions.view(1, -1, 1)  # [N,L,3]
        base = torch.floor(scaled).to(torch.int64)
        frac = scaled - base.to(scaled.dtype)

        # Per-axis hash terms combined by xor; h*(x+1) = h*x + h under the
        # same int64 wrap, so this matches _hash_coords on all 8 corners
        # while doing one multiply per axis instead of per corner.
        h1, h2, h3, h4 = self.config.hash_coeffs
        hx = base[..., 0] * h1
        hy = base[..., 1] * h2
        hz = base[..., 2] * h3
        hx = torch.stack([hx, hx + h1], dim=-1)  # [N,L,2]
        hy = torch.stack([hy, hy + h2], dim=-1)
        hz = torch.stack([hz, hz + h3], dim=-1)
        acc = (hx.unsqueeze(-1) ^ hy.unsqueeze(-2)).unsqueeze(-1) ^ hz.unsqueeze(-2).unsqueeze(-2)
        if self.config.num_styles > 1:
            acc = acc ^ torch.tensor(h4 * style_index, dtype=torch.int64).item()
        # [N,L,2,2,2] -> [N,L,8] in _CORNERS order (z fastest)
        slots = (acc & (self.config.table_size - 1)).reshape(base.shape[0], base.shape[1], 8)

        fx, fy, fz = frac[..., 0], frac[..., 1], frac[..., 2]
        wx = torch.stack([1.0 - fx, fx], dim=-1)  # [N,L,2]
        wy = torch.stack([1.0 - fy, fy], dim=-1)
        wz = torch.stack([1.0 - fz, fz], dim=-1)
        w = ((wx.unsqueeze(-1) * wy.unsqueeze(-2)).unsqueeze(-1) * wz.unsqueeze(-2).unsqueeze(-2))
        w = w.reshape(frac.shape[0], frac.shape[1], 8)

        level_idx = torch.arange(self.config.num_levels).view(1, -1, 1)
        feats = self.table[level_idx, slots]  # [N,L,8,F]
        out = (w.unsqueeze(-1) * feats).sum(dim=2)  # [N,L,F]
        return out.reshape(points.shape[0], -1)

    def table_bytes(self) -> bytes:
        """Little-endian float32 dump of the table, row-major."""
        import numpy as np

        arr = self.table.detach().cpu().numpy().astype("<f4")
        return arr.tobytes(order="C")


def encode_gradient_check(
    grid: HashGrid,
    point: torch.Tensor,
    style_index: int,
    probe_direction: torch.Tensor,
    step: float = 1e-3,
    direction_seed: int = 0,
) -> float:
    """Relative error between the analytic table gradient and central differences.

    The scalar probed is dot(encode(point), probe_direction); the finite
    difference perturbs the table along a seeded random direction.
    """
    point = torch.as_tensor(point, dtype=torch.float64).reshape(1, 3)
    probe = torch.as_tensor(probe_direction, dtype=torch.float64).reshape(-1)
    if probe.numel() != grid.config.feature_dim:
        raise DomainError(
            f"probe_direction must have length {grid.config.feature_dim}, got {probe.numel()}"
        )
    if float(probe.abs().max()) == 0.0:
        raise DomainError("probe_direction must be nonzero")
    _require_cell_interior(grid, point)

    # The check runs in float64: the scalar is O(1) while the directional
    # derivative is tiny, so a float32 central difference would cancel.
    table = grid.table
    saved = table.data
    table.data = saved.to(torch.float64)
    try:
        out = grid.encode(point, style_index)
        scalar = (out.reshape(-1) * probe).sum()
        (analytic,) = torch.autograd.grad(scalar, table)

        gen = torch.Generator().manual_seed(direction_seed)
        direction = torch.randn(table.shape, generator=gen, dtype=torch.float64)
        direction = direction / direction.norm()

        def probe_at(eps: float) -> float:
            with torch.no_grad():
                inner = table.data
                table.data = inner + eps * direction
                try:
                    val = (grid.encode(point, style_index).reshape(-1) * probe).sum()
                finally:
                    table.data = inner
            return float(val)

        numeric = (probe_at(step) - probe_at(-step)) / (2.0 * step)
        exact = float((analytic * direction).sum())
    finally:
        table.data = saved
    denom = max(abs(exact), abs(numeric), 1e-12)
    return abs(exact - numeric) / denom


def _require_cell_interior(grid: HashGrid, point: torch.Tensor):
    box = grid.config.bounding_box
    if not bool(box.contains(point).all()):
        raise OutOfBoundsError(f"point {point.tolist()} outside bounding box")
    normalized = box.normalize(point.to(torch.float64))
    for level in range(grid.config.num_levels):
        scaled = normalized * grid.config.resolution(level)
        frac = scaled - torch.floor(scaled)
        if bool((frac == 0).any()):
            raise DomainError(
                f"point lies on a voxel face at level {level}; gradient check "
                "requires a cell-interior point"
            )
