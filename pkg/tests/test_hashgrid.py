import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from stylefield.errors import DomainError, OutOfBoundsError
from stylefield.geometry import BoundingBox
from stylefield.hashgrid import (
    DEFAULT_HASH_COEFFS,
    HashGrid,
    HashGridConfig,
    encode_gradient_check,
    hash_index,
)

M64 = 2**64


def oracle_hash(voxel, style, coeffs, table_size, num_styles=1):
    """Arbitrary-precision reference: products mod 2^64, XOR, mod table."""
    h1, h2, h3, h4 = coeffs
    x, y, z = voxel
    acc = ((h1 * x) % M64) ^ ((h2 * y) % M64) ^ ((h3 * z) % M64)
    if num_styles > 1:
        acc ^= (h4 * style) % M64
    return acc % table_size


def small_config(**kw):
    defaults = dict(
        num_levels=4,
        base_resolution=4,
        per_level_scale=1.5,
        features_per_level=2,
        table_size=1 << 10,
    )
    defaults.update(kw)
    return HashGridConfig(**defaults)


class TestHashIndex:
    def test_origin_is_slot_zero(self):
        cfg = small_config(table_size=1 << 14)
        assert hash_index((0, 0, 0), 0, cfg) == 0

    def test_unit_x_with_h1_one(self):
        cfg = small_config(table_size=1 << 14)
        assert cfg.hash_coeffs[0] == 1
        assert hash_index((1, 0, 0), 0, cfg) == 1

    def test_golden_value(self):
        # Frozen from the arbitrary-precision oracle before implementation.
        cfg = small_config(table_size=1 << 14)
        assert hash_index((2, 3, 5), 0, cfg) == 6392

    def test_golden_values_multi_style_and_large_coords(self):
        cfg4 = small_config(table_size=1 << 14, num_styles=4)
        assert hash_index((2, 3, 5), 1, cfg4) == 6943
        cfg = small_config(table_size=1 << 19)
        assert hash_index((123456789, 987654321, 192837465), 0, cfg) == 422841
        cfg4_big = small_config(table_size=1 << 19, num_styles=4)
        assert hash_index((2**32, 3, 7), 3, cfg4_big) == 394165

    def test_single_style_drops_fourth_term(self):
        # With num_styles=1 the slot must equal the three-term hash even if
        # h4 changes.
        a = small_config(hash_coeffs=(1, 2654435761, 805459861, 97))
        b = small_config(hash_coeffs=(1, 2654435761, 805459861, 131))
        for voxel in [(5, 9, 2), (100, 3, 77)]:
            assert hash_index(voxel, 0, a) == hash_index(voxel, 0, b)

    def test_style_out_of_range(self):
        cfg = small_config(num_styles=2)
        with pytest.raises(DomainError):
            hash_index((1, 1, 1), 2, cfg)
        with pytest.raises(DomainError):
            hash_index((1, 1, 1), -1, cfg)

    def test_negative_voxel_rejected(self):
        with pytest.raises(DomainError):
            hash_index((-1, 0, 0), 0, small_config())

    @given(
        x=st.integers(0, 2**40),
        y=st.integers(0, 2**40),
        z=st.integers(0, 2**40),
        s=st.integers(0, 7),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_oracle(self, x, y, z, s):
        cfg = small_config(table_size=1 << 16, num_styles=8)
        expected = oracle_hash((x, y, z), s, cfg.hash_coeffs, cfg.table_size, num_styles=8)
        assert hash_index((x, y, z), s, cfg) == expected


class TestConfigValidation:
    def test_table_size_power_of_two(self):
        with pytest.raises(DomainError):
            small_config(table_size=1000)

    def test_coeffs_distinct(self):
        with pytest.raises(DomainError):
            small_config(hash_coeffs=(1, 1, 805459861, 2097152999))

    def test_num_styles_positive(self):
        with pytest.raises(DomainError):
            small_config(num_styles=0)

    def test_level_resolution_floor(self):
        cfg = small_config(base_resolution=16, per_level_scale=1.382)
        assert cfg.resolution(0) == 16
        assert cfg.resolution(3) == int(16 * 1.382**3)


class TestEncode:
    def test_lattice_corner_returns_stored_feature(self):
        # base_resolution=4, scale=2: every level resolution divides the next,
        # so a lattice point of the coarsest level is a corner at all levels.
        cfg = small_config(num_levels=3, base_resolution=4, per_level_scale=2.0)
        grid = HashGrid(cfg, seed=0)
        point = torch.tensor([[0.25, 0.5, 0.75]])
        out = grid.encode(point).detach().reshape(cfg.num_levels, -1)
        for level in range(cfg.num_levels):
            res = cfg.resolution(level)
            voxel = (round(0.25 * res), round(0.5 * res), round(0.75 * res))
            slot = hash_index(voxel, 0, cfg)
            stored = grid.table[level, slot].detach()
            assert torch.allclose(out[level], stored, atol=0, rtol=0)

    def test_constant_table_gives_constant_output(self):
        cfg = small_config()
        grid = HashGrid(cfg, seed=0)
        with torch.no_grad():
            grid.table.fill_(0.125)
        pts = torch.rand(16, 3, generator=torch.Generator().manual_seed(1))
        out = grid.encode(pts)
        assert torch.allclose(out, torch.full_like(out, 0.125), atol=1e-6)

    def test_matches_independent_trilinear_oracle(self):
        cfg = small_config()
        grid = HashGrid(cfg, seed=3)
        gen = torch.Generator().manual_seed(7)
        pts = torch.rand(32, 3, generator=gen)
        out = grid.encode(pts).detach().numpy()

        table = grid.table.detach().numpy()
        for n, p in enumerate(pts.numpy()):
            expected = []
            for level in range(cfg.num_levels):
                res = cfg.resolution(level)
                sx, sy, sz = (float(c) * res for c in p)
                v = (int(np.floor(sx)), int(np.floor(sy)), int(np.floor(sz)))
                f = (sx - v[0], sy - v[1], sz - v[2])
                acc = np.zeros(cfg.features_per_level)
                for dx in (0, 1):
                    for dy in (0, 1):
                        for dz in (0, 1):
                            w = (
                                (f[0] if dx else 1 - f[0])
                                * (f[1] if dy else 1 - f[1])
                                * (f[2] if dz else 1 - f[2])
                            )
                            slot = oracle_hash(
                                (v[0] + dx, v[1] + dy, v[2] + dz),
                                0,
                                cfg.hash_coeffs,
                                cfg.table_size,
                            )
                            acc += w * table[level, slot]
                expected.append(acc)
            np.testing.assert_allclose(out[n], np.concatenate(expected), atol=1e-6)

    def test_out_of_box_raises(self):
        grid = HashGrid(small_config(), seed=0)
        with pytest.raises(OutOfBoundsError):
            grid.encode(torch.tensor([[1.5, 0.5, 0.5]]))
        with pytest.raises(OutOfBoundsError):
            grid.encode(torch.tensor([[-0.01, 0.5, 0.5]]))

    def test_deterministic(self):
        grid = HashGrid(small_config(), seed=0)
        pts = torch.rand(8, 3, generator=torch.Generator().manual_seed(5))
        a = grid.encode(pts, 0)
        b = grid.encode(pts, 0)
        assert torch.equal(a, b)

    def test_linear_in_table(self):
        cfg = small_config()
        gen = torch.Generator().manual_seed(11)
        pts = torch.rand(8, 3, generator=gen)
        g1 = HashGrid(cfg, seed=1)
        g2 = HashGrid(cfg, seed=2)
        with torch.no_grad():
            g1.table.mul_(1000.0)  # init range is 1e-4; widen for a meaningful check
            g2.table.mul_(1000.0)
        alpha, beta = 0.7, -1.3
        mixed = HashGrid(cfg, seed=0)
        with torch.no_grad():
            mixed.table.copy_(alpha * g1.table + beta * g2.table)
        lhs = mixed.encode(pts)
        rhs = alpha * g1.encode(pts) + beta * g2.encode(pts)
        assert torch.allclose(lhs, rhs, atol=1e-6)

    def test_continuous_across_voxel_faces(self):
        cfg = small_config(num_levels=3, base_resolution=4, per_level_scale=2.0)
        grid = HashGrid(cfg, seed=4)
        with torch.no_grad():
            grid.table.mul_(1000.0)
        # Face of the finest level at x = k / 16.
        face_x = 5.0 / 16.0
        eps = 1e-6
        left = grid.encode(torch.tensor([[face_x - eps, 0.3, 0.6]]))
        right = grid.encode(torch.tensor([[face_x + eps, 0.3, 0.6]]))
        assert torch.allclose(left, right, atol=1e-5)

    def test_boundary_point_at_box_max_is_valid(self):
        grid = HashGrid(small_config(), seed=0)
        out = grid.encode(torch.tensor([[1.0, 1.0, 1.0]]))
        assert torch.isfinite(out).all()


class TestStyleProperties:
    def test_style_isolation(self):
        cfg = small_config(table_size=1 << 14, num_styles=2)
        rng = np.random.default_rng(0)
        voxels = rng.integers(0, 2048, size=(10_000, 3))
        changed = 0
        for v in voxels:
            if hash_index(tuple(v), 0, cfg) != hash_index(tuple(v), 1, cfg):
                changed += 1
        assert changed / len(voxels) >= 0.95

    def test_coefficient_sensitivity(self):
        # Swapping in a different prime triple reassigns nearly all fine voxels.
        base = small_config(table_size=1 << 14)
        alt = small_config(
            table_size=1 << 14, hash_coeffs=(73856093, 19349663, 83492791, 2097152999)
        )
        rng = np.random.default_rng(1)
        voxels = rng.integers(0, 2048, size=(10_000, 3))
        changed = sum(
            hash_index(tuple(v), 0, base) != hash_index(tuple(v), 0, alt) for v in voxels
        )
        assert changed / len(voxels) >= 0.95


class TestGradientCheck:
    def test_constant_table_linear_exact(self):
        grid = HashGrid(small_config(), seed=0)
        with torch.no_grad():
            grid.table.fill_(0.5)
        probe = torch.ones(grid.config.feature_dim)
        err = encode_gradient_check(grid, torch.tensor([0.311, 0.527, 0.743]), 0, probe)
        assert err <= 1e-4

    def test_random_table(self):
        grid = HashGrid(small_config(), seed=9)
        with torch.no_grad():
            grid.table.normal_(0.0, 1.0)
        gen = torch.Generator().manual_seed(2)
        probe = torch.randn(grid.config.feature_dim, generator=gen)
        err = encode_gradient_check(
            grid, torch.tensor([0.311, 0.527, 0.743]), 0, probe, step=1e-3
        )
        assert err <= 1e-3

    def test_zero_probe_rejected(self):
        grid = HashGrid(small_config(), seed=0)
        with pytest.raises(DomainError):
            encode_gradient_check(
                grid, torch.tensor([0.311, 0.527, 0.743]), 0, torch.zeros(grid.config.feature_dim)
            )

    def test_face_point_rejected(self):
        cfg = small_config(num_levels=2, base_resolution=4, per_level_scale=2.0)
        grid = HashGrid(cfg, seed=0)
        probe = torch.ones(cfg.feature_dim)
        with pytest.raises(DomainError):
            encode_gradient_check(grid, torch.tensor([0.25, 0.3, 0.6]), 0, probe)


def test_default_coeffs_are_instant_style():
    assert DEFAULT_HASH_COEFFS == (1, 2654435761, 805459861, 2097152999)


def test_custom_bounding_box_encoding():
    box = BoundingBox((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))
    cfg = small_config(bounding_box=box)
    grid = HashGrid(cfg, seed=0)
    out = grid.encode(torch.tensor([[-1.5, 0.0, 1.9]]))
    assert out.shape == (1, cfg.feature_dim)
    with pytest.raises(OutOfBoundsError):
        grid.encode(torch.tensor([[2.5, 0.0, 0.0]]))
