import pytest
import torch

from stylefield.errors import DomainError, StageError
from stylefield.field import (
    STAGE_RECONSTRUCTED,
    RadianceModel,
    freeze_geometry,
    geometry_digest,
    trainable_parameters,
)
from stylefield.hashgrid import HashGridConfig


def tiny_configs(num_styles=1):
    geo = HashGridConfig(
        num_levels=4, base_resolution=4, per_level_scale=1.5, table_size=1 << 10
    )
    app = HashGridConfig(
        num_levels=4,
        base_resolution=4,
        per_level_scale=1.5,
        table_size=1 << 10,
        num_styles=num_styles,
    )
    return geo, app


def make_model(num_styles=1, regions=3, seed=0):
    geo, app = tiny_configs(num_styles)
    return RadianceModel(geo, app, num_scene_regions=regions, seed=seed)


def rand_points(n, seed=0):
    return torch.rand(n, 3, generator=torch.Generator().manual_seed(seed))


class TestQuery:
    def test_deterministic(self):
        model = make_model()
        pts = rand_points(16)
        a = model.query(pts)
        b = model.query(pts)
        assert torch.equal(a.sigma, b.sigma)
        assert torch.equal(a.rgb, b.rgb)
        assert torch.equal(a.region_logits, b.region_logits)

    def test_sigma_independent_of_style(self):
        model = make_model(num_styles=3)
        pts = rand_points(64)
        s0 = model.query(pts, style_index=0)
        s1 = model.query(pts, style_index=1)
        assert torch.equal(s0.sigma, s1.sigma)

    def test_rgb_may_differ_between_styles(self):
        model = make_model(num_styles=2, seed=1)
        # Push the appearance table away from its near-zero init so the
        # style-dependent slots actually differ.
        with torch.no_grad():
            model.appearance_grid.table.normal_(0.0, 1.0)
        pts = rand_points(64, seed=2)
        s0 = model.query(pts, style_index=0)
        s1 = model.query(pts, style_index=1)
        assert not torch.allclose(s0.rgb, s1.rgb)

    def test_output_ranges(self):
        model = make_model(seed=5)
        with torch.no_grad():
            model.appearance_grid.table.normal_(0.0, 10.0)
            model.geometry_grid.table.normal_(0.0, 10.0)
        pts = rand_points(100, seed=3)
        out = model.query(pts)
        assert torch.isfinite(out.sigma).all() and (out.sigma >= 0).all()
        assert (out.rgb >= 0).all() and (out.rgb <= 1).all()
        assert out.region_logits.shape == (100, 3)
        assert torch.isfinite(out.region_logits).all()

    def test_geometry_config_must_be_single_style(self):
        geo, app = tiny_configs(num_styles=2)
        bad_geo = HashGridConfig(
            num_levels=4, base_resolution=4, per_level_scale=1.5, table_size=1 << 10, num_styles=2
        )
        with pytest.raises(DomainError):
            RadianceModel(bad_geo, app, num_scene_regions=3)


class TestFreeze:
    def test_freeze_before_reconstruction_done(self):
        model = make_model()
        with pytest.raises(StageError):
            freeze_geometry(model)

    def test_freeze_is_idempotent_and_digest_stable(self):
        model = make_model()
        model.stage = STAGE_RECONSTRUCTED
        d1 = freeze_geometry(model)
        d2 = freeze_geometry(model)
        assert d1 == d2
        assert d1 == geometry_digest(model)

    def test_digest_unchanged_by_appearance_updates(self):
        model = make_model()
        model.stage = STAGE_RECONSTRUCTED
        d1 = freeze_geometry(model)
        opt = torch.optim.Adam(trainable_parameters(model, "stylization").values(), lr=1e-2)
        pts = rand_points(32)
        for _ in range(5):
            opt.zero_grad()
            out = model.query(pts)
            loss = out.rgb.square().mean()
            loss.backward()
            opt.step()
        assert geometry_digest(model) == d1

    def test_sigma_identical_after_stylization_steps(self):
        model = make_model(seed=2)
        model.stage = STAGE_RECONSTRUCTED
        freeze_geometry(model)
        pts = rand_points(1000, seed=9)
        before = model.query(pts).sigma.detach().clone()
        opt = torch.optim.Adam(trainable_parameters(model, "stylization").values(), lr=1e-2)
        for _ in range(10):
            opt.zero_grad()
            loss = model.query(pts).rgb.square().mean()
            loss.backward()
            opt.step()
        after = model.query(pts).sigma.detach()
        assert torch.equal(before, after)

    def test_digest_sensitive_to_geometry_change(self):
        model = make_model()
        d1 = geometry_digest(model)
        with torch.no_grad():
            model.geometry_grid.table[0, 0, 0] += 1.0
        assert geometry_digest(model) != d1


class TestTrainableParameters:
    def test_reconstruction_includes_segmentation_head(self):
        model = make_model()
        names = set(trainable_parameters(model, "reconstruction"))
        assert any(n.startswith("segmentation_mlp") for n in names)
        assert any(n.startswith("geometry_grid") for n in names)
        assert names == {n for n, _ in model.named_parameters()}

    def test_stylization_excludes_geometry(self):
        model = make_model()
        names = set(trainable_parameters(model, "stylization"))
        assert not any(n.startswith("geometry") for n in names)

    def test_stylization_excludes_segmentation_head(self):
        model = make_model()
        names = set(trainable_parameters(model, "stylization"))
        assert not any(n.startswith("segmentation_mlp") for n in names)
        assert names == {
            n
            for n, _ in model.named_parameters()
            if n.startswith(("appearance_grid", "appearance_mlp"))
        }

    def test_unknown_stage(self):
        with pytest.raises(DomainError):
            trainable_parameters(make_model(), "warmup")


def test_seeded_construction_is_deterministic():
    a = make_model(seed=7)
    b = make_model(seed=7)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert torch.equal(pa, pb)
