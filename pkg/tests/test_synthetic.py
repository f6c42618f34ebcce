"""Tests for the synthetic toy scene and style fixtures."""

import json

import numpy as np
import pytest

from stylefield.dataset import ingest_dataset, load_camera_json
from stylefield.errors import DomainError
from stylefield.segmentation import load_region_map
from stylefield.synthetic import (
    NUM_TOY_REGIONS,
    corrupt_pose_row,
    make_style_image,
    make_toy_dataset,
    render_ground_truth,
    toy_cameras,
    write_style_fixture,
)


class TestToyCameras:
    def test_count_and_intrinsics(self):
        cameras = toy_cameras(num_views=20, size=64)
        assert len(cameras) == 20
        for camera in cameras:
            assert camera.width == camera.height == 64
            assert camera.fx == camera.fy == 64 * 1.875
            assert camera.near == 1.0 and camera.far == 2.4

    def test_rotations_orthonormal(self):
        for camera in toy_cameras(num_views=5):
            rot = camera.camera_to_world[:3, :3]
            assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-9)

    def test_all_look_at_common_point(self):
        target = np.array([0.5, 0.5, 0.62])
        for camera in toy_cameras(num_views=7):
            pos = camera.camera_to_world[:3, 3]
            forward = camera.camera_to_world[:3, 2]
            to_target = target - pos
            to_target = to_target / np.linalg.norm(to_target)
            assert np.allclose(forward, to_target, atol=1e-9)

    def test_size_scales_focal(self):
        camera = toy_cameras(num_views=1, size=32)[0]
        assert camera.fx == 32 * 1.875
        assert camera.cx == 16.0


class TestGroundTruth:
    def test_full_coverage_and_ranges(self):
        camera = toy_cameras(num_views=3, size=24)[1]
        rgb, labels, opacity = render_ground_truth(camera, n_samples=192)
        assert rgb.shape == (24, 24, 3)
        assert labels.shape == (24, 24)
        assert float(opacity.min()) >= 0.995
        assert rgb.min() >= 0.0 and rgb.max() <= 1.0
        assert set(np.unique(labels)) <= set(range(NUM_TOY_REGIONS))

    def test_center_view_shows_all_regions(self):
        camera = toy_cameras(num_views=3, size=32)[1]
        _, labels, _ = render_ground_truth(camera, n_samples=192)
        assert set(np.unique(labels)) == {0, 1, 2}

    def test_wall_dominates_border(self):
        camera = toy_cameras(num_views=3, size=32)[1]
        _, labels, _ = render_ground_truth(camera, n_samples=192)
        border = np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
        assert (border == 0).mean() > 0.9


class TestToyDataset:
    def test_layout_and_reload(self, tmp_path):
        make_toy_dataset(tmp_path, num_views=6, size=16)
        payload = load_camera_json(tmp_path / "cameras.json")
        assert len(payload["frames"]) == 6
        assert payload["w"] == payload["h"] == 16
        assert payload["near"] == 1.0 and payload["far"] == 2.4
        assert len(list((tmp_path / "images").glob("*.png"))) == 6
        region_map, sidecar = load_region_map(tmp_path / "gt_regions" / "view_000.png")
        assert region_map.count == NUM_TOY_REGIONS
        assert region_map.provenance == "scene"
        assert sidecar["source_image"] == "images/view_000.png"

    def test_ingests_cleanly(self, tmp_path):
        make_toy_dataset(tmp_path, num_views=6, size=16)
        dataset = ingest_dataset(tmp_path, source_format="camera-json")
        assert len(dataset.views) == 6
        assert dataset.resolution == (16, 16)

    def test_corrupt_pose_row_names_frame(self, tmp_path):
        make_toy_dataset(tmp_path, num_views=6, size=16)
        corrupt_pose_row(tmp_path / "cameras.json", 3)
        with pytest.raises(DomainError, match="frame 3"):
            ingest_dataset(tmp_path, source_format="camera-json")


class TestStyleFixture:
    def test_masks_partition_image(self):
        image, masks = make_style_image(size=64)
        assert image.shape == (64, 64, 3)
        assert len(masks) == 2
        combined = masks[0].astype(int) + masks[1].astype(int)
        assert (combined == 1).all()

    def test_palettes_differ(self):
        duo, _ = make_style_image(size=64, palette="duotone")
        ember, _ = make_style_image(size=64, palette="ember")
        assert np.abs(duo - ember).mean() > 0.2

    def test_duotone_halves_are_warm_and_cool(self):
        image, (left, right) = make_style_image(size=64, palette="duotone")
        left_mean = image[left].mean(axis=0)
        right_mean = image[right].mean(axis=0)
        assert left_mean[0] > left_mean[2]  # red-dominant left
        assert right_mean[2] > right_mean[0]  # blue-dominant right

    def test_unknown_palette(self):
        with pytest.raises(ValueError, match="palette"):
            make_style_image(palette="vaporwave")

    def test_write_fixture_round_trip(self, tmp_path):
        image_path, regions_path = write_style_fixture(tmp_path, size=32, stem="s0")
        assert image_path.name == "s0.png"
        region_map, _ = load_region_map(regions_path)
        assert region_map.count == 2
        assert region_map.provenance == "style"
        _, masks = make_style_image(size=32)
        assert (region_map.labels[masks[0]] == 0).all()
        assert (region_map.labels[masks[1]] == 1).all()


def test_corrupt_pose_row_writes_nan(tmp_path):
    make_toy_dataset(tmp_path, num_views=3, size=16)
    corrupt_pose_row(tmp_path / "cameras.json", 1)
    payload = json.loads((tmp_path / "cameras.json").read_text())
    assert all(v != v for v in payload["frames"][1]["transform"])
