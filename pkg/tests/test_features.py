"""Tests for the frozen convolutional feature extractor."""

import hashlib

import numpy as np
import pytest
import torch

from stylefield.errors import DomainError, ExternalDependencyError
from stylefield.features import (
    FEATURE_DEPTH,
    IMAGENET_MEAN,
    FeatureExtractor,
    FeatureMap,
    extract_features,
    resize_long_side,
)

# torchvision layer index -> (out_channels, in_channels) of the conv stack
_LAYER_SHAPES = {
    "0": (64, 3),
    "2": (64, 64),
    "5": (128, 64),
    "7": (128, 128),
    "10": (256, 128),
    "12": (256, 256),
    "14": (256, 256),
}


def random_image(h, w, seed=0):
    return np.random.default_rng(seed).random((h, w, 3)).astype(np.float32)


def test_quarter_resolution_and_depth():
    ex = FeatureExtractor(weights="random", seed=0)
    fm = extract_features(random_image(64, 64), ex)
    assert tuple(fm.features.shape) == (16, 16, FEATURE_DEPTH)
    assert fm.source_resolution == (64, 64)
    assert fm.extractor_id == "conv3-random-seed0"
    assert fm.depth == FEATURE_DEPTH
    assert fm.num_cells == 256
    assert fm.cells().shape == (256, FEATURE_DEPTH)


def test_odd_dimensions_floor_at_each_pool():
    ex = FeatureExtractor(weights="random", seed=0)
    fm = extract_features(random_image(26, 30), ex)
    assert tuple(fm.features.shape) == (6, 7, FEATURE_DEPTH)


def test_features_nonnegative():
    ex = FeatureExtractor(weights="random", seed=2)
    fm = extract_features(random_image(16, 16, seed=5), ex)
    assert float(fm.features.min()) >= 0.0


def test_same_seed_reproducible_different_seed_not():
    img = random_image(16, 16, seed=1)
    a = extract_features(img, FeatureExtractor(weights="random", seed=3))
    b = extract_features(img, FeatureExtractor(weights="random", seed=3))
    c = extract_features(img, FeatureExtractor(weights="random", seed=4))
    assert torch.equal(a.features, b.features)
    assert not torch.equal(a.features, c.features)
    assert a.extractor_id == b.extractor_id == "conv3-random-seed3"
    assert c.extractor_id == "conv3-random-seed4"


def test_parameters_frozen():
    ex = FeatureExtractor(weights="random", seed=0)
    assert all(not p.requires_grad for p in ex.parameters())
    assert not ex.training


def test_gradient_flows_through_tensor_input():
    ex = FeatureExtractor(weights="random", seed=0)
    img = torch.rand(8, 8, 3, generator=torch.Generator().manual_seed(0))
    img.requires_grad_(True)
    fm = extract_features(img, ex)
    assert fm.features.requires_grad
    fm.features.sum().backward()
    assert img.grad is not None
    assert torch.isfinite(img.grad).all()


def test_numpy_input_detached():
    ex = FeatureExtractor(weights="random", seed=0)
    fm = extract_features(random_image(8, 8), ex)
    assert not fm.features.requires_grad


def test_mean_valued_image_maps_to_zero_features():
    # random init has zero biases, so a mean-normalized zero input stays zero
    ex = FeatureExtractor(weights="random", seed=0)
    img = np.broadcast_to(np.asarray(IMAGENET_MEAN, dtype=np.float32), (8, 8, 3)).copy()
    fm = extract_features(img, ex)
    assert float(fm.features.abs().max()) == 0.0
    other = extract_features(np.full((8, 8, 3), 0.9, dtype=np.float32), ex)
    assert float(other.features.abs().max()) > 0.0


def test_image_validation():
    ex = FeatureExtractor(weights="random", seed=0)
    with pytest.raises(DomainError):
        extract_features(np.zeros((8, 8), dtype=np.float32), ex)
    with pytest.raises(DomainError):
        extract_features(np.zeros((8, 8, 4), dtype=np.float32), ex)
    with pytest.raises(DomainError):
        extract_features(np.zeros((3, 8, 3), dtype=np.float32), ex)
    with pytest.raises(DomainError):
        extract_features(np.full((8, 8, 3), 1.5, dtype=np.float32), ex)
    with pytest.raises(DomainError):
        extract_features(np.full((8, 8, 3), -0.5, dtype=np.float32), ex)


def test_feature_map_validation():
    with pytest.raises(DomainError):
        FeatureMap(torch.zeros(4, 4), (16, 16), "x")
    with pytest.raises(DomainError):
        FeatureMap(torch.full((2, 2, 3), float("nan")), (8, 8), "x")


def test_missing_pretrained_weights_raise():
    with pytest.raises(ExternalDependencyError, match="no_such_weights.pth"):
        FeatureExtractor(weights="/nonexistent/no_such_weights.pth")


def _synthetic_state(seed=0, key_fmt="features.{idx}.{kind}"):
    gen = torch.Generator().manual_seed(seed)
    state = {}
    for idx, (out_c, in_c) in _LAYER_SHAPES.items():
        w = torch.randn(out_c, in_c, 3, 3, generator=gen) * 0.05
        b = torch.randn(out_c, generator=gen) * 0.05
        state[key_fmt.format(idx=idx, kind="weight")] = w
        state[key_fmt.format(idx=idx, kind="bias")] = b
    return state


def test_pretrained_load_with_layer_index_keys(tmp_path):
    state = _synthetic_state(seed=7)
    path = tmp_path / "weights.pth"
    torch.save(state, path)
    ex = FeatureExtractor(weights=path)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    assert ex.identifier == f"conv3-pretrained-{digest[:16]}"
    assert torch.equal(ex.conv1_1.weight, state["features.0.weight"])
    assert torch.equal(ex.conv3_3.bias, state["features.14.bias"])
    assert all(not p.requires_grad for p in ex.parameters())
    fm = extract_features(random_image(16, 16), ex)
    assert tuple(fm.features.shape) == (4, 4, FEATURE_DEPTH)


def test_pretrained_load_with_named_keys(tmp_path):
    names = {
        "0": "conv1_1",
        "2": "conv1_2",
        "5": "conv2_1",
        "7": "conv2_2",
        "10": "conv3_1",
        "12": "conv3_2",
        "14": "conv3_3",
    }
    raw = _synthetic_state(seed=8)
    state = {}
    for idx, name in names.items():
        state[f"{name}.weight"] = raw[f"features.{idx}.weight"]
        state[f"{name}.bias"] = raw[f"features.{idx}.bias"]
    path = tmp_path / "named.pth"
    torch.save(state, path)
    ex = FeatureExtractor(weights=path)
    assert torch.equal(ex.conv2_2.weight, state["conv2_2.weight"])


def test_pretrained_missing_key_raises(tmp_path):
    state = _synthetic_state(seed=9)
    del state["features.10.weight"]
    path = tmp_path / "partial.pth"
    torch.save(state, path)
    with pytest.raises(ExternalDependencyError, match="features.10.weight"):
        FeatureExtractor(weights=path)


def test_resize_long_side_shapes():
    img = random_image(64, 32)
    out = resize_long_side(img, target=512)
    assert out.shape == (512, 256, 3)
    assert out.dtype == np.float32
    assert 0.0 <= out.min() and out.max() <= 1.0
    small = resize_long_side(img, target=8)
    assert small.shape == (8, 4, 3)
    wide = resize_long_side(random_image(32, 64), target=16)
    assert wide.shape == (8, 16, 3)


def test_resize_long_side_noop_and_validation():
    img = random_image(20, 12)
    assert resize_long_side(img, target=20) is img
    with pytest.raises(DomainError):
        resize_long_side(img, target=0)
