"""Tests for run configuration parsing and validation."""

import pytest

from stylefield.config import (
    RunConfig,
    StyleEntry,
    config_from_dict,
    load_config,
    save_config,
    toy_config,
)
from stylefield.errors import ConfigurationError


def one_style():
    return [StyleEntry(image="style.png")]


class TestDefaults:
    def test_loss_weights(self):
        config = RunConfig(styles=one_style())
        assert config.lambda_ce == 0.01
        assert config.lambda_c == 0.001
        assert config.lambda_s == 1.0
        assert config.beta == 1.0
        assert config.ce_reduction == "sum"
        assert config.feature_weights == "random"

    def test_schedules(self):
        config = RunConfig(styles=one_style())
        assert config.reconstruction.iterations == 20000
        assert config.reconstruction.post_transform_iterations == 2000
        assert config.reconstruction.batch_pixels == 4096
        assert config.stylization.iterations == 1000
        assert config.stylization.learning_rate == 0.01
        assert config.stylization.decay_fraction == 0.8
        assert config.stylization.decay_factor == 0.1
        assert config.render.n_samples == 128

    def test_num_styles(self):
        config = RunConfig(
            styles=[StyleEntry(image="a.png", style_index=0),
                    StyleEntry(image="b.png", style_index=1)]
        )
        assert config.num_styles == 2
        assert config.style_by_index(1).image == "b.png"

    def test_style_by_index_missing(self):
        config = RunConfig(styles=one_style())
        with pytest.raises(ConfigurationError, match="no style entry"):
            config.style_by_index(3)


class TestValidation:
    @pytest.mark.parametrize("key", ["lambda_ce", "lambda_c", "lambda_s", "beta"])
    def test_negative_weight(self, key):
        with pytest.raises(ConfigurationError, match=key):
            RunConfig(styles=one_style(), **{key: -0.1})

    def test_bad_reduction(self):
        with pytest.raises(ConfigurationError, match="ce_reduction"):
            RunConfig(styles=one_style(), ce_reduction="max")

    def test_requires_styles(self):
        with pytest.raises(ConfigurationError, match="at least one style"):
            RunConfig(styles=[])

    def test_noncontiguous_style_indices(self):
        with pytest.raises(ConfigurationError, match="contiguous"):
            RunConfig(
                styles=[StyleEntry(image="a.png", style_index=0),
                        StyleEntry(image="b.png", style_index=2)]
            )


class TestFromDict:
    def test_nested_sections(self):
        config = config_from_dict(
            {
                "seed": 7,
                "reconstruction": {"iterations": 50, "batch_pixels": 256},
                "render": {"n_samples": 32},
                "styles": [{"image": "s.png"}],
            }
        )
        assert config.seed == 7
        assert config.reconstruction.iterations == 50
        assert config.reconstruction.learning_rate == 0.01  # untouched default
        assert config.render.n_samples == 32

    def test_unknown_root_key(self):
        with pytest.raises(ConfigurationError, match="'colour'"):
            config_from_dict({"colour": 1, "styles": [{"image": "s.png"}]})

    def test_unknown_section_key(self):
        with pytest.raises(ConfigurationError, match="'steps'.*'reconstruction'"):
            config_from_dict(
                {"reconstruction": {"steps": 10}, "styles": [{"image": "s.png"}]}
            )

    def test_styles_must_be_list(self):
        with pytest.raises(ConfigurationError, match="styles must be a list"):
            config_from_dict({"styles": {"image": "s.png"}})

    def test_non_mapping_root(self):
        with pytest.raises(ConfigurationError, match="mapping"):
            config_from_dict([1, 2, 3])

    def test_style_entry_fields(self):
        config = config_from_dict(
            {
                "styles": [
                    {"image": "a.png", "matching": "m.json", "regions": "r.png"},
                ]
            }
        )
        entry = config.styles[0]
        assert entry.matching == "m.json"
        assert entry.regions == "r.png"


class TestYamlRoundTrip:
    def test_round_trip(self, tmp_path):
        config = RunConfig(
            seed=3,
            output_dir="runs/x",
            styles=[StyleEntry(image="a.png"), StyleEntry(image="b.png", style_index=1)],
        )
        config.reconstruction.iterations = 77
        path = save_config(config, tmp_path / "run.yaml")
        restored = load_config(path)
        assert restored == config

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(tmp_path / "absent.yaml")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        with pytest.raises(ConfigurationError, match="empty"):
            load_config(path)

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("styles: [{image: 'a.png'\n")
        with pytest.raises(ConfigurationError, match="not valid YAML"):
            load_config(path)


class TestToyProfile:
    def test_two_styles(self):
        config = toy_config("runs/toy", [("a.png", "a.regions.png"), ("b.png", None)])
        assert config.num_styles == 2
        assert config.styles[0].regions == "a.regions.png"
        assert config.styles[1].regions is None
        assert config.styles[1].style_index == 1

    def test_desk_scale(self):
        config = toy_config("runs/toy", [("a.png", None)])
        assert config.reconstruction.iterations < 2000
        assert config.geometry_grid.table_size <= 2**16
        assert config.render.n_samples <= 128

    def test_grids_independent(self):
        config = toy_config("runs/toy", [("a.png", None)])
        config.geometry_grid.num_levels = 2
        assert config.appearance_grid.num_levels != 2
