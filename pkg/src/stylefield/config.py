"""Run configuration: dataclasses plus a YAML file format mirroring them.

Config files nest keys exactly as the dataclass fields do; unknown keys
are rejected so typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigurationError


@dataclass
class GridSettings:
    """Hash-grid shape for one branch."""

    num_levels: int = 8
    base_resolution: int = 16
    per_level_scale: float = 1.5
    features_per_level: int = 2
    table_size: int = 2**19


@dataclass
class ReconstructionSchedule:
    iterations: int = 20000
    post_transform_iterations: int = 2000
    learning_rate: float = 0.01
    batch_pixels: int = 4096

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("reconstruction.iterations must be >= 1")
        if self.post_transform_iterations < 0:
            raise ConfigurationError("reconstruction.post_transform_iterations must be >= 0")
        if self.batch_pixels < 1:
            raise ConfigurationError("reconstruction.batch_pixels must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("reconstruction.learning_rate must be > 0")


@dataclass
class StylizationSchedule:
    iterations: int = 1000
    learning_rate: float = 0.01
    decay_fraction: float = 0.8
    decay_factor: float = 0.1
    patch_size: int = 32

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("stylization.iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("stylization.learning_rate must be > 0")
        if not 0.0 < self.decay_fraction <= 1.0:
            raise ConfigurationError("stylization.decay_fraction must be in (0,1]")
        if self.decay_factor <= 0:
            raise ConfigurationError("stylization.decay_factor must be > 0")
        if self.patch_size < 1:
            raise ConfigurationError("stylization.patch_size must be >= 1")


@dataclass
class RenderSettings:
    n_samples: int = 128
    chunk_size: int = 4096
    white_background: bool = False

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigurationError("render.n_samples must be >= 1")
        if self.chunk_size < 1:
            raise ConfigurationError("render.chunk_size must be >= 1")


@dataclass
class StyleEntry:
    """One style: its image, matching source, and appearance slot."""

    image: str
    matching: str = "auto"
    style_index: int = 0
    regions: str | None = None


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    lambda_ce: float = 0.01
    lambda_c: float = 0.001
    lambda_s: float = 1.0
    beta: float = 1.0
    ce_reduction: str = "sum"
    feature_weights: str = "random"
    reconstruction: ReconstructionSchedule = field(default_factory=ReconstructionSchedule)
    stylization: StylizationSchedule = field(default_factory=StylizationSchedule)
    render: RenderSettings = field(default_factory=RenderSettings)
    geometry_grid: GridSettings = field(default_factory=GridSettings)
    appearance_grid: GridSettings = field(default_factory=GridSettings)
    styles: list[StyleEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.lambda_ce < 0:
            raise ConfigurationError("lambda_ce must be >= 0")
        if self.lambda_c < 0:
            raise ConfigurationError("lambda_c must be >= 0")
        if self.lambda_s < 0:
            raise ConfigurationError("lambda_s must be >= 0")
        if self.beta < 0:
            raise ConfigurationError("beta must be >= 0")
        if self.ce_reduction not in ("sum", "mean"):
            raise ConfigurationError("ce_reduction must be 'sum' or 'mean'")
        if not self.styles:
            raise ConfigurationError("config must list at least one style entry")
        indices = sorted(entry.style_index for entry in self.styles)
        if indices != list(range(len(self.styles))):
            raise ConfigurationError(
                f"style indices must be contiguous from 0, got {indices}"
            )

    @property
    def num_styles(self) -> int:
        return len(self.styles)

    def style_by_index(self, style_index: int) -> StyleEntry:
        for entry in self.styles:
            if entry.style_index == style_index:
                return entry
        raise ConfigurationError(f"no style entry with index {style_index}")


_SECTIONS = {
    "reconstruction": ReconstructionSchedule,
    "stylization": StylizationSchedule,
    "render": RenderSettings,
    "geometry_grid": GridSettings,
    "appearance_grid": GridSettings,
}


def _build_section(cls, raw: dict, name: str):
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config section {name!r} must be a mapping")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigurationError(f"unknown key {sorted(unknown)[0]!r} in section {name!r}")
    return cls(**raw)


def config_from_dict(raw: dict) -> RunConfig:
    """Build a RunConfig from nested dictionaries, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a mapping")
    allowed = set(RunConfig.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigurationError(f"unknown config key {sorted(unknown)[0]!r}")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            kwargs[key] = _build_section(_SECTIONS[key], value, key)
        elif key == "styles":
            if not isinstance(value, list):
                raise ConfigurationError("styles must be a list")
            entries = []
            for i, item in enumerate(value):
                entries.append(_build_section(StyleEntry, item, f"styles[{i}]"))
            kwargs[key] = entries
        else:
            kwargs[key] = value
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    """Read a YAML config file into a validated RunConfig."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config file {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raise ConfigurationError(f"config file {path} is empty")
    return config_from_dict(raw)


def save_config(config: RunConfig, path) -> Path:
    """Write a RunConfig back out as YAML with the same nesting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(asdict(config), sort_keys=False))
    return path


def toy_config(output_dir: str, styles: list[tuple[str, str | None]]) -> RunConfig:
    """Desk-scale profile sized for the synthetic toy scene.

    styles is a list of (image_path, regions_path_or_None) pairs, assigned
    style indices in order.
    """
    entries = [
        StyleEntry(image=str(image), matching="auto", style_index=i,
                   regions=None if regions is None else str(regions))
        for i, (image, regions) in enumerate(styles)
    ]
    def grid():
        return GridSettings(
            num_levels=6, base_resolution=4, per_level_scale=1.9, table_size=2**15
        )

    return RunConfig(
        seed=0,
        output_dir=output_dir,
        reconstruction=ReconstructionSchedule(
            iterations=500,
            post_transform_iterations=100,
            learning_rate=0.01,
            batch_pixels=512,
        ),
        stylization=StylizationSchedule(iterations=64, learning_rate=0.01, patch_size=32),
        render=RenderSettings(n_samples=64, chunk_size=4096),
        geometry_grid=grid(),
        appearance_grid=grid(),
        styles=entries,
    )
