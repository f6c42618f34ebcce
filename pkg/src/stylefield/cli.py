"""Command-line workflow: ingest, segment, match, train, render, serve.

Every post-reconstruction command operates on a run directory (--out)
that holds run.json, the config copy, and the checkpoints written so
far, so each step can be rerun from the directory alone.
"""

from __future__ import annotations

import functools
import json
from pathlib import Path

import click

from .errors import StyleFieldError


def _handled(fn):
    """Surface library errors as clean CLI failures instead of tracebacks."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StyleFieldError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _require(ctx, key: str, flag: str):
    value = ctx.obj.get(key)
    if value is None:
        raise click.UsageError(f"{flag} is required for this command")
    return value


def _read_run(run_dir: Path):
    from .config import load_config
    from .dataset import load_dataset
    from .errors import ConfigurationError

    manifest_path = run_dir / "run.json"
    if not manifest_path.exists():
        raise ConfigurationError(f"run directory {run_dir} has no run.json")
    manifest = json.loads(manifest_path.read_text())

    def resolve(value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else run_dir / path

    dataset = load_dataset(resolve(manifest["dataset"]))
    config = load_config(resolve(manifest["config"]))
    return dataset, config


def _load_checkpoint_for_render(run_dir: Path):
    from .checkpoint import load_checkpoint
    from .errors import ConfigurationError

    for name in ("stylized.pt", "reconstructed.pt"):
        path = run_dir / "checkpoints" / name
        if path.exists():
            return load_checkpoint(path)
    raise ConfigurationError(f"no checkpoint in {run_dir}; run reconstruction first")


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="Run configuration file (YAML).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Output directory (run directory for training commands).")
@click.pass_context
def main(ctx, config_path, seed, out_dir):
    """Locally stylized radiance fields: full training and editing workflow."""
    ctx.ensure_object(dict)
    ctx.obj.update(config=config_path, seed=seed, out=out_dir)


@main.command()
@click.argument("source", type=click.Path(exists=True, path_type=Path))
@click.option("--format", "source_format", type=click.Choice(["camera-json", "llff"]),
              default="camera-json", show_default=True)
@click.pass_context
@_handled
def ingest(ctx, source, source_format):
    """Read a posed image set and write a dataset manifest."""
    from .dataset import ingest_dataset, save_dataset

    out = _require(ctx, "out", "--out")
    dataset = ingest_dataset(source, source_format=source_format)
    manifest = save_dataset(dataset, out / "dataset")
    w, h = dataset.resolution
    click.echo(
        f"ingested {len(dataset.views)} views at {w}x{h} "
        f"({len(dataset.train_indices)} train / {len(dataset.holdout_indices)} holdout)"
    )
    click.echo(f"manifest: {manifest}")


@main.command("segment-scene")
@click.argument("dataset_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--iterations", type=int, default=500, show_default=True)
@click.option("--max-regions", type=int, default=64, show_default=True,
              help="Upper bound q on the discovered region count.")
@click.pass_context
@_handled
def segment_scene(ctx, dataset_dir, iterations, max_regions):
    """Discover scene regions across the training views and attach them."""
    from .dataset import attach_region_maps, load_dataset, save_dataset
    from .segmentation import (
        SegNetConfig,
        save_region_map,
        segment_views,
        train_scene_segmenter,
    )

    seed = ctx.obj.get("seed") or 0
    dataset = load_dataset(dataset_dir)
    train_images = [view.load_image() for view in dataset.train_views()]
    segmenter, count = train_scene_segmenter(
        train_images,
        SegNetConfig(q=max_regions, iterations=iterations),
        rng_seed=seed,
    )
    all_images = [view.load_image() for view in dataset.views]
    maps = segment_views(segmenter, all_images)

    region_dir = Path(dataset_dir) / "scene_regions"
    region_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for i, region_map in enumerate(maps):
        path = region_dir / f"view_{i:03d}.png"
        save_region_map(path, region_map, source_image=str(dataset.views[i].image_path))
        paths[i] = path
    attach_region_maps(dataset, paths)
    save_dataset(dataset, dataset_dir)
    click.echo(f"found {count} scene regions; maps in {region_dir}")


@main.command("segment-style")
@click.argument("image_path", type=click.Path(exists=True, path_type=Path))
@click.option("--clusters", type=int, default=4, show_default=True,
              help="Color clusters proposed as candidate masks.")
@click.pass_context
@_handled
def segment_style(ctx, image_path, clusters):
    """Extract style regions from a style image and write the label map."""
    from .features import resize_long_side
    from .images import load_image
    from .segmentation import (
        ColorClusterBackend,
        extract_style_masks,
        filter_style_regions,
        save_region_map,
    )

    seed = ctx.obj.get("seed") or 0
    image = resize_long_side(load_image(image_path), 512)
    backend = ColorClusterBackend(num_clusters=clusters, seed=seed)
    masks = extract_style_masks(image, backend)
    regions = filter_style_regions(masks)

    out = ctx.obj.get("out") or image_path.parent
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{image_path.stem}.regions.png"
    save_region_map(target, regions.region_map, source_image=str(image_path))
    click.echo(f"kept {regions.region_map.count} style regions -> {target}")


@main.command()
@click.option("--style", "style_index", type=int, default=0, show_default=True)
@click.option("--file", "file_out", type=click.Path(path_type=Path), default=None,
              help="Also write the matching JSON to this path.")
@click.pass_context
@_handled
def match(ctx, style_index, file_out):
    """Auto-solve the scene-to-style matching and persist it in the run."""
    from dataclasses import replace

    from . import pipeline
    from .checkpoint import load_checkpoint
    from .features import FeatureExtractor, extract_features, resize_long_side
    from .images import load_image
    from .segmentation import downscale_region_map

    run_dir = _require(ctx, "out", "--out")
    dataset, config = _read_run(run_dir)
    checkpoint = load_checkpoint(run_dir / "checkpoints" / "reconstructed.pt")
    entry = replace(config.style_by_index(style_index), matching="auto")
    extractor = FeatureExtractor(weights=config.feature_weights, seed=0)

    image = resize_long_side(load_image(entry.image), 512)
    region_map = pipeline._resolve_style_regions(entry, image)
    features = extract_features(image, extractor)
    fh, fw = features.features.shape[:2]
    map_small = downscale_region_map(region_map, fw, fh)
    pipeline._resolve_matching(
        entry,
        checkpoint.model,
        dataset,
        config,
        extractor,
        checkpoint.model.num_scene_regions,
        features,
        map_small,
        run_dir,
    )
    saved = run_dir / "matchings" / f"style_{style_index}.json"
    click.echo(saved.read_text().rstrip())
    if file_out is not None:
        file_out.parent.mkdir(parents=True, exist_ok=True)
        file_out.write_text(saved.read_text())
        click.echo(f"written to {file_out}")


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, path_type=Path))
@click.pass_context
@_handled
def reconstruct(ctx, dataset_dir):
    """Train geometry, appearance, and the segmentation head on a dataset."""
    from . import pipeline
    from .config import load_config, save_config
    from .dataset import load_dataset

    run_dir = _require(ctx, "out", "--out")
    config_path = _require(ctx, "config", "--config")
    config = load_config(config_path)
    if ctx.obj.get("seed") is not None:
        config.seed = ctx.obj["seed"]
    dataset = load_dataset(dataset_dir)

    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, run_dir / "config.yaml")
    (run_dir / "run.json").write_text(
        json.dumps(
            {"dataset": str(Path(dataset_dir).resolve()), "config": "config.yaml"},
            indent=2,
        )
        + "\n"
    )
    from .field import STAGE_RECONSTRUCTED

    checkpoint = pipeline.run_reconstruction(dataset, config, out_dir=run_dir)
    if checkpoint.stage != STAGE_RECONSTRUCTED:
        raise click.ClickException("reconstruction aborted; see checkpoints/last_good.pt")
    click.echo(f"reconstructed after {checkpoint.iteration} iterations")
    if dataset.holdout_indices and checkpoint.color_transforms:
        from .losses import ColorTransform

        transform = ColorTransform(*checkpoint.color_transforms[0])
        value = pipeline.evaluate_psnr(
            checkpoint.model, dataset, config, color_transform=transform
        )
        click.echo(f"holdout psnr vs transformed target: {value:.2f} dB")
    click.echo(f"checkpoint: {run_dir / 'checkpoints' / 'reconstructed.pt'}")


@main.command()
@click.option("--style", "style_index", type=int, default=None,
              help="Restrict to one style index; all styles round-robin when omitted.")
@click.option("--iterations", type=int, default=None,
              help="Override the configured stylization iterations.")
@click.pass_context
@_handled
def stylize(ctx, style_index, iterations):
    """Optimize appearance toward the configured styles with geometry frozen."""
    from . import pipeline
    from .checkpoint import load_checkpoint

    run_dir = _require(ctx, "out", "--out")
    dataset, config = _read_run(run_dir)
    if iterations is not None:
        config.stylization.iterations = iterations
    from .field import STAGE_STYLIZED

    checkpoint = load_checkpoint(run_dir / "checkpoints" / "reconstructed.pt")
    final = pipeline.run_stylization(
        checkpoint, dataset, config, out_dir=run_dir, only_style=style_index
    )
    if final.stage != STAGE_STYLIZED:
        raise click.ClickException("stylization aborted; see checkpoints/last_good.pt")
    click.echo(f"stylized after {final.iteration} iterations")
    click.echo(f"checkpoint: {run_dir / 'checkpoints' / 'stylized.pt'}")


@main.command()
@click.argument("path_file", type=click.Path(exists=True, path_type=Path))
@click.option("--style", "style_index", type=int, default=0, show_default=True)
@click.option("--frames", "frames_dir", type=click.Path(path_type=Path), default=None,
              help="Frame output directory (default: <run>/renders/style_<s>).")
@click.pass_context
@_handled
def render(ctx, path_file, style_index, frames_dir):
    """Render a camera path from the latest checkpoint."""
    from . import pipeline

    run_dir = _require(ctx, "out", "--out")
    _, config = _read_run(run_dir)
    checkpoint = _load_checkpoint_for_render(run_dir)
    target = frames_dir or run_dir / "renders" / f"style_{style_index}"
    written = pipeline.render_path(checkpoint, path_file, style_index, target, config=config)
    click.echo(f"rendered {len(written)} frames -> {target}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--frontend", "frontend_dir", type=click.Path(path_type=Path), default=None,
              help="Built static UI to mount at the web root.")
@click.pass_context
@_handled
def serve(ctx, host, port, frontend_dir):
    """Expose the run to the matching editor over HTTP."""
    from .service import serve as run_service

    run_dir = _require(ctx, "out", "--out")
    click.echo(f"serving {run_dir} on http://{host}:{port}")
    run_service(run_dir, host=host, port=port, frontend_dir=frontend_dir)


if __name__ == "__main__":
    main()
