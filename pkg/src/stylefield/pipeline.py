"""End-to-end orchestration: reconstruction, stylization, and render export.

Reconstruction minimizes the photometric loss plus a weighted
segmentation cross-entropy over sampled pixel batches, fits one color
transform per style, and continues on the transformed targets. After the
geometry is frozen, stylization optimizes the appearance branch alone
with deferred backprop, round-robining over styles and training views.
"""

from __future__ import annotations

import copy
import csv
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, save_checkpoint
from .config import RunConfig, StyleEntry
from .dataset import Dataset
from .errors import (
    ConfigurationError,
    DomainError,
    MatchingModeError,
    OutOfBoundsError,
    StageError,
)
from .features import FeatureExtractor, FeatureMap, extract_features, resize_long_side
from .field import (
    STAGE_RECONSTRUCTED,
    STAGE_RECONSTRUCTION,
    STAGE_STYLIZED,
    RadianceModel,
    freeze_geometry,
    geometry_digest,
    trainable_parameters,
)
from .geometry import BoundingBox
from .hashgrid import HashGridConfig
from .images import load_image, psnr, save_image
from .losses import (
    ColorTransform,
    apply_color_transform,
    content_loss,
    deferred_backprop_step,
    fit_color_transform,
    region_style_loss,
    segmentation_ce_batch,
)
from .matching import (
    cost_matrix,
    load_matching,
    match_regions,
    region_descriptors,
    save_matching,
    validate_assignment,
)
from .rendering import render_rays, render_view
from .segmentation import (
    ColorClusterBackend,
    RegionMap,
    downscale_region_map,
    extract_style_masks,
    filter_style_regions,
    load_region_map,
    save_region_map,
)

_SNAPSHOT_EVERY = 100
_DESCRIPTOR_VIEWS = 4


def build_model(dataset: Dataset, config: RunConfig, num_scene_regions: int) -> RadianceModel:
    """Construct the dual-branch model over the dataset's fitted bounds."""
    box = dataset.bounding_box
    geometry = HashGridConfig(
        num_levels=config.geometry_grid.num_levels,
        base_resolution=config.geometry_grid.base_resolution,
        per_level_scale=config.geometry_grid.per_level_scale,
        features_per_level=config.geometry_grid.features_per_level,
        table_size=config.geometry_grid.table_size,
        num_styles=1,
        bounding_box=box,
    )
    appearance = HashGridConfig(
        num_levels=config.appearance_grid.num_levels,
        base_resolution=config.appearance_grid.base_resolution,
        per_level_scale=config.appearance_grid.per_level_scale,
        features_per_level=config.appearance_grid.features_per_level,
        table_size=config.appearance_grid.table_size,
        num_styles=config.num_styles,
        bounding_box=box,
    )
    return RadianceModel(geometry, appearance, num_scene_regions, seed=config.seed)


def _load_scene_region_maps(dataset: Dataset) -> dict[int, RegionMap]:
    missing = [i for i in dataset.train_indices if i not in dataset.region_map_paths]
    if missing:
        raise ConfigurationError(
            f"train views {missing} have no scene region maps; run segmentation first"
        )
    maps = {}
    counts = set()
    for idx in dataset.train_indices:
        region_map, _ = load_region_map(dataset.region_map_paths[idx])
        maps[idx] = region_map
        counts.add(region_map.count)
    if len(counts) != 1:
        raise ConfigurationError(f"region maps disagree on class count: {sorted(counts)}")
    return maps


def _stack_training_targets(
    dataset: Dataset, maps: dict[int, RegionMap]
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Images, labels, and ray origins/directions for all train views."""
    images, labels, origins, dirs = [], [], [], []
    for idx in dataset.train_indices:
        view = dataset.views[idx]
        images.append(torch.from_numpy(view.load_image()))
        labels.append(torch.from_numpy(maps[idx].labels.astype(np.int64)))
        o, d = view.camera.rays()
        origins.append(o)
        dirs.append(d)
    return (
        torch.stack(images),
        torch.stack(labels),
        torch.stack(origins),
        torch.stack(dirs),
    )


def _snapshot(model, optimizer, generator, iteration, loss_log):
    return {
        "model": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "optimizer": copy.deepcopy(optimizer.state_dict()),
        "generator": generator.get_state().clone(),
        "iteration": iteration,
        "loss_log": list(loss_log),
    }


def _write_log(path: Path, rows: list[dict], columns: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _fit_transforms(
    dataset: Dataset, config: RunConfig, images: torch.Tensor
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """One color transform per style from pooled train pixels."""
    content = images.reshape(-1, 3).numpy()[::17]
    transforms = {}
    for entry in config.styles:
        style_image = load_image(entry.image)
        transform = fit_color_transform(content, style_image.reshape(-1, 3))
        transforms[entry.style_index] = (transform.matrix, transform.offset)
    return transforms


def _transform_targets(
    images: torch.Tensor, transforms: dict[int, tuple[np.ndarray, np.ndarray]]
) -> dict[int, torch.Tensor]:
    out = {}
    for s, (matrix, offset) in transforms.items():
        moved = apply_color_transform(images.numpy(), ColorTransform(matrix, offset))
        out[s] = torch.from_numpy(moved)
    return out


def run_reconstruction(
    dataset: Dataset,
    config: RunConfig,
    out_dir=None,
    resume: Checkpoint | None = None,
    stop_after: int | None = None,
) -> Checkpoint:
    """Train geometry, appearance, and the segmentation head jointly.

    Minimizes the summed photometric error plus lambda_ce times the
    summed region cross-entropy over batch_pixels rays per iteration,
    round-robining the appearance style index. After the main schedule, a
    color transform is fitted per style and training continues on the
    transformed targets. Returns a stage="reconstructed" checkpoint; on
    divergence the last good snapshot is returned instead, with a
    "nan-abort" event in its loss log.

    stop_after interrupts training at that absolute iteration and returns
    a stage="reconstruction" checkpoint that resume continues exactly.
    """
    maps = _load_scene_region_maps(dataset)
    num_regions = maps[dataset.train_indices[0]].count
    images, labels, origins, dirs = _stack_training_targets(dataset, maps)
    num_views, height, width = labels.shape
    pixels_per_view = height * width
    camera = dataset.views[0].camera

    if resume is not None:
        if resume.stage != STAGE_RECONSTRUCTION:
            raise StageError(f"cannot resume reconstruction from stage {resume.stage!r}")
        model = resume.model
    else:
        model = build_model(dataset, config, num_regions)
    params = trainable_parameters(model, STAGE_RECONSTRUCTION)
    optimizer = torch.optim.Adam(params.values(), lr=config.reconstruction.learning_rate)
    generator = torch.Generator()
    generator.manual_seed(config.seed)
    loss_log: list[dict] = []
    start = 0
    if resume is not None:
        optimizer.load_state_dict(resume.optimizer_state)
        generator.set_state(resume.generator_state)
        start = resume.iteration
        loss_log = list(resume.loss_log)

    schedule = config.reconstruction
    total_iterations = schedule.iterations + schedule.post_transform_iterations
    flat_images = images.reshape(-1, 3)
    flat_labels = labels.reshape(-1)
    flat_origins = origins.reshape(-1, 3)
    flat_dirs = dirs.reshape(-1, 3)
    transforms: dict[int, tuple[np.ndarray, np.ndarray]] = dict(
        (resume.color_transforms if resume is not None else {})
    )
    transformed: dict[int, torch.Tensor] = (
        _transform_targets(images, transforms) if transforms else {}
    )
    last_good = _snapshot(model, optimizer, generator, start, loss_log)

    for iteration in range(start, total_iterations):
        if iteration >= schedule.iterations and not transforms:
            transforms = _fit_transforms(dataset, config, images)
            transformed = _transform_targets(images, transforms)
        style_index = iteration % config.num_styles
        idx = torch.randint(
            0, num_views * pixels_per_view, (schedule.batch_pixels,), generator=generator
        )
        source = (
            transformed[style_index].reshape(-1, 3)
            if iteration >= schedule.iterations
            else flat_images
        )
        target_rgb = source[idx]
        target_labels = flat_labels[idx]
        out = render_rays(
            model,
            flat_origins[idx],
            flat_dirs[idx],
            camera.near,
            camera.far,
            style_index=style_index,
            n_samples=config.render.n_samples,
        )
        l_r = ((out["rgb"] - target_rgb) ** 2).sum()
        l_k = segmentation_ce_batch(
            out["region_probs"], target_labels, reduction=config.ce_reduction
        )
        total = l_r + config.lambda_ce * l_k
        if not torch.isfinite(total):
            loss_log.append({"event": "nan-abort", "iteration": iteration})
            model.load_state_dict(last_good["model"])
            checkpoint = Checkpoint(
                model=model,
                stage=STAGE_RECONSTRUCTION,
                iteration=last_good["iteration"],
                optimizer_state=last_good["optimizer"],
                generator_state=last_good["generator"],
                color_transforms=transforms,
                loss_log=loss_log,
            )
            if out_dir is not None:
                save_checkpoint(checkpoint, Path(out_dir) / "checkpoints" / "last_good.pt")
            return checkpoint
        optimizer.zero_grad(set_to_none=True)
        total.backward()
        optimizer.step()
        loss_log.append(
            {
                "iteration": iteration,
                "l_r": float(l_r.detach()),
                "l_k": float(l_k.detach()),
                "total": float(total.detach()),
            }
        )
        if (iteration + 1) % _SNAPSHOT_EVERY == 0:
            last_good = _snapshot(model, optimizer, generator, iteration + 1, loss_log)
        if stop_after is not None and iteration + 1 >= stop_after:
            break

    if stop_after is not None and stop_after < total_iterations:
        interrupted = Checkpoint(
            model=model,
            stage=STAGE_RECONSTRUCTION,
            iteration=stop_after,
            optimizer_state=optimizer.state_dict(),
            generator_state=generator.get_state(),
            color_transforms=transforms,
            loss_log=loss_log,
        )
        if out_dir is not None:
            save_checkpoint(interrupted, Path(out_dir) / "checkpoints" / "interrupted.pt")
        return interrupted

    if not transforms:
        transforms = _fit_transforms(dataset, config, images)
    model.stage = STAGE_RECONSTRUCTED
    checkpoint = Checkpoint(
        model=model,
        stage=STAGE_RECONSTRUCTED,
        iteration=total_iterations,
        geometry_digest=geometry_digest(model),
        optimizer_state=optimizer.state_dict(),
        generator_state=generator.get_state(),
        color_transforms=transforms,
        loss_log=loss_log,
    )
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(checkpoint, out / "checkpoints" / "reconstructed.pt")
        _write_log(
            out / "reconstruction_log.csv",
            loss_log,
            ["iteration", "l_r", "l_k", "total", "event"],
        )
    return checkpoint


def save_mid_checkpoint(
    model, optimizer, generator, iteration, loss_log, transforms, path
) -> Path:
    """Persist an in-progress reconstruction state for later resume."""
    checkpoint = Checkpoint(
        model=model,
        stage=STAGE_RECONSTRUCTION,
        iteration=iteration,
        optimizer_state=optimizer.state_dict(),
        generator_state=generator.get_state(),
        color_transforms=transforms,
        loss_log=list(loss_log),
    )
    return save_checkpoint(checkpoint, path)


def evaluate_psnr(
    model: RadianceModel,
    dataset: Dataset,
    config: RunConfig,
    split: str = "holdout",
    style_index: int = 0,
    color_transform: ColorTransform | None = None,
) -> float:
    """Mean PSNR of rendered views against their photographs.

    After the post-transform phase the reconstruction target is the
    color-transformed photograph, so pass the checkpoint's transform for
    the rendered style to compare against what the model was trained
    toward.
    """
    views = dataset.holdout_views() if split == "holdout" else dataset.train_views()
    values = []
    for view in views:
        result = render_view(
            model,
            view.camera,
            style_index=style_index,
            chunk_size=config.render.chunk_size,
            n_samples=config.render.n_samples,
        )
        reference = view.load_image()
        if color_transform is not None:
            reference = apply_color_transform(reference, color_transform)
        values.append(psnr(result.rgb, reference))
    return float(np.mean(values))


def rendered_region_accuracy(
    model: RadianceModel,
    dataset: Dataset,
    config: RunConfig,
    reference_maps: dict[int, RegionMap],
    style_index: int = 0,
) -> float:
    """Pixel accuracy of rendered argmax labels against reference maps."""
    correct = 0
    total = 0
    for idx, reference in reference_maps.items():
        view = dataset.views[idx]
        result = render_view(
            model,
            view.camera,
            style_index=style_index,
            chunk_size=config.render.chunk_size,
            n_samples=config.render.n_samples,
        )
        predicted = result.labels()
        correct += int((predicted == reference.labels).sum())
        total += predicted.size
    return correct / max(total, 1)


def _resolve_style_regions(entry: StyleEntry, style_image: np.ndarray) -> RegionMap:
    if entry.regions is not None:
        region_map, _ = load_region_map(entry.regions)
    else:
        backend = ColorClusterBackend(num_clusters=4, seed=0)
        masks = extract_style_masks(style_image, backend)
        region_map = filter_style_regions(masks).region_map
    h, w = style_image.shape[:2]
    if region_map.labels.shape != (h, w):
        region_map = downscale_region_map(region_map, w, h)
    return region_map


def _aggregate_scene_descriptors(
    model: RadianceModel,
    dataset: Dataset,
    config: RunConfig,
    extractor: FeatureExtractor,
    num_regions: int,
    style_index: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Counts-weighted region descriptors over a few spread-out train views.

    Uses the same mean-feature and pixel-center centroid conventions as
    region_descriptors, accumulated across views so regions small in any
    single view still get stable statistics.
    """
    train = dataset.train_views()
    step = max(1, len(train) // _DESCRIPTOR_VIEWS)
    sample_views = train[::step][:_DESCRIPTOR_VIEWS]
    depth = None
    sums = None
    cent_sums = np.zeros((num_regions, 2))
    counts = np.zeros(num_regions)
    for view in sample_views:
        result = render_view(
            model,
            view.camera,
            style_index=style_index,
            chunk_size=config.render.chunk_size,
            n_samples=config.render.n_samples,
        )
        feature_map = extract_features(result.rgb, extractor)
        feats = feature_map.features.numpy().astype(np.float64)
        h, w, d = feats.shape
        if sums is None:
            depth = d
            sums = np.zeros((num_regions, depth))
        full = RegionMap(result.labels(), num_regions, "scene")
        labels = downscale_region_map(full, w, h).labels
        ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        cx = (xs + 0.5) / w
        cy = (ys + 0.5) / h
        for r in range(num_regions):
            mask = labels == r
            if not mask.any():
                continue
            sums[r] += feats[mask].sum(axis=0)
            cent_sums[r] += [cx[mask].sum(), cy[mask].sum()]
            counts[r] += int(mask.sum())
    present = counts > 0
    if not present.all():
        missing = [int(r) for r in np.nonzero(~present)[0]]
        raise ConfigurationError(
            f"scene regions {missing} never appear in rendered views; cannot match"
        )
    means = sums / counts[:, None]
    centroids = cent_sums / counts[:, None]
    return means, centroids


def _resolve_matching(
    entry: StyleEntry,
    model: RadianceModel,
    dataset: Dataset,
    config: RunConfig,
    extractor: FeatureExtractor,
    num_scene_regions: int,
    style_features: FeatureMap,
    style_map_feature_res: RegionMap,
    out_dir: Path | None,
) -> dict[int, int]:
    num_style_regions = style_map_feature_res.count
    if entry.matching == "auto":
        scene_means, scene_centroids = _aggregate_scene_descriptors(
            model, dataset, config, extractor, num_scene_regions, entry.style_index
        )
        style_means, style_centroids = region_descriptors(
            style_features.features.numpy(),
            style_map_feature_res.labels,
            num_style_regions,
        )
        costs = cost_matrix(
            scene_means, scene_centroids, style_means, style_centroids, beta=config.beta
        )
        result = match_regions(costs, mode="auto")
        assignment, mode = result.assignment, result.mode
    else:
        try:
            assignment, c, s, mode = load_matching(entry.matching)
        except (DomainError, MatchingModeError, OSError) as exc:
            raise ConfigurationError(
                f"matching file {entry.matching} is invalid: {exc}"
            ) from exc
        if c != num_scene_regions or s != num_style_regions:
            raise ConfigurationError(
                f"matching file {entry.matching} is for {c}x{s} regions, "
                f"run has {num_scene_regions}x{num_style_regions}"
            )
    validate_assignment(assignment, num_scene_regions, num_style_regions, mode)
    if out_dir is not None:
        (Path(out_dir) / "matchings").mkdir(parents=True, exist_ok=True)
        save_matching(
            Path(out_dir) / "matchings" / f"style_{entry.style_index}.json",
            assignment,
            num_scene_regions,
            num_style_regions,
            mode,
        )
    return assignment


def run_stylization(
    checkpoint: Checkpoint,
    dataset: Dataset,
    config: RunConfig,
    out_dir=None,
    only_style: int | None = None,
) -> Checkpoint:
    """Optimize appearance toward each style with geometry and M_K frozen.

    Per-view scene region maps and content feature targets are
    precomputed once and held fixed; each iteration round-robins the
    style index, renders one full training view with deferred backprop,
    and steps Adam on the appearance parameters only. Passing only_style
    restricts every iteration to that single style, leaving the other
    styles' appearance encodings untouched.
    """
    if checkpoint.stage != STAGE_RECONSTRUCTED:
        raise StageError(
            f"stylization requires a reconstructed checkpoint, got stage {checkpoint.stage!r}"
        )
    if only_style is not None and all(e.style_index != only_style for e in config.styles):
        raise OutOfBoundsError(
            f"style index {only_style} out of range for {config.num_styles} styles"
        )
    entries = [
        e for e in config.styles if only_style is None or e.style_index == only_style
    ]
    model = checkpoint.model
    digest = freeze_geometry(model)
    if checkpoint.geometry_digest and digest != checkpoint.geometry_digest:
        raise StageError("checkpoint geometry digest does not match the live model")
    for param in model.segmentation_mlp.parameters():
        param.requires_grad_(False)

    extractor = FeatureExtractor(weights=config.feature_weights, seed=0)
    out_path = Path(out_dir) if out_dir is not None else None

    transforms = dict(checkpoint.color_transforms)
    if not transforms:
        images = torch.stack(
            [torch.from_numpy(v.load_image()) for v in dataset.train_views()]
        )
        transforms = _fit_transforms(dataset, config, images)

    style_assets = {}
    for entry in entries:
        style_image = resize_long_side(load_image(entry.image), 512)
        style_map = _resolve_style_regions(entry, style_image)
        style_features = extract_features(style_image, extractor)
        fh, fw = style_features.features.shape[:2]
        style_map_small = downscale_region_map(style_map, fw, fh)
        matching = _resolve_matching(
            entry,
            model,
            dataset,
            config,
            extractor,
            model.num_scene_regions,
            style_features,
            style_map_small,
            out_path,
        )
        style_assets[entry.style_index] = {
            "features": style_features,
            "map": style_map_small,
            "matching": matching,
        }

    train = dataset.train_views()
    scene_maps: dict[tuple[int, int], RegionMap] = {}
    content_targets: dict[tuple[int, int], FeatureMap] = {}
    for vi, view in enumerate(train):
        photo = view.load_image()
        for entry in entries:
            s = entry.style_index
            result = render_view(
                model,
                view.camera,
                style_index=s,
                chunk_size=config.render.chunk_size,
                n_samples=config.render.n_samples,
            )
            feats_shape = extract_features(result.rgb, extractor).features.shape[:2]
            full = RegionMap(result.labels(), model.num_scene_regions, "scene")
            scene_maps[(vi, s)] = downscale_region_map(full, feats_shape[1], feats_shape[0])
            matrix, offset = transforms[s]
            content_image = apply_color_transform(photo, ColorTransform(matrix, offset))
            content_targets[(vi, s)] = extract_features(content_image, extractor)

    # pre-flight: every label that appears in any view must be matched
    for entry in entries:
        matching = style_assets[entry.style_index]["matching"]
        for vi in range(len(train)):
            seen = np.unique(scene_maps[(vi, entry.style_index)].labels)
            for label in seen:
                if int(label) not in matching:
                    raise ConfigurationError(
                        f"scene region {int(label)} missing from matching for "
                        f"style {entry.style_index}"
                    )

    schedule = config.stylization
    params = trainable_parameters(model, "stylization")
    optimizer = torch.optim.Adam(params.values(), lr=schedule.learning_rate)
    decay_at = int(schedule.iterations * schedule.decay_fraction)
    loss_log: list[dict] = []
    last_good = {
        "model": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "iteration": 0,
    }

    active = sorted(style_assets)
    for iteration in range(schedule.iterations):
        s = active[iteration % len(active)]
        vi = (iteration // len(active)) % len(train)
        assets = style_assets[s]
        components = {}

        def loss_fn(image):
            f_y = extract_features(image, extractor)
            l_c = content_loss(f_y, content_targets[(vi, s)])
            l_s = region_style_loss(
                f_y, assets["features"], scene_maps[(vi, s)], assets["map"], assets["matching"]
            )
            components["l_c"] = float(l_c.detach())
            components["l_s"] = float(l_s.detach())
            return config.lambda_c * l_c + config.lambda_s * l_s

        if iteration == decay_at and decay_at < schedule.iterations:
            for group in optimizer.param_groups:
                group["lr"] *= schedule.decay_factor
        optimizer.zero_grad(set_to_none=True)
        result = deferred_backprop_step(
            model,
            train[vi].camera,
            loss_fn,
            style_index=s,
            n_samples=config.render.n_samples,
            patch_size=schedule.patch_size,
            chunk_size=config.render.chunk_size,
        )
        if not np.isfinite(result["loss"]):
            loss_log.append({"event": "nan-abort", "iteration": iteration})
            model.load_state_dict(last_good["model"])
            model.stage = STAGE_RECONSTRUCTED
            aborted = Checkpoint(
                model=model,
                stage=STAGE_RECONSTRUCTED,
                iteration=last_good["iteration"],
                geometry_digest=checkpoint.geometry_digest or digest,
                color_transforms=transforms,
                loss_log=loss_log,
            )
            if out_path is not None:
                save_checkpoint(aborted, out_path / "checkpoints" / "last_good.pt")
            return aborted
        optimizer.step()
        loss_log.append(
            {
                "iteration": iteration,
                "style": s,
                "l_c": components["l_c"],
                "l_s": components["l_s"],
                "total": result["loss"],
            }
        )
        if (iteration + 1) % _SNAPSHOT_EVERY == 0:
            current = geometry_digest(model)
            if current != digest:
                raise StageError("geometry drifted during stylization")
            last_good = {
                "model": {k: v.detach().clone() for k, v in model.state_dict().items()},
                "iteration": iteration + 1,
            }

    model.stage = STAGE_STYLIZED
    final = Checkpoint(
        model=model,
        stage=STAGE_STYLIZED,
        iteration=schedule.iterations,
        geometry_digest=digest,
        color_transforms=transforms,
        loss_log=loss_log,
    )
    if out_path is not None:
        save_checkpoint(final, out_path / "checkpoints" / "stylized.pt")
        _write_log(
            out_path / "stylization_log.csv",
            loss_log,
            ["iteration", "style", "l_c", "l_s", "total", "event"],
        )
    return final


def render_path(
    checkpoint: Checkpoint,
    path_file,
    style_index: int,
    out_dir,
    config: RunConfig | None = None,
) -> list[Path]:
    """Render a camera path to numbered images plus region-map files."""
    from .dataset import load_camera_json
    from .rendering import Camera

    if checkpoint.stage == STAGE_RECONSTRUCTION:
        raise StageError("render requires a reconstructed or stylized checkpoint")
    model = checkpoint.model
    if not 0 <= style_index < model.num_styles:
        raise OutOfBoundsError(
            f"style index {style_index} out of range for {model.num_styles} styles"
        )
    payload = load_camera_json(path_file)
    near = float(payload.get("near", 0.1))
    far = float(payload.get("far", 10.0))
    n_samples = config.render.n_samples if config is not None else 128
    chunk = config.render.chunk_size if config is not None else 4096
    out = Path(out_dir)
    (out / "regions").mkdir(parents=True, exist_ok=True)
    written = []
    for frame in payload["frames"]:
        camera = Camera(
            width=int(payload["w"]),
            height=int(payload["h"]),
            fx=float(payload["fx"]),
            fy=float(payload["fy"]),
            cx=float(payload["cx"]),
            cy=float(payload["cy"]),
            camera_to_world=np.asarray(frame["transform"], dtype=np.float64).reshape(4, 4),
            near=near,
            far=far,
        )
        result = render_view(
            model, camera, style_index=style_index, chunk_size=chunk, n_samples=n_samples
        )
        name = Path(frame["file"]).name
        image_path = out / name
        save_image(image_path, result.rgb)
        save_region_map(
            out / "regions" / name,
            RegionMap(result.labels(), model.num_scene_regions, "scene"),
            source_image=name,
        )
        written.append(image_path)
    return written
