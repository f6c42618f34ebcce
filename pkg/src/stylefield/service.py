"""HTTP service exposing a finished run directory to the matching editor.

The app is built over a run directory produced by the CLI: it reads
run.json to locate the dataset and config, serves region cards and
matchings for inspection, accepts matching edits, and executes
stylization jobs one at a time on a worker thread that only touches
committed checkpoints on disk.
"""

from __future__ import annotations

import copy
import json
import re
import threading
import uuid
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from . import pipeline
from .checkpoint import load_checkpoint
from .config import RunConfig, load_config
from .dataset import Dataset, load_dataset
from .errors import ConfigurationError, DomainError
from .features import FeatureExtractor, extract_features, resize_long_side
from .images import load_image, save_image
from .matching import (
    cost_matrix,
    load_matching,
    match_regions,
    parse_matching_payload,
    region_descriptors,
    save_matching,
)
from .rendering import render_view
from .segmentation import downscale_region_map

_OVERLAY_NAME = re.compile(r"^[A-Za-z0-9_]+\.png$")
_OVERLAY_COLORS = [
    (0.90, 0.25, 0.21),
    (0.26, 0.63, 0.28),
    (0.25, 0.47, 0.85),
    (0.93, 0.67, 0.18),
    (0.64, 0.32, 0.77),
    (0.20, 0.72, 0.70),
    (0.85, 0.40, 0.65),
    (0.55, 0.55, 0.25),
]

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"


@dataclass
class JobRecord:
    id: str
    kind: str
    style_index: int
    iterations: int
    state: str = QUEUED
    created_at: str = ""
    started_at: str | None = None
    finished_at: str | None = None
    error: str | None = None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _overlay(base: np.ndarray, mask: np.ndarray, color: tuple[float, float, float]):
    """Dim the image and paint one region in a solid accent color."""
    out = 0.35 * base.astype(np.float32)
    out[mask] = 0.45 * out[mask] + 0.55 * np.asarray(color, dtype=np.float32)
    return np.clip(out, 0.0, 1.0)


def _cards_from_labels(labels: np.ndarray, num_regions: int) -> list[dict]:
    """Area fractions and normalized pixel-center centroids per region id."""
    h, w = labels.shape
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cards = []
    for region in range(num_regions):
        mask = labels == region
        count = int(mask.sum())
        if count == 0:
            continue
        cards.append(
            {
                "id": region,
                "area": count / labels.size,
                "centroid": [
                    float((xs[mask] + 0.5).sum() / count / w),
                    float((ys[mask] + 0.5).sum() / count / h),
                ],
            }
        )
    return cards


class ServiceState:
    """Everything the endpoints share: run artifacts, caches, and the job lock."""

    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)
        manifest_path = self.run_dir / "run.json"
        if not manifest_path.exists():
            raise ConfigurationError(f"run directory {run_dir} has no run.json")
        manifest = json.loads(manifest_path.read_text())
        for key in ("dataset", "config"):
            if key not in manifest:
                raise ConfigurationError(f"run.json missing key {key!r}")
        self.dataset: Dataset = load_dataset(self._resolve(manifest["dataset"]))
        self.config: RunConfig = load_config(self._resolve(manifest["config"]))

        recon_path = self.run_dir / "checkpoints" / "reconstructed.pt"
        if not recon_path.exists():
            raise ConfigurationError(
                f"no reconstructed checkpoint in {run_dir}; run reconstruction first"
            )
        self.recon = load_checkpoint(recon_path)
        self.extractor = FeatureExtractor(weights=self.config.feature_weights, seed=0)

        self.service_dir = self.run_dir / "service"
        self.overlay_dir = self.service_dir / "overlays"
        self.render_dir = self.service_dir / "renders"
        for directory in (self.service_dir, self.overlay_dir, self.render_dir):
            directory.mkdir(parents=True, exist_ok=True)

        self.jobs: dict[str, JobRecord] = {}
        self.lock = threading.Lock()
        self._scene_cards: list[dict] | None = None
        self._style_cards: dict[int, list[dict]] = {}
        self._style_counts: dict[int, int] = {}
        self._cost_matrices: dict[int, np.ndarray] = {}
        self._latest: tuple[float, object] | None = None

    def _resolve(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.run_dir / path

    def journal(self, event: str, **detail) -> None:
        line = json.dumps({"ts": _now(), "event": event, **detail})
        with (self.service_dir / "journal.log").open("a") as handle:
            handle.write(line + "\n")

    # ---- checkpoints ----

    def latest_model(self):
        """The most recently committed model: stylized if present, else reconstructed."""
        stylized = self.run_dir / "checkpoints" / "stylized.pt"
        if not stylized.exists():
            return self.recon.model
        mtime = stylized.stat().st_mtime
        if self._latest is None or self._latest[0] != mtime:
            self._latest = (mtime, load_checkpoint(stylized))
        return self._latest[1].model

    def preview_camera(self):
        views = self.dataset.holdout_views() or self.dataset.train_views()
        return views[0].camera

    # ---- region cards ----

    def scene_cards(self) -> list[dict]:
        if self._scene_cards is not None:
            return self._scene_cards
        model = self.recon.model
        num_regions = model.num_scene_regions
        train = self.dataset.train_views()
        step = max(1, len(train) // pipeline._DESCRIPTOR_VIEWS)
        sample = train[::step][: pipeline._DESCRIPTOR_VIEWS]
        counts = np.zeros(num_regions, dtype=np.int64)
        centroid_sums = np.zeros((num_regions, 2), dtype=np.float64)
        total = 0
        first_render = None
        first_labels = None
        for view in sample:
            result = render_view(
                model,
                view.camera,
                style_index=0,
                chunk_size=self.config.render.chunk_size,
                n_samples=self.config.render.n_samples,
            )
            labels = result.labels()
            if first_render is None:
                first_render, first_labels = result.rgb, labels
            h, w = labels.shape
            ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
            for region in range(num_regions):
                mask = labels == region
                counts[region] += int(mask.sum())
                centroid_sums[region, 0] += ((xs[mask] + 0.5) / w).sum()
                centroid_sums[region, 1] += ((ys[mask] + 0.5) / h).sum()
            total += labels.size
        cards = []
        for region in range(num_regions):
            if counts[region] == 0:
                continue
            name = f"scene_{region}.png"
            save_image(
                self.overlay_dir / name,
                _overlay(
                    first_render,
                    first_labels == region,
                    _OVERLAY_COLORS[region % len(_OVERLAY_COLORS)],
                ),
            )
            cards.append(
                {
                    "id": region,
                    "area": counts[region] / total,
                    "centroid": list(centroid_sums[region] / counts[region]),
                    "overlay_png_url": f"/api/overlays/{name}",
                }
            )
        self._scene_cards = cards
        return cards

    def style_entry(self, style_index: int):
        for entry in self.config.styles:
            if entry.style_index == style_index:
                return entry
        raise HTTPException(status_code=404, detail=f"no style with index {style_index}")

    def style_assets(self, style_index: int):
        """Style image at working size plus its full-resolution region map."""
        entry = self.style_entry(style_index)
        image = resize_long_side(load_image(entry.image), 512)
        region_map = pipeline._resolve_style_regions(entry, image)
        return image, region_map

    def style_cards(self, style_index: int) -> list[dict]:
        if style_index in self._style_cards:
            return self._style_cards[style_index]
        image, region_map = self.style_assets(style_index)
        self._style_counts[style_index] = region_map.count
        cards = []
        for card in _cards_from_labels(region_map.labels, region_map.count):
            name = f"style_{style_index}_{card['id']}.png"
            save_image(
                self.overlay_dir / name,
                _overlay(
                    image,
                    region_map.labels == card["id"],
                    _OVERLAY_COLORS[card["id"] % len(_OVERLAY_COLORS)],
                ),
            )
            card["overlay_png_url"] = f"/api/overlays/{name}"
            cards.append(card)
        self._style_cards[style_index] = cards
        return cards

    # ---- matching ----

    def num_style_regions(self, style_index: int) -> int:
        self.style_cards(style_index)
        return self._style_counts[style_index]

    def matching_path(self, style_index: int) -> Path:
        return self.run_dir / "matchings" / f"style_{style_index}.json"

    def style_cost_matrix(self, style_index: int) -> np.ndarray:
        if style_index in self._cost_matrices:
            return self._cost_matrices[style_index]
        entry = self.style_entry(style_index)
        image, region_map = self.style_assets(style_index)
        features = extract_features(image, self.extractor)
        fh, fw = features.features.shape[:2]
        map_small = downscale_region_map(region_map, fw, fh)
        style_means, style_centroids = region_descriptors(
            features.features.numpy(), map_small.labels, map_small.count
        )
        scene_means, scene_centroids = pipeline._aggregate_scene_descriptors(
            self.recon.model,
            self.dataset,
            self.config,
            self.extractor,
            self.recon.model.num_scene_regions,
            entry.style_index,
        )
        costs = cost_matrix(
            scene_means, scene_centroids, style_means, style_centroids, beta=self.config.beta
        )
        self._cost_matrices[style_index] = costs
        return costs

    def get_matching(self, style_index: int) -> dict:
        """Load the persisted matching, auto-solving and persisting on first use."""
        costs = self.style_cost_matrix(style_index)
        path = self.matching_path(style_index)
        if path.exists():
            assignment, c, s, mode = load_matching(path)
        else:
            result = match_regions(costs, mode="auto")
            assignment, mode = result.assignment, result.mode
            c, s = costs.shape
            path.parent.mkdir(parents=True, exist_ok=True)
            save_matching(path, assignment, c, s, mode)
            self.journal("matching-solved", style=style_index, mode=mode)
        total = float(sum(costs[i, assignment[i]] for i in assignment))
        return {
            "matching": {
                "version": 1,
                "mode": mode,
                "num_scene_regions": c,
                "num_style_regions": s,
                "assignment": {str(k): int(v) for k, v in sorted(assignment.items())},
                "cost": total,
            },
            "cost_matrix": [[float(x) for x in row] for row in costs],
        }

    def put_matching(self, style_index: int, payload: dict) -> dict:
        self.style_entry(style_index)
        assignment, c, s, mode = parse_matching_payload(
            {k: v for k, v in payload.items() if k != "cost"}
        )
        expected_c = self.recon.model.num_scene_regions
        expected_s = self.num_style_regions(style_index)
        if c != expected_c or s != expected_s:
            raise DomainError(
                f"matching is for {c}x{s} regions, run has {expected_c}x{expected_s}"
            )
        path = self.matching_path(style_index)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_matching(path, assignment, c, s, mode)
        self.journal("matching-put", style=style_index, mode=mode)
        return self.get_matching(style_index)

    # ---- jobs ----

    def submit_stylize(self, style_index: int, iterations: int) -> JobRecord:
        self.style_entry(style_index)
        if iterations < 1:
            raise DomainError("iterations must be >= 1")
        with self.lock:
            active = [j for j in self.jobs.values() if j.state in (QUEUED, RUNNING)]
            if active:
                raise HTTPException(
                    status_code=409,
                    detail=f"job {active[0].id} is {active[0].state}; one training job at a time",
                )
            record = JobRecord(
                id=uuid.uuid4().hex[:12],
                kind="stylize",
                style_index=style_index,
                iterations=iterations,
                created_at=_now(),
            )
            self.jobs[record.id] = record
        self.journal("job-queued", job=record.id, style=style_index, iterations=iterations)
        worker = threading.Thread(target=self._run_stylize, args=(record,), daemon=True)
        worker.start()
        return record

    def _run_stylize(self, record: JobRecord) -> None:
        record.state = RUNNING
        record.started_at = _now()
        self.journal("job-started", job=record.id)
        try:
            cfg = copy.deepcopy(self.config)
            cfg.stylization.iterations = record.iterations
            entry = cfg.style_by_index(record.style_index)
            matching_file = self.matching_path(record.style_index)
            if matching_file.exists():
                entry.matching = str(matching_file)
            checkpoint = load_checkpoint(self.run_dir / "checkpoints" / "reconstructed.pt")
            final = pipeline.run_stylization(
                checkpoint,
                self.dataset,
                cfg,
                out_dir=self.run_dir,
                only_style=record.style_index,
            )
            preview = render_view(
                final.model,
                self.preview_camera(),
                style_index=record.style_index,
                chunk_size=cfg.render.chunk_size,
                n_samples=cfg.render.n_samples,
            )
            save_image(self.render_dir / f"style_{record.style_index}.png", preview.rgb)
            record.state = DONE
            record.finished_at = _now()
            self.journal("job-done", job=record.id)
        except Exception as exc:
            record.state = FAILED
            record.error = str(exc)
            record.finished_at = _now()
            self.journal("job-failed", job=record.id, error=str(exc))

    def render_latest(self, style_index: int) -> Path:
        self.style_entry(style_index)
        target = self.render_dir / f"style_{style_index}.png"
        if not target.exists():
            result = render_view(
                self.latest_model(),
                self.preview_camera(),
                style_index=style_index,
                chunk_size=self.config.render.chunk_size,
                n_samples=self.config.render.n_samples,
            )
            save_image(target, result.rgb)
        return target


def create_app(run_dir, frontend_dir=None) -> FastAPI:
    """Build the editor service over a run directory.

    The run directory must contain run.json, the config it names, and at
    least a reconstructed checkpoint. Passing frontend_dir mounts a built
    static UI at the web root.
    """
    state = ServiceState(Path(run_dir))
    app = FastAPI(title="stylefield service")
    app.state.service = state

    @app.exception_handler(DomainError)
    async def _domain_error(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/api/scene/regions")
    def scene_regions():
        return state.scene_cards()

    @app.get("/api/style/{style_index}/regions")
    def style_regions(style_index: int):
        return state.style_cards(style_index)

    @app.get("/api/style/{style_index}/matching")
    def get_matching(style_index: int):
        state.style_entry(style_index)
        return state.get_matching(style_index)

    @app.put("/api/style/{style_index}/matching")
    def put_matching(style_index: int, payload: dict = Body(...)):
        return state.put_matching(style_index, payload)

    @app.post("/api/jobs/stylize", status_code=202)
    def submit_stylize(payload: dict = Body(...)):
        style_index = payload.get("style_index", 0)
        iterations = payload.get("iterations", state.config.stylization.iterations)
        if not isinstance(style_index, int) or not isinstance(iterations, int):
            raise HTTPException(
                status_code=422, detail="style_index and iterations must be integers"
            )
        record = state.submit_stylize(style_index, iterations)
        return {"job_id": record.id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        record = state.jobs.get(job_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return asdict(record)

    @app.get("/api/renders/latest")
    def latest_render(style: int = 0):
        target = state.render_latest(style)
        return FileResponse(target, media_type="image/png")

    @app.get("/api/overlays/{name}")
    def overlay(name: str):
        if not _OVERLAY_NAME.match(name):
            raise HTTPException(status_code=404, detail="unknown overlay")
        target = state.overlay_dir / name
        if not target.exists():
            if name.startswith("scene_"):
                state.scene_cards()
            else:
                match = re.match(r"^style_(\d+)_", name)
                if match:
                    state.style_cards(int(match.group(1)))
        if not target.exists():
            raise HTTPException(status_code=404, detail="unknown overlay")
        return FileResponse(target, media_type="image/png")

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")

    return app


def serve(run_dir, host: str = "127.0.0.1", port: int = 8000, frontend_dir=None) -> None:
    """Run the editor service until interrupted."""
    import uvicorn

    app = create_app(run_dir, frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
