"""Multi-view dataset ingestion: camera files, bounds fitting, persistence.

Two pose sources are supported: the canonical camera JSON
{w, h, fx, fy, cx, cy, frames: [{file, transform: 16 floats row-major}]}
and LLFF poses_bounds.npy (one 17-float row per image: a 3x5 pose matrix
whose last column is [height, width, focal], then the near/far bounds).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError, OutOfBoundsError
from .geometry import BoundingBox
from .images import load_image
from .rendering import Camera

DATASET_FORMAT_VERSION = 1
_CANONICAL_KEYS = ("w", "h", "fx", "fy", "cx", "cy", "frames")
_HOLDOUT_EVERY = 5


def save_camera_json(
    path,
    width: int,
    height: int,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    frames,
    near: float | None = None,
    far: float | None = None,
) -> Path:
    """Write cameras in the canonical JSON form.

    frames is a list of (file, 4x4 camera-to-world) pairs; transforms are
    stored row-major. near/far are optional extensions.
    """
    payload = {
        "w": int(width),
        "h": int(height),
        "fx": float(fx),
        "fy": float(fy),
        "cx": float(cx),
        "cy": float(cy),
        "frames": [
            {
                "file": str(name),
                "transform": [float(v) for v in np.asarray(pose, dtype=np.float64).reshape(16)],
            }
            for name, pose in frames
        ],
    }
    if near is not None:
        payload["near"] = float(near)
    if far is not None:
        payload["far"] = float(far)
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2))
    return path


def load_camera_json(path) -> dict:
    """Parse and validate the canonical camera JSON."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"camera file not found: {path}")
    payload = json.loads(path.read_text())
    for key in _CANONICAL_KEYS:
        if key not in payload:
            raise ConfigurationError(f"camera file {path} is missing key {key!r}")
    if not payload["frames"]:
        raise ConfigurationError(f"camera file {path} lists no frames")
    for i, frame in enumerate(payload["frames"]):
        if "file" not in frame or "transform" not in frame:
            raise ConfigurationError(f"frame {i} must carry 'file' and 'transform'")
        transform = np.asarray(frame["transform"], dtype=np.float64)
        if transform.shape != (16,):
            raise DomainError(f"frame {i} transform must be 16 floats, got {transform.shape}")
        if not np.isfinite(transform).all():
            raise DomainError(f"frame {i} transform contains non-finite values")
    return payload


def llff_poses_to_frames(poses_bounds: np.ndarray) -> tuple[dict, np.ndarray]:
    """Convert LLFF rows to canonical intrinsics plus [N,4,4] poses.

    LLFF pose columns are [down, right, back]; they are permuted to the
    [right, down, forward] convention used by Camera. Returns the shared
    intrinsics (from the first row) and camera-to-world matrices, along
    with per-view near/far bounds attached under "near"/"far".
    """
    arr = np.asarray(poses_bounds, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 17:
        raise DomainError(f"poses_bounds must be [N,17], got {arr.shape}")
    for i, row in enumerate(arr):
        if not np.isfinite(row).all():
            raise DomainError(f"pose row {i} contains non-finite values")
        if row[15] <= 0 or row[16] <= row[15]:
            raise DomainError(f"pose row {i} has invalid near/far bounds")
    poses = arr[:, :15].reshape(-1, 3, 5)
    hwf = poses[0, :, 4]
    down, right, back = poses[:, :, 0], poses[:, :, 1], poses[:, :, 2]
    c2w = np.zeros((len(arr), 4, 4))
    c2w[:, :3, 0] = right
    c2w[:, :3, 1] = down
    c2w[:, :3, 2] = -back
    c2w[:, :3, 3] = poses[:, :, 3]
    c2w[:, 3, 3] = 1.0
    intrinsics = {
        "h": int(round(hwf[0])),
        "w": int(round(hwf[1])),
        "fx": float(hwf[2]),
        "fy": float(hwf[2]),
        "cx": float(hwf[1]) / 2.0,
        "cy": float(hwf[0]) / 2.0,
        "near": float(arr[:, 15].min()) * 0.9,
        "far": float(arr[:, 16].max()) * 1.1,
    }
    return intrinsics, c2w


def _default_bounds(positions: np.ndarray) -> tuple[float, float]:
    """Fallback near/far from the camera cloud scale."""
    if len(positions) < 2:
        return 0.1, 10.0
    spread = float(np.ptp(positions, axis=0).max())
    scale = max(spread, 1.0)
    return 0.05 * scale, 4.0 * scale


def fit_bounding_box(
    cameras: list[Camera],
    lo_percentile: float = 5.0,
    hi_percentile: float = 95.0,
    padding: float = 0.1,
    stride: int = 7,
) -> BoundingBox:
    """Auto-fit scene bounds from ray segment endpoints.

    Collects the near and far points of a strided subset of every
    camera's rays, takes the requested per-axis percentiles, and pads the
    resulting box by a fraction of its extent.
    """
    points = []
    for camera in cameras:
        origins, dirs = camera.rays()
        sub = slice(None, None, stride)
        o = origins[sub].numpy()
        d = dirs[sub].numpy()
        points.append(o + camera.near * d)
        points.append(o + camera.far * d)
    cloud = np.concatenate(points, axis=0).astype(np.float64)
    lo = np.percentile(cloud, lo_percentile, axis=0)
    hi = np.percentile(cloud, hi_percentile, axis=0)
    extent = np.maximum(hi - lo, 1e-6)
    lo = lo - padding * extent
    hi = hi + padding * extent
    return BoundingBox(tuple(lo), tuple(hi))


@dataclass
class View:
    """One training or holdout view."""

    image_path: Path
    camera: Camera

    def load_image(self) -> np.ndarray:
        try:
            return load_image(self.image_path)
        except (OSError, ValueError) as exc:
            raise DomainError(f"unreadable image {self.image_path}: {exc}") from exc


@dataclass
class Dataset:
    """Views plus scene bounds, split indices, and optional region maps."""

    views: list[View]
    bounding_box: BoundingBox
    train_indices: list[int]
    holdout_indices: list[int]
    region_map_paths: dict[int, Path] = field(default_factory=dict)

    def __post_init__(self):
        if not self.views:
            raise DomainError("dataset must contain at least one view")
        sizes = {(v.camera.width, v.camera.height) for v in self.views}
        if len(sizes) != 1:
            raise DomainError(f"views disagree on resolution: {sorted(sizes)}")
        claimed = set(self.train_indices) | set(self.holdout_indices)
        if claimed != set(range(len(self.views))):
            raise DomainError("train/holdout split must cover every view exactly once")

    @property
    def resolution(self) -> tuple[int, int]:
        camera = self.views[0].camera
        return camera.width, camera.height

    def train_views(self) -> list[View]:
        return [self.views[i] for i in self.train_indices]

    def holdout_views(self) -> list[View]:
        return [self.views[i] for i in self.holdout_indices]


def _split_indices(count: int) -> tuple[list[int], list[int]]:
    holdout = [i for i in range(count) if i % _HOLDOUT_EVERY == _HOLDOUT_EVERY - 1]
    train = [i for i in range(count) if i not in set(holdout)]
    if not train:
        train, holdout = holdout, []
    return train, holdout


def ingest_dataset(path, source_format: str = "camera-json") -> Dataset:
    """Build a Dataset from a directory of images plus pose data.

    source_format is "camera-json" (cameras.json in the directory) or
    "llff-poses" (poses_bounds.npy plus an images/ directory sorted by
    name). The bounding box is auto-fit from ray segment endpoints.
    """
    root = Path(path)
    if not root.exists():
        raise ConfigurationError(f"dataset directory not found: {root}")
    if source_format == "camera-json":
        payload = load_camera_json(root / "cameras.json")
        width, height = int(payload["w"]), int(payload["h"])
        fx, fy = float(payload["fx"]), float(payload["fy"])
        cx, cy = float(payload["cx"]), float(payload["cy"])
        poses = [
            np.asarray(f["transform"], dtype=np.float64).reshape(4, 4)
            for f in payload["frames"]
        ]
        files = [root / f["file"] for f in payload["frames"]]
        positions = np.stack([p[:3, 3] for p in poses])
        near = payload.get("near")
        far = payload.get("far")
        if near is None or far is None:
            near, far = _default_bounds(positions)
    elif source_format == "llff-poses":
        npy = root / "poses_bounds.npy"
        if not npy.exists():
            raise ConfigurationError(f"poses file not found: {npy}")
        intrinsics, c2w = llff_poses_to_frames(np.load(npy))
        image_dir = root / "images"
        if not image_dir.exists():
            raise ConfigurationError(f"image directory not found: {image_dir}")
        files = sorted(image_dir.glob("*.png")) + sorted(image_dir.glob("*.jpg"))
        if len(files) != len(c2w):
            raise DomainError(
                f"{len(files)} images for {len(c2w)} pose rows in {root}"
            )
        width, height = intrinsics["w"], intrinsics["h"]
        fx, fy = intrinsics["fx"], intrinsics["fy"]
        cx, cy = intrinsics["cx"], intrinsics["cy"]
        near, far = intrinsics["near"], intrinsics["far"]
        poses = list(c2w)
    else:
        raise ConfigurationError(f"unknown dataset format {source_format!r}")

    views = []
    for i, (file, pose) in enumerate(zip(files, poses)):
        if not file.exists():
            raise DomainError(f"unreadable image {file}: file does not exist")
        try:
            camera = Camera(
                width=width,
                height=height,
                fx=fx,
                fy=fy,
                cx=cx,
                cy=cy,
                camera_to_world=pose,
                near=float(near),
                far=float(far),
            )
        except (DomainError, ValueError) as exc:
            raise DomainError(f"frame {i} has an invalid camera: {exc}") from exc
        views.append(View(image_path=file, camera=camera))

    first = views[0].load_image()
    expected = (height, width, 3)
    if first.shape != expected:
        raise DomainError(
            f"image {views[0].image_path} has shape {first.shape}, cameras say {expected}"
        )
    for view in views[1:]:
        shape = view.load_image().shape
        if shape != first.shape:
            raise DomainError(
                f"resolution mismatch: {view.image_path} is {shape}, expected {first.shape}"
            )
    if len(views) == 1:
        warnings.warn("single-view dataset: reconstruction will overfit", stacklevel=2)

    box = fit_bounding_box([v.camera for v in views])
    train, holdout = _split_indices(len(views))
    return Dataset(views, box, train, holdout)


def save_dataset(dataset: Dataset, out_dir) -> Path:
    """Write a dataset manifest; image paths are stored absolute."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    camera = dataset.views[0].camera
    manifest = {
        "version": DATASET_FORMAT_VERSION,
        "cameras": {
            "w": camera.width,
            "h": camera.height,
            "fx": camera.fx,
            "fy": camera.fy,
            "cx": camera.cx,
            "cy": camera.cy,
            "near": camera.near,
            "far": camera.far,
            "frames": [
                {
                    "file": str(Path(v.image_path).resolve()),
                    "transform": [float(x) for x in np.asarray(v.camera.camera_to_world).reshape(16)],
                }
                for v in dataset.views
            ],
        },
        "bounding_box": {
            "min": [float(x) for x in dataset.bounding_box.min_corner],
            "max": [float(x) for x in dataset.bounding_box.max_corner],
        },
        "splits": {"train": dataset.train_indices, "holdout": dataset.holdout_indices},
        "region_maps": {
            str(i): str(Path(p).resolve()) for i, p in dataset.region_map_paths.items()
        },
    }
    (out / "dataset.json").write_text(json.dumps(manifest, indent=2))
    return out / "dataset.json"


def load_dataset(path) -> Dataset:
    """Read a dataset manifest written by save_dataset."""
    path = Path(path)
    if path.is_dir():
        path = path / "dataset.json"
    if not path.exists():
        raise ConfigurationError(f"dataset manifest not found: {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("version") != DATASET_FORMAT_VERSION:
        raise ConfigurationError(
            f"unsupported dataset manifest version {manifest.get('version')!r}"
        )
    cams = manifest["cameras"]
    views = []
    for frame in cams["frames"]:
        camera = Camera(
            width=int(cams["w"]),
            height=int(cams["h"]),
            fx=float(cams["fx"]),
            fy=float(cams["fy"]),
            cx=float(cams["cx"]),
            cy=float(cams["cy"]),
            camera_to_world=np.asarray(frame["transform"], dtype=np.float64).reshape(4, 4),
            near=float(cams["near"]),
            far=float(cams["far"]),
        )
        views.append(View(image_path=Path(frame["file"]), camera=camera))
    box = BoundingBox(
        tuple(manifest["bounding_box"]["min"]), tuple(manifest["bounding_box"]["max"])
    )
    dataset = Dataset(
        views,
        box,
        list(manifest["splits"]["train"]),
        list(manifest["splits"]["holdout"]),
        {int(k): Path(v) for k, v in manifest.get("region_maps", {}).items()},
    )
    return dataset


def attach_region_maps(dataset: Dataset, paths: dict[int, Path]) -> None:
    """Record per-view region map paths; indices must be valid views."""
    for idx in paths:
        if not (0 <= idx < len(dataset.views)):
            raise OutOfBoundsError(f"view index {idx} out of range")
    dataset.region_map_paths.update({int(k): Path(v) for k, v in paths.items()})
