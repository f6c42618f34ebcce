"""PNG I/O for renders and label maps, plus image metrics."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import DomainError

UNASSIGNED_LABEL_8 = 255


def save_image(path, image: np.ndarray) -> None:
    """Write a float [0,1] rgb or grayscale array as 8-bit PNG."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data).save(str(path))


def load_image(path) -> np.ndarray:
    """Read an image file as float32 rgb in [0,1], shape [H,W,3]."""
    with Image.open(str(path)) as img:
        data = np.asarray(img.convert("RGB"), dtype=np.float32)
    return data / 255.0


def save_label_png(path, labels: np.ndarray) -> None:
    """Write an int label map as 8-bit PNG; -1 becomes 255 (unassigned)."""
    arr = np.asarray(labels)
    if arr.min() < -1 or arr.max() >= UNASSIGNED_LABEL_8:
        raise DomainError("labels must lie in [-1, 254] for 8-bit output")
    out = arr.astype(np.int32).copy()
    out[out == -1] = UNASSIGNED_LABEL_8
    Image.fromarray(out.astype(np.uint8)).save(str(path))


def load_label_png(path) -> np.ndarray:
    """Read an 8-bit label PNG; 255 becomes -1."""
    with Image.open(str(path)) as img:
        data = np.asarray(img.convert("L"), dtype=np.int32)
    out = data.copy()
    out[out == UNASSIGNED_LABEL_8] = -1
    return out


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio between two arrays on the same scale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
