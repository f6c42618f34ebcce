"""Region-to-region assignment between scene segments and style segments.

Scene regions are matched to style regions by minimizing summed costs
W[i, j] = (1 - cos(mean_feat_i, mean_feat_j)) + beta * ||centroid_i - centroid_j||.
With at most as many scene regions as style regions the assignment is
injective; with more scene regions than style regions every style region
is still used at least once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateRegionError, DomainError, MatchingModeError

_EPS = 1e-8
_TIE_TOL = 1e-12

INJECTIVE = "injective"
SURJECTIVE = "surjective"


def region_descriptors(
    features: np.ndarray, labels: np.ndarray, num_regions: int
) -> tuple[np.ndarray, np.ndarray]:
    """Mean feature and normalized centroid per region.

    Centroids use pixel centers scaled by image size, so a region covering
    the whole image has centroid exactly (0.5, 0.5). Labels of -1 are
    ignored; a region with no member pixels is an error.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 3 or labels.shape != features.shape[:2]:
        raise DomainError("features must be [H,W,D] with labels [H,W]")
    if num_regions < 1:
        raise DomainError("num_regions must be >= 1")
    h, w, d = features.shape
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cx = (xs + 0.5) / w
    cy = (ys + 0.5) / h
    means = np.zeros((num_regions, d))
    centroids = np.zeros((num_regions, 2))
    for r in range(num_regions):
        mask = labels == r
        if not mask.any():
            raise DegenerateRegionError(f"region {r} has no pixels at this resolution")
        means[r] = features[mask].mean(axis=0)
        centroids[r] = [cx[mask].mean(), cy[mask].mean()]
    return means, centroids


def cost_matrix(
    scene_means: np.ndarray,
    scene_centroids: np.ndarray,
    style_means: np.ndarray,
    style_centroids: np.ndarray,
    beta: float = 1.0,
) -> np.ndarray:
    """Pairwise matching costs: cosine feature distance plus scaled centroid distance."""
    scene_means = np.asarray(scene_means, dtype=np.float64)
    style_means = np.asarray(style_means, dtype=np.float64)
    scene_centroids = np.asarray(scene_centroids, dtype=np.float64)
    style_centroids = np.asarray(style_centroids, dtype=np.float64)
    if beta < 0:
        raise DomainError("beta must be non-negative")
    a = scene_means / np.maximum(np.linalg.norm(scene_means, axis=1, keepdims=True), _EPS)
    b = style_means / np.maximum(np.linalg.norm(style_means, axis=1, keepdims=True), _EPS)
    feature_dist = np.clip(1.0 - a @ b.T, 0.0, 2.0)
    diff = scene_centroids[:, None, :] - style_centroids[None, :, :]
    patch_dist = np.linalg.norm(diff, axis=-1)
    return feature_dist + beta * patch_dist


def _lap(costs: np.ndarray) -> dict[int, int]:
    """Minimal-cost assignment of every row to a distinct column (rows <= cols).

    Shortest-augmenting-path formulation with dual potentials.
    """
    n, m = costs.shape
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    col_row = [0] * (m + 1)  # 1-based row matched to each column, 0 = free
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        col_row[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = col_row[j0]
            delta = inf
            j1 = 0
            row = costs[i0 - 1]
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[col_row[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if col_row[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            col_row[j0] = col_row[j1]
            j0 = j1
    assignment = {}
    for j in range(1, m + 1):
        if col_row[j]:
            assignment[col_row[j] - 1] = j - 1
    return assignment


def _total(costs: np.ndarray, assignment: dict[int, int]) -> float:
    return math.fsum(costs[i, assignment[i]] for i in sorted(assignment))


def _lexicographic_min_assignment(costs: np.ndarray) -> dict[int, int]:
    """Optimal assignment; among optima, smallest column choices row by row.

    Fixing row i to any column whose forced completion still reaches the
    minimum over the currently available columns preserves optimality, so
    scanning columns in ascending order yields the lexicographic minimum.
    """
    n, m = costs.shape
    assignment: dict[int, int] = {}
    free_cols = list(range(m))
    for i in range(n):
        rest = costs[i + 1 :, :]
        totals = []
        for j in free_cols:
            remaining = [c for c in free_cols if c != j]
            completion = 0.0
            if rest.shape[0] > 0:
                sub = rest[:, remaining]
                completion = _total(sub, _lap(sub))
            totals.append((j, costs[i, j] + completion))
        min_total = min(t for _, t in totals)
        tol = _TIE_TOL * max(1.0, abs(min_total))
        best_col = min(j for j, t in totals if t <= min_total + tol)
        assignment[i] = best_col
        free_cols.remove(best_col)
    return assignment


@dataclass(frozen=True)
class MatchingResult:
    assignment: dict[int, int]
    total_cost: float
    mode: str


def _validate_costs(costs) -> np.ndarray:
    arr = np.asarray(costs, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DomainError("cost matrix must be 2-d and non-empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError("cost matrix must be finite")
    return arr


def injective_matching(costs) -> MatchingResult:
    """Each scene region gets a distinct style region; requires C <= S."""
    arr = _validate_costs(costs)
    c, s = arr.shape
    if c > s:
        raise MatchingModeError(
            f"injective matching needs at most as many scene regions ({c}) as style regions ({s})"
        )
    assignment = _lexicographic_min_assignment(arr)
    return MatchingResult(assignment, _total(arr, assignment), INJECTIVE)


def surjective_matching(costs) -> MatchingResult:
    """Every scene region assigned, every style region used; requires C >= S.

    First each style region claims its best distinct scene region (an
    injective pass on the transpose), which guarantees surjectivity. The
    remaining scene regions are then assigned in repeated injective passes
    against the full style set, always scoring with the original costs.
    """
    arr = _validate_costs(costs)
    c, s = arr.shape
    if c < s:
        raise MatchingModeError(
            f"surjective matching needs at least as many scene regions ({c}) as style regions ({s})"
        )
    first = _lexicographic_min_assignment(arr.T)
    assignment = {scene: style for style, scene in first.items()}
    residual = [i for i in range(c) if i not in assignment]
    while residual:
        batch = residual[:s]
        sub = arr[batch, :]
        if len(batch) <= s:
            part = _lexicographic_min_assignment(sub)
            for local_row, col in part.items():
                assignment[batch[local_row]] = col
        residual = residual[len(batch) :]
    return MatchingResult(assignment, _total(arr, assignment), SURJECTIVE)


def match_regions(costs, mode: str = "auto") -> MatchingResult:
    """Assign scene regions to style regions, picking the mode by shape."""
    arr = _validate_costs(costs)
    c, s = arr.shape
    if mode == "auto":
        mode = INJECTIVE if c <= s else SURJECTIVE
    if mode == INJECTIVE:
        return injective_matching(arr)
    if mode == SURJECTIVE:
        return surjective_matching(arr)
    raise MatchingModeError(f"unknown matching mode: {mode!r}")


MATCHING_FORMAT_VERSION = 1


def save_matching(
    path,
    assignment: dict[int, int],
    num_scene_regions: int,
    num_style_regions: int,
    mode: str,
) -> None:
    """Write an assignment as JSON after validating it."""
    validate_assignment(assignment, num_scene_regions, num_style_regions, mode)
    payload = {
        "version": MATCHING_FORMAT_VERSION,
        "mode": mode,
        "num_scene_regions": int(num_scene_regions),
        "num_style_regions": int(num_style_regions),
        "assignment": {str(k): int(v) for k, v in sorted(assignment.items())},
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_matching(path) -> tuple[dict[int, int], int, int, str]:
    """Read and validate a matching file; returns (assignment, C, S, mode)."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"matching file is not valid JSON: {exc}") from exc
    return parse_matching_payload(payload)


def parse_matching_payload(payload) -> tuple[dict[int, int], int, int, str]:
    if not isinstance(payload, dict):
        raise DomainError("matching payload must be an object")
    if payload.get("version") != MATCHING_FORMAT_VERSION:
        raise DomainError(f"unsupported matching version: {payload.get('version')!r}")
    for key in ("mode", "num_scene_regions", "num_style_regions", "assignment"):
        if key not in payload:
            raise DomainError(f"matching payload missing {key!r}")
    c = int(payload["num_scene_regions"])
    s = int(payload["num_style_regions"])
    raw = payload["assignment"]
    if not isinstance(raw, dict):
        raise DomainError("assignment must be an object")
    try:
        assignment = {int(k): int(v) for k, v in raw.items()}
    except (TypeError, ValueError) as exc:
        raise DomainError(f"assignment keys/values must be integers: {exc}") from exc
    mode = payload["mode"]
    validate_assignment(assignment, c, s, mode)
    return assignment, c, s, mode


def validate_assignment(
    assignment: dict[int, int], num_scene_regions: int, num_style_regions: int, mode: str
) -> None:
    """Check completeness, ranges, and the mode's structural requirement.

    Custom (hand-edited) assignments use mode "custom": any complete
    in-range map is accepted.
    """
    if mode not in (INJECTIVE, SURJECTIVE, "custom"):
        raise MatchingModeError(f"unknown matching mode: {mode!r}")
    if sorted(assignment) != list(range(num_scene_regions)):
        raise DomainError("assignment must cover every scene region exactly once")
    values = list(assignment.values())
    if any(v < 0 or v >= num_style_regions for v in values):
        raise DomainError("assignment has style indices out of range")
    if mode == INJECTIVE and len(set(values)) != len(values):
        seen: dict[int, int] = {}
        for scene_id in sorted(assignment):
            style_id = assignment[scene_id]
            if style_id in seen:
                raise DomainError(
                    f"injective assignment reuses style region {style_id}: "
                    f"scene regions {seen[style_id]} and {scene_id}"
                )
            seen[style_id] = scene_id
    if mode == SURJECTIVE and set(values) != set(range(num_style_regions)):
        raise DomainError("surjective assignment leaves a style region unused")
