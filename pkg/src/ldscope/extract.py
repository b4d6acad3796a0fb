"""Singular-feature extraction from LD layers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from matplotlib.path import Path
from scipy import ndimage
from scipy.spatial import cKDTree

OPERATORS = ("gradient_norm", "laplacian")
_EIGHT = np.ones((3, 3), dtype=bool)


def gradient_norm(layer: np.ndarray, spacing=(1.0, 1.0)) -> np.ndarray:
    """Central differences inside, one-sided at the border."""
    layer = np.asarray(layer, dtype=np.float64)
    if min(layer.shape) < 2:
        raise ValueError("layer must be at least 2x2")
    dx, dy = spacing
    gy, gx = np.gradient(layer, dy, dx, edge_order=1)
    return np.hypot(gx, gy)


def laplacian(layer: np.ndarray, spacing=(1.0, 1.0)) -> np.ndarray:
    """Five-point stencil; the outer ring is left at zero."""
    L = np.asarray(layer, dtype=np.float64)
    dx, dy = spacing
    out = np.zeros_like(L)
    c = L[1:-1, 1:-1]
    out[1:-1, 1:-1] = ((L[1:-1, 2:] - 2.0 * c + L[1:-1, :-2]) / (dx * dx)
                       + (L[2:, 1:-1] - 2.0 * c + L[:-2, 1:-1]) / (dy * dy))
    return out


def apply_operator(layer, operator: str, spacing=(1.0, 1.0)) -> np.ndarray:
    if operator == "gradient_norm":
        return gradient_norm(layer, spacing)
    if operator == "laplacian":
        return np.abs(laplacian(layer, spacing))
    raise ValueError(f"unknown operator {operator!r}; expected one of {OPERATORS}")


def transition_band(mask: np.ndarray) -> np.ndarray:
    """Nodes on either side of a boundary of ``mask`` (8-neighbourhood)."""
    mask = np.asarray(mask, dtype=bool)
    grown = ndimage.binary_dilation(mask, _EIGHT)
    shrunk = ndimage.binary_erosion(mask, _EIGHT, border_value=1)
    return grown & ~shrunk


@dataclass(frozen=True)
class RidgeSet:
    """Grid nodes flagged as singular features.

    ``ij`` holds ``(i, j)`` index pairs (``i`` along the first grid axis,
    ``j`` along the second), sorted lexicographically; ``xy`` the matching
    coordinates and ``values`` the operator value at each node.
    """

    ij: np.ndarray
    xy: np.ndarray
    values: np.ndarray
    source_layer: str
    operator: str
    threshold_percentile: float
    threshold: float

    def __len__(self):
        return self.ij.shape[0]


def _non_max_suppress(values: np.ndarray, layer: np.ndarray, spacing) -> np.ndarray:
    dx, dy = spacing
    gy, gx = np.gradient(layer, dy, dx)
    ang = np.mod(np.arctan2(gy / dy, gx / dx), np.pi)
    sector = np.round(ang / (np.pi / 4)).astype(int) % 4
    offsets = [(0, 1), (1, 1), (1, 0), (1, -1)]  # (drow, dcol) for 0, 45, 90, 135 deg
    pad = np.pad(values, 1, mode="edge")
    R, C = np.indices(values.shape)
    keep = np.zeros(values.shape, dtype=bool)
    for s, (dr, dc) in enumerate(offsets):
        sel = sector == s
        a = pad[R[sel] + 1 + dr, C[sel] + 1 + dc]
        b = pad[R[sel] + 1 - dr, C[sel] + 1 - dc]
        keep[sel] = (values[sel] >= a) & (values[sel] >= b)
    return keep


def extract_ridges(layer: np.ndarray, operator: str = "gradient_norm",
                   threshold_percentile: float = 95.0, spacing=(1.0, 1.0), axes=None,
                   exclude: np.ndarray | None = None, source_layer: str = "total",
                   thin: bool = False) -> RidgeSet:
    """Keep nodes whose operator value exceeds the given percentile of the
    candidate distribution. ``exclude`` removes nodes from candidacy."""
    if not 0 < threshold_percentile < 100:
        raise ValueError("threshold_percentile must lie in (0, 100)")
    layer = np.asarray(layer, dtype=np.float64)
    values = apply_operator(layer, operator, spacing)
    cand = np.ones(layer.shape, dtype=bool) if exclude is None else ~np.asarray(exclude, bool)
    if operator == "laplacian":
        cand[0, :] = cand[-1, :] = cand[:, 0] = cand[:, -1] = False
    cand &= np.isfinite(values)
    if not cand.any():
        thr = np.inf
        keep = cand
    else:
        thr = float(np.percentile(values[cand], threshold_percentile))
        keep = cand & (values > thr)
    if thin:
        keep &= _non_max_suppress(values, layer, spacing)
    j, i = np.nonzero(keep)
    order = np.lexsort((j, i))
    i, j = i[order], j[order]
    if axes is None:
        xs = np.arange(layer.shape[1]) * spacing[0]
        ys = np.arange(layer.shape[0]) * spacing[1]
    else:
        xs, ys = axes
    ij = np.column_stack([i, j]).astype(np.int64)
    xy = np.column_stack([xs[i], ys[j]]) if i.size else np.zeros((0, 2))
    return RidgeSet(ij, xy, values[j, i], source_layer, operator, float(threshold_percentile), thr)


def field_exclusion(fld, exclude_escape_boundary: bool = False) -> np.ndarray:
    """Nodes barred from ridge candidacy: forbidden nodes and their neighbours,
    plus both sides of escape-mask transitions."""
    invalid = ~fld.valid_mask
    excl = invalid | (ndimage.binary_dilation(invalid, _EIGHT) if invalid.any() else invalid)
    if exclude_escape_boundary:
        excl = excl | transition_band(fld.escape_mask)
    return excl


def field_ridges(fld, layer: str = "total", operator: str = "gradient_norm",
                 threshold_percentile: float = 95.0, thin: bool = False,
                 exclude_escape_boundary: bool = False) -> RidgeSet:
    return extract_ridges(fld.layer(layer), operator, threshold_percentile, fld.grid.spacing,
                          fld.grid.axes(), field_exclusion(fld, exclude_escape_boundary),
                          layer, thin)


def ridge_distance(ridges, curve, k: float = 1, spacing=(1.0, 1.0)) -> dict:
    """Distances between ridge points and a sampled reference curve.

    ``mean``/``max`` are ridge-to-nearest-curve-sample distances in physical
    units (``*_cells`` in grid cells); ``coverage`` is the fraction of curve
    samples with a ridge point within ``k`` cells (square neighbourhood).
    """
    pts = ridges.xy if isinstance(ridges, RidgeSet) else np.asarray(ridges, dtype=np.float64)
    curve = np.asarray(curve, dtype=np.float64)
    if pts.size == 0 or curve.size == 0:
        raise ValueError("ridge set and curve must both be nonempty")
    sc = np.asarray(spacing, dtype=np.float64)
    d_phys, _ = cKDTree(curve).query(pts)
    d_cells, _ = cKDTree(curve / sc).query(pts / sc)
    near, _ = cKDTree(pts / sc).query(curve / sc, p=np.inf)
    return {
        "mean": float(d_phys.mean()),
        "max": float(d_phys.max()),
        "mean_cells": float(d_cells.mean()),
        "max_cells": float(d_cells.max()),
        "coverage": float(np.mean(near <= k + 1e-9)),
    }


def curve_within(curve: np.ndarray, grid) -> np.ndarray:
    """Rows of ``curve`` inside the grid's rectangle."""
    (x0, x1), (y0, y1) = grid.ranges
    c = np.asarray(curve)
    inside = (c[:, 0] >= x0) & (c[:, 0] <= x1) & (c[:, 1] >= y0) & (c[:, 1] <= y1)
    return c[inside]


def closed_loop(points: np.ndarray, center=None, n_bins: int = 180,
                values: np.ndarray | None = None) -> np.ndarray:
    """Close a star-shaped ridge band into a polygon.

    Points are binned by angle about ``center`` (their centroid by default).
    Each nonempty bin contributes one vertex: the point with the largest
    ``values`` entry when given (the sharpest part of a thick band, ignoring
    weaker interior features), else the median radius.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 3:
        raise ValueError("need at least three points to close a loop")
    c = pts.mean(axis=0) if center is None else np.asarray(center, dtype=np.float64)
    d = pts - c
    ang = np.arctan2(d[:, 1], d[:, 0])
    rad = np.hypot(d[:, 0], d[:, 1])
    b = np.minimum(((ang + np.pi) / (2 * np.pi) * n_bins).astype(int), n_bins - 1)
    poly = []
    for k in range(n_bins):
        sel = np.nonzero(b == k)[0]
        if sel.size:
            a = -np.pi + (k + 0.5) * 2 * np.pi / n_bins
            r = rad[sel[np.argmax(values[sel])]] if values is not None else np.median(rad[sel])
            poly.append((c[0] + r * np.cos(a), c[1] + r * np.sin(a)))
    return np.asarray(poly)


def ridge_loop(ridges: RidgeSet, center=None, n_bins: int = 180) -> np.ndarray:
    return closed_loop(ridges.xy, center, n_bins, ridges.values)


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def inside_polygon(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return Path(poly).contains_points(np.asarray(pts, dtype=np.float64))
