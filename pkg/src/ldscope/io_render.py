"""Field files, CSV export and PNG rendering.

File layout (all integers little-endian)::

    b"LDF1" | u64 header length | UTF-8 JSON header | payload

The payload holds the forward, backward and total layers as ``<f8`` in
row-major order, followed by escape_mask and valid_mask as one byte per node.
"""
from __future__ import annotations

import csv
import json
import os
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw

from . import __version__
from .extract import RidgeSet, apply_operator
from .ldfield import GridSpec2D, LDField
from .systems import SystemSpec, equilibria

MAGIC = b"LDF1"
FORMAT_VERSION = 1
LAYERS = ("forward", "backward", "total")
MASKS = ("escape_mask", "valid_mask")
_LEN = struct.Struct("<Q")


class FieldIOError(OSError):
    pass


class MagicMismatchError(FieldIOError):
    pass


class VersionMismatchError(FieldIOError):
    pass


class TruncatedFileError(FieldIOError):
    pass


def encode_field(fld: LDField) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "endianness": "little",
        "dtype": "float64",
        "shape": list(fld.grid.shape),
        "layer_order": list(LAYERS),
        "mask_order": list(MASKS),
        "grid": fld.grid.to_dict(),
        "meta": fld.meta,
        "writer_version": __version__,
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, _LEN.pack(len(hdr)), hdr]
    for name in LAYERS:
        parts.append(np.ascontiguousarray(fld.layer(name), dtype="<f8").tobytes())
    for name in MASKS:
        parts.append(np.ascontiguousarray(getattr(fld, name), dtype=np.uint8).tobytes())
    return b"".join(parts)


def decode_field(buf: bytes) -> LDField:
    if len(buf) < 4 and MAGIC.startswith(bytes(buf)):
        raise TruncatedFileError("file ends inside the magic number")
    if buf[:4] != MAGIC:
        raise MagicMismatchError(f"not a field file: magic {bytes(buf[:4])!r} != {MAGIC!r}")
    if len(buf) < 4 + _LEN.size:
        raise TruncatedFileError("file ends inside the header length")
    (n,) = _LEN.unpack_from(buf, 4)
    start = 4 + _LEN.size
    if len(buf) < start + n:
        raise TruncatedFileError("file ends inside the JSON header")
    try:
        header = json.loads(buf[start:start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FieldIOError(f"unreadable header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"format version {header.get('format_version')} unsupported (expected {FORMAT_VERSION})")
    if header.get("endianness") != "little" or header.get("dtype") != "float64":
        raise FieldIOError("payload must be little-endian float64")
    grid = GridSpec2D.from_dict(header["grid"])
    shape = tuple(header["shape"])
    if shape != grid.shape:
        raise FieldIOError(f"header shape {shape} disagrees with grid {grid.shape}")
    count = shape[0] * shape[1]
    need = count * (8 * len(header["layer_order"]) + len(header["mask_order"]))
    pos = start + n
    if len(buf) - pos < need:
        raise TruncatedFileError(f"payload has {len(buf) - pos} bytes, expected {need}")
    if len(buf) - pos > need:
        raise FieldIOError("trailing bytes after payload")
    arrays = {}
    for name in header["layer_order"]:
        arrays[name] = np.frombuffer(buf, "<f8", count, pos).reshape(shape).astype(np.float64)
        pos += 8 * count
    for name in header["mask_order"]:
        arrays[name] = np.frombuffer(buf, np.uint8, count, pos).reshape(shape).astype(bool)
        pos += count
    return LDField(grid, arrays["forward"], arrays["backward"], arrays["total"],
                   arrays["escape_mask"], arrays["valid_mask"], header["meta"])


def write_field(fld: LDField, path) -> None:
    Path(path).write_bytes(encode_field(fld))


def read_field(path) -> LDField:
    return decode_field(Path(path).read_bytes())


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_rows(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def export_csv(obj, path) -> None:
    """One row per grid node (for a field) or per ridge point."""
    if isinstance(obj, RidgeSet):
        rows = ([_fmt(x), _fmt(y), _fmt(v)] for (x, y), v in zip(obj.xy, obj.values))
        _write_rows(path, ("x", "y", "operator_value"), rows)
        return
    if not isinstance(obj, LDField):
        raise TypeError(f"cannot export {type(obj).__name__} as CSV")
    A, B = obj.grid.mesh()
    cols = [A.ravel(), B.ravel()] + [obj.layer(n).ravel() for n in LAYERS]
    masks = [obj.escape_mask.ravel(), obj.valid_mask.ravel()]
    rows = ([_fmt(c[k]) for c in cols] + [str(int(m[k])) for m in masks]
            for k in range(A.size))
    _write_rows(path, list(obj.grid.axis_names) + list(LAYERS) + list(MASKS), rows)


def field_from_csv(path, grid: GridSpec2D | None = None, meta: dict | None = None) -> LDField:
    """Rebuild a field from :func:`export_csv` output.

    Without ``grid``, ranges and resolution are inferred from the coordinate
    columns.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    idx = {k: head.index(k) for k in head}
    data = np.array([[float(r[idx[k]]) for k in head] for r in body]) if body else None
    if data is None:
        raise FieldIOError("CSV has no data rows")
    if grid is None:
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        grid = GridSpec2D((head[0], head[1]), ((xs[0], xs[-1]), (ys[0], ys[-1])),
                          (xs.size, ys.size))
    shape = grid.shape
    if data.shape[0] != shape[0] * shape[1]:
        raise FieldIOError(f"{data.shape[0]} rows do not fill a {shape} grid")
    get = lambda k: data[:, idx[k]].reshape(shape)  # noqa: E731
    return LDField(grid, get("forward"), get("backward"), get("total"),
                   get("escape_mask").astype(bool), get("valid_mask").astype(bool),
                   dict(meta or {}))


def export_points_csv(path, names: Sequence[str], points, extra: dict | None = None) -> None:
    """Generic point table, e.g. strobe points or classification labels."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    extra = extra or {}
    header = list(names) + list(extra)
    cols = [list(v) for v in extra.values()]
    rows = ([_fmt(v) for v in pts[k]] + [str(c[k]) for c in cols] for k in range(pts.shape[0]))
    _write_rows(path, header, rows)


@dataclass(frozen=True)
class Overlay:
    """Curve (polyline) or point markers drawn in data coordinates."""

    data: np.ndarray
    kind: str = "curve"
    color: str = "magenta"
    label: str | None = None
    width: int = 2

    def __post_init__(self):
        if self.kind not in ("curve", "points"):
            raise ValueError("overlay kind must be 'curve' or 'points'")
        object.__setattr__(self, "data", np.atleast_2d(np.asarray(self.data, dtype=np.float64)))


@dataclass(frozen=True)
class RenderConfig:
    layer: str = "total"
    colormap: str = "viridis"
    size: tuple[int, int] | None = None
    overlays: tuple[Overlay, ...] = field(default_factory=tuple)
    source_layer: str = "total"
    downscale: int = 1

    def __post_init__(self):
        if self.layer not in LAYERS + ("gradient", "laplacian"):
            raise ValueError(f"unknown render layer {self.layer!r}")
        if self.downscale < 1:
            raise ValueError("downscale must be >= 1")


def equilibria_overlays(spec: SystemSpec) -> tuple[Overlay, ...]:
    """Yellow dots at stable equilibria, magenta at saddles."""
    eqs = equilibria(spec)
    out = []
    for kind, color in (("stable", "yellow"), ("saddle", "magenta")):
        pts = [e.state.coords[:2] for e in eqs if e.stability == kind]
        if pts:
            out.append(Overlay(np.array(pts), "points", color, kind))
    return tuple(out)


def _display_values(fld: LDField, cfg: RenderConfig) -> np.ndarray:
    if cfg.layer in LAYERS:
        vals = fld.layer(cfg.layer)
    else:
        op = "gradient_norm" if cfg.layer == "gradient" else "laplacian"
        vals = apply_operator(fld.layer(cfg.source_layer), op, fld.grid.spacing)
    vals = np.where(fld.valid_mask, vals, np.nan)
    if cfg.downscale > 1:
        k = cfg.downscale
        ny, nx = vals.shape
        vals = vals[: ny - ny % k, : nx - nx % k]
        vals = vals.reshape(ny // k, k, nx // k, k)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            vals = np.nanmean(vals, axis=(1, 3))
    return vals


def render_image(fld: LDField, cfg: RenderConfig) -> Image.Image:
    from matplotlib import colormaps

    vals = _display_values(fld, cfg)
    ny, nx = vals.shape
    w, h = cfg.size if cfg.size is not None else (nx, ny)
    if w < nx or h < ny:
        raise ValueError(f"image size {w}x{h} is below the grid resolution {nx}x{ny}")
    ok = np.isfinite(vals)
    norm = np.zeros_like(vals)
    if ok.any():
        lo, hi = vals[ok].min(), vals[ok].max()
        if hi > lo:
            norm[ok] = (vals[ok] - lo) / (hi - lo)
        else:
            warnings.warn("constant layer rendered as a uniform image", RuntimeWarning)
    rgba = colormaps[cfg.colormap](norm, bytes=True)
    rgba[~ok] = (0, 0, 0, 255)
    img = Image.fromarray(np.ascontiguousarray(rgba[::-1]), "RGBA").convert("RGB")
    if (w, h) != (nx, ny):
        img = img.resize((w, h), Image.NEAREST)
    draw = ImageDraw.Draw(img)
    (x0, x1), (y0, y1) = fld.grid.ranges

    def to_px(pts):
        px = (pts[:, 0] - x0) / (x1 - x0) * (w - 1)
        py = (y1 - pts[:, 1]) / (y1 - y0) * (h - 1)
        return list(zip(px.tolist(), py.tolist()))

    for ov in cfg.overlays:
        pts = to_px(ov.data)
        if ov.kind == "curve" and len(pts) > 1:
            draw.line(pts, fill=ov.color, width=ov.width)
        else:
            r = max(ov.width, 2)
            for px, py in pts:
                draw.ellipse((px - r, py - r, px + r, py + r), fill=ov.color)
        if ov.label and pts:
            draw.text((pts[0][0] + 4, pts[0][1] + 4), ov.label, fill=ov.color)
    return img


def render_png(fld: LDField, cfg: RenderConfig, path) -> None:
    """Min-max normalized colormap image with overlays; output bytes depend
    only on the inputs."""
    img = render_image(fld, cfg)
    tmp = f"{os.fspath(path)}.part"
    img.save(tmp, format="PNG", optimize=False)
    os.replace(tmp, path)
