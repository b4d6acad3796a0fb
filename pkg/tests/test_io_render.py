from __future__ import annotations

import csv
import hashlib
import io
import json

import numpy as np
import pytest
from PIL import Image

from ldscope import GridSpec2D, LDConfig, LDField, SystemSpec, compute_ld_field
from ldscope.extract import RidgeSet, extract_ridges
from ldscope.io_render import (MAGIC, FieldIOError, MagicMismatchError, Overlay, RenderConfig,
                               TruncatedFileError, VersionMismatchError, decode_field,
                               encode_field, equilibria_overlays, export_csv,
                               export_points_csv, field_from_csv, read_field, render_image,
                               render_png, write_field)


def random_field(rng, shape=None, special=True) -> LDField:
    nx, ny = shape or rng.integers(2, 40, 2)
    lo = rng.uniform(-5, 0, 2)
    g = GridSpec2D(("x", "y"), ((lo[0], lo[0] + rng.uniform(0.1, 5)), (lo[1], lo[1] + rng.uniform(0.1, 5))),
                   (int(nx), int(ny)), {}, float(rng.normal()))
    s = g.shape
    layers = [rng.normal(size=s) * 10.0 ** rng.integers(-300, 300) for _ in range(2)]
    if special:
        # subnormals, signed zero and extremes survive bit-for-bit
        layers[0].flat[0] = 5e-324
        layers[1].flat[-1] = -0.0
        layers[0].flat[-1] = np.finfo(float).max
    fwd, bwd = layers
    return LDField(g, fwd, bwd, rng.normal(size=s), rng.random(s) < 0.3, rng.random(s) < 0.8,
                   {"system": SystemSpec("hopf").to_dict(), "note": "ü∆", "k": [1, 2.5, None]})


def same_bits(a: LDField, b: LDField):
    assert a.grid == b.grid
    for n in ("forward", "backward", "total"):
        assert a.layer(n).dtype == b.layer(n).dtype
        assert a.layer(n).tobytes() == b.layer(n).tobytes()
    assert np.array_equal(a.escape_mask, b.escape_mask)
    assert np.array_equal(a.valid_mask, b.valid_mask)


def test_round_trip_randomized_corpus(tmp_path):
    rng = np.random.default_rng(2024)
    for k in range(100):
        f = random_field(rng)
        p = tmp_path / f"f{k}.ldf"
        write_field(f, p)
        g = read_field(p)
        same_bits(f, g)
        assert g.meta == f.meta


def test_round_trip_computed_field(tmp_path):
    f = compute_ld_field(SystemSpec("linear_saddle"),
                         GridSpec2D(ranges=((-1, 1), (-1, 1)), resolution=(5, 4)), LDConfig(0.5, 2, 2))
    write_field(f, tmp_path / "a.ldf")
    g = read_field(tmp_path / "a.ldf")
    same_bits(f, g)
    assert g.spec == f.spec and g.meta["ld_config"] == f.meta["ld_config"]


def test_escape_mask_all_true_preserved():
    rng = np.random.default_rng(0)
    f = random_field(rng, (2, 2), special=False)
    f.escape_mask[:] = True
    assert decode_field(encode_field(f)).escape_mask.all()


def test_header_layout():
    buf = encode_field(random_field(np.random.default_rng(1), (3, 2)))
    assert buf[:4] == MAGIC
    n = int.from_bytes(buf[4:12], "little")
    head = json.loads(buf[12:12 + n])
    assert head["endianness"] == "little" and head["layer_order"] == ["forward", "backward", "total"]
    assert len(buf) == 12 + n + 3 * 6 * 8 + 2 * 6


def test_corrupt_magic(tmp_path):
    buf = bytearray(encode_field(random_field(np.random.default_rng(2), (2, 2))))
    buf[:4] = b"XXXX"
    with pytest.raises(MagicMismatchError):
        decode_field(bytes(buf))


def test_truncated_and_trailing():
    buf = encode_field(random_field(np.random.default_rng(3), (4, 4)))
    for cut in (2, 10, len(buf) - 1, len(buf) - 40):
        with pytest.raises(TruncatedFileError):
            decode_field(buf[:cut])
    with pytest.raises(FieldIOError, match="trailing"):
        decode_field(buf + b"\0")


def test_version_mismatch():
    buf = encode_field(random_field(np.random.default_rng(4), (2, 3)))
    n = int.from_bytes(buf[4:12], "little")
    head = json.loads(buf[12:12 + n])
    head["format_version"] = 99
    hb = json.dumps(head).encode()
    bad = MAGIC + len(hb).to_bytes(8, "little") + hb + buf[12 + n:]
    with pytest.raises(VersionMismatchError):
        decode_field(bad)


def test_read_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_field(tmp_path / "nope.ldf")


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_field_csv_rows_and_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    f = random_field(rng, (2, 2), special=False)
    export_csv(f, tmp_path / "f.csv")
    rows = _rows(tmp_path / "f.csv")
    assert rows[0] == ["x", "y", "forward", "backward", "total", "escape_mask", "valid_mask"]
    assert len(rows) == 5
    for k in range(20):
        f = random_field(rng)
        export_csv(f, tmp_path / "g.csv")
        same_bits(f, field_from_csv(tmp_path / "g.csv", f.grid))
    # grid inferred from the coordinate columns
    g = field_from_csv(tmp_path / "g.csv")
    assert g.grid.resolution == f.grid.resolution
    assert g.total.tobytes() == f.total.tobytes()


def test_ridge_csv(tmp_path):
    empty = extract_ridges(np.ones((5, 5)))
    export_csv(empty, tmp_path / "e.csv")
    assert _rows(tmp_path / "e.csv") == [["x", "y", "operator_value"]]
    r = extract_ridges(np.random.default_rng(6).normal(size=(8, 8)), threshold_percentile=80)
    export_csv(r, tmp_path / "r.csv")
    rows = _rows(tmp_path / "r.csv")[1:]
    got = np.array(rows, dtype=float)
    assert got.tobytes() == np.column_stack([r.xy, r.values]).tobytes()


def test_points_csv(tmp_path):
    export_points_csv(tmp_path / "p.csv", ["x", "y"], [[0.1, 1 / 3]], {"label": ["reactive"]})
    rows = _rows(tmp_path / "p.csv")
    assert rows[0] == ["x", "y", "label"] and rows[1][2] == "reactive"
    assert float(rows[1][1]) == 1 / 3
    with pytest.raises(TypeError):
        export_csv(object(), tmp_path / "o.csv")


@pytest.fixture(scope="module")
def vdp_field():
    g = GridSpec2D(ranges=((-3, 3), (-3, 3)), resolution=(31, 31))
    return compute_ld_field(SystemSpec("vanderpol", {"mu": 1.5}), g, LDConfig(0.5, 5, 5))


def test_render_deterministic(tmp_path, vdp_field):
    spec = vdp_field.spec
    cfg = RenderConfig(size=(93, 93), overlays=equilibria_overlays(spec)
                       + (Overlay(np.array([[-2, -2], [2, 2]]), label="diag"),))
    render_png(vdp_field, cfg, tmp_path / "a.png")
    render_png(vdp_field, cfg, tmp_path / "b.png")
    a, b = (tmp_path / "a.png").read_bytes(), (tmp_path / "b.png").read_bytes()
    assert hashlib.sha256(a).digest() == hashlib.sha256(b).digest()
    img = Image.open(io.BytesIO(a))
    assert img.format == "PNG" and img.size == (93, 93)
    assert not (tmp_path / "a.png.part").exists()


def test_render_layers_and_overlay_color(vdp_field):
    for layer in ("forward", "backward", "total", "gradient", "laplacian"):
        img = render_image(vdp_field, RenderConfig(layer=layer))
        assert img.size == (31, 31)
    ov = Overlay(np.array([[0.0, 0.0]]), "points", "magenta")
    img = render_image(vdp_field, RenderConfig(size=(62, 62), overlays=(ov,)))
    assert img.getpixel((31, 31)) == (255, 0, 255)


def test_render_size_below_resolution_errors():
    f = random_field(np.random.default_rng(7), (2, 2), special=False)
    with pytest.raises(ValueError):
        render_image(f, RenderConfig(size=(1, 1)))
    small = render_image(f, RenderConfig(downscale=2))
    assert small.size == (1, 1)
    with pytest.raises(ValueError):
        RenderConfig(layer="bogus")


def test_render_constant_layer_warns():
    g = GridSpec2D(ranges=((0, 1), (0, 1)), resolution=(3, 3))
    z = np.zeros((3, 3))
    f = LDField(g, z, z, z, z.astype(bool))
    with pytest.warns(RuntimeWarning):
        img = render_image(f, RenderConfig())
    assert np.unique(np.asarray(img).reshape(-1, 3), axis=0).shape[0] == 1


def test_masked_nodes_render_black():
    g = GridSpec2D(ranges=((0, 1), (0, 1)), resolution=(3, 3))
    L = np.arange(9.0).reshape(3, 3)
    valid = np.ones((3, 3), bool)
    valid[0, 0] = False  # bottom-left node
    img = render_image(LDField(g, L, L, L, ~valid, valid), RenderConfig())
    assert img.getpixel((0, 2)) == (0, 0, 0)


def test_ridgeset_type_used():
    assert isinstance(extract_ridges(np.eye(4)), RidgeSet)
