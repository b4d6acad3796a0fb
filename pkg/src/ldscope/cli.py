"""``ldscope`` command line.

Settings come from an optional TOML file (``--config``) whose keys are the
:class:`RunConfig` field names; command-line flags override file values.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .extract import OPERATORS, field_ridges
from .hamsec import (LABELS, SECTION_AXES, SectionSpec, classify_many, compute_section_ld_field,
                     _lift)
from .integrate import METHODS, EscapeRegion, IntegratorConfig, strobe_map
from .io_render import (RenderConfig, export_csv, export_points_csv, read_field, render_png,
                        write_field)
from .ldfield import GridSpec2D, LDConfig, compute_ld_field
from .systems import COORD_NAMES, ConfigurationError, SystemSpec

COMMANDS = ("field", "extract", "section", "strobe", "classify", "repro")


@dataclass
class RunConfig:
    command: str = "field"
    system: str = "linear_saddle"
    params: dict = field(default_factory=dict)
    grid: str | dict | None = None
    axes: list | None = None
    fixed: dict = field(default_factory=dict)
    t0: float = 0.0
    p: float = 0.5
    tau: float | None = None
    tau_f: float | None = None
    tau_b: float | None = None
    escape_radius: float | None = None
    escape_center: list | None = None
    auto_balance: bool = False
    balance_rates: list | None = None
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    max_step: float = 0.1
    method: str = "rk45_adaptive"
    fixed_step: float = 0.01
    workers: int | None = None
    backend: str | None = None
    out: str | None = None
    png: str | None = None
    colormap: str = "viridis"
    input: str | None = None
    layer: str = "total"
    operator: str = "gradient_norm"
    percentile: float = 95.0
    thin: bool = False
    exclude_escape_boundary: bool = False
    section: str = "sigma2"
    H0: float = 0.05
    x_value: float = -0.4
    ic: list | None = None
    period: float | None = None
    n_periods: int = 15000
    n_skip: int = 100
    t_max: float = 200.0
    eps_settle: float = 1e-3
    figure: str | None = None
    out_dir: str = "."
    resolution: int | None = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigurationError(f"command must be one of {COMMANDS}")
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {sorted(METHODS)}")
        if self.operator not in OPERATORS:
            raise ConfigurationError(f"operator must be one of {OPERATORS}")
        if self.command in ("section", "classify") and self.system != "double_well_2dof":
            raise ConfigurationError(f"{self.command} requires system double_well_2dof")
        if self.backend == "auto":
            self.backend = None
        if self.backend not in (None, "numba", "numpy"):
            raise ConfigurationError(f"backend must be numba, numpy or auto, not {self.backend!r}")
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.command == "repro" and not self.figure:
            raise ConfigurationError("repro needs a figure id")
        if self.command == "extract" and not self.input:
            raise ConfigurationError("extract needs an input field file")

    def horizons(self) -> tuple[float, float]:
        base = 10.0 if self.tau is None else float(self.tau)
        tf = base if self.tau_f is None else float(self.tau_f)
        tb = base if self.tau_b is None else float(self.tau_b)
        return tf, tb

    def ld_config(self) -> LDConfig:
        tf, tb = self.horizons()
        if self.escape_radius is None:
            esc = EscapeRegion()
        else:
            esc = EscapeRegion.circle(self.escape_radius, self.escape_center or (0.0, 0.0))
        rates = None if self.balance_rates is None else tuple(self.balance_rates)
        return LDConfig(self.p, tf, tb, esc, self.auto_balance, rates)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.rel_tol, self.abs_tol, self.max_step, self.method,
                                self.fixed_step)


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_GRID_RE = re.compile(
    r"^\s*\[\s*([^,\]]+)\s*,\s*([^\]]+)\]\s*x\s*\[\s*([^,\]]+)\s*,\s*([^\]]+)\]\s*@\s*(\d+)"
    r"(?:\s*x\s*(\d+))?\s*$")


def parse_grid(text: str) -> tuple[tuple[tuple[float, float], tuple[float, float]], tuple[int, int]]:
    """``"[lo,hi]x[lo,hi]@N"`` (or ``@NxM``) -> ranges, resolution."""
    m = _GRID_RE.match(text)
    if not m:
        raise ConfigurationError(f"bad grid {text!r}; expected '[lo,hi]x[lo,hi]@N'")
    a, b, c, d = (float(m.group(k)) for k in range(1, 5))
    n = int(m.group(5))
    mres = int(m.group(6)) if m.group(6) else n
    return ((a, b), (c, d)), (n, mres)


def _key_line(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*[\"']?{re.escape(key)}[\"']?\s*=")
    for k, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return k
    return None


def load_config(path) -> dict:
    """Read a TOML config, rejecting unknown keys with their line number."""
    text = Path(path).read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    for key in data:
        if key not in FIELDS:
            line = _key_line(text, key)
            where = f"{path}:{line}" if line else str(path)
            raise ConfigurationError(f"{where}: unknown key {key!r}")
    return data


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config(args.config))
    for name in FIELDS:
        v = getattr(args, name, None)
        if v is not None and name not in ("params", "fixed"):
            values[name] = v
    params = dict(values.get("params", {}))
    params.update(_pairs(getattr(args, "params", None)))
    fixed = dict(values.get("fixed", {}))
    fixed.update(_pairs(getattr(args, "fixed", None)))
    values["params"], values["fixed"] = params, fixed
    values["command"] = args.command
    if args.command in ("section", "classify"):
        values.setdefault("system", "double_well_2dof")
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _pairs(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigurationError(f"expected name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise ConfigurationError(f"value for {k.strip()!r} is not a number: {v!r}") from None
    return out


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",")]


def _grid_spec(cfg: RunConfig, axes, dims) -> GridSpec2D:
    g = cfg.grid if cfg.grid is not None else "[-1,1]x[-1,1]@501"
    if isinstance(g, str):
        ranges, res = parse_grid(g)
    else:
        ranges = tuple(tuple(r) for r in g["ranges"])
        res = g["resolution"]
        res = (res, res) if isinstance(res, int) else tuple(res)
    if cfg.resolution:
        res = (cfg.resolution, cfg.resolution)
    axes = tuple(cfg.axes) if cfg.axes else tuple(axes)
    fixed = {k: 0.0 for k in dims if k not in axes}
    fixed.update(cfg.fixed)
    return GridSpec2D(axes, ranges, res, fixed, cfg.t0)


def _cmd_field(cfg: RunConfig) -> list[Path]:
    spec = SystemSpec(cfg.system, cfg.params)
    grid = _grid_spec(cfg, COORD_NAMES[cfg.system][:2], COORD_NAMES[cfg.system])
    fld = compute_ld_field(spec, grid, cfg.ld_config(), cfg.integrator(), cfg.workers,
                           cfg.backend)
    out = Path(cfg.out or f"{cfg.system}.ldf")
    write_field(fld, out)
    written = [out]
    if cfg.png:
        render_png(fld, RenderConfig(layer=cfg.layer, colormap=cfg.colormap), cfg.png)
        written.append(Path(cfg.png))
    return written


def _cmd_extract(cfg: RunConfig) -> list[Path]:
    fld = read_field(cfg.input)
    rs = field_ridges(fld, cfg.layer, cfg.operator, cfg.percentile, cfg.thin,
                      cfg.exclude_escape_boundary)
    out = Path(cfg.out or Path(cfg.input).with_suffix(".ridges.csv"))
    export_csv(rs, out)
    written = [out]
    if cfg.png:
        layer = "gradient" if cfg.operator == "gradient_norm" else "laplacian"
        render_png(fld, RenderConfig(layer=layer, colormap=cfg.colormap,
                                     source_layer=cfg.layer), cfg.png)
        written.append(Path(cfg.png))
    return written


def _section(cfg: RunConfig) -> SectionSpec:
    return SectionSpec(cfg.section, cfg.H0, cfg.x_value)


def _cmd_section(cfg: RunConfig) -> list[Path]:
    sec = _section(cfg)
    spec = SystemSpec("double_well_2dof", cfg.params)
    grid = _grid_spec(cfg, SECTION_AXES[sec.id], SECTION_AXES[sec.id])
    fld = compute_section_ld_field(spec.params, sec, grid, cfg.ld_config(), cfg.integrator(),
                                   cfg.workers, cfg.backend)
    out = Path(cfg.out or f"{sec.id}.ldf")
    write_field(fld, out)
    written = [out]
    if cfg.png:
        render_png(fld, RenderConfig(layer=cfg.layer, colormap=cfg.colormap), cfg.png)
        written.append(Path(cfg.png))
    return written


def _cmd_strobe(cfg: RunConfig) -> list[Path]:
    spec = SystemSpec(cfg.system, cfg.params)
    if cfg.period is not None:
        period = cfg.period
    elif "omega" in spec.params and not spec.autonomous:
        period = 2 * math.pi / spec.params["omega"]
    else:
        raise ConfigurationError("strobe needs --period for this system")
    ic = cfg.ic if cfg.ic is not None else [1.0] + [0.0] * (spec.dim - 1)
    res = strobe_map(spec, ic, cfg.t0, period, cfg.n_periods, cfg.n_skip, cfg.integrator(),
                     cfg.backend)
    out = Path(cfg.out or f"{cfg.system}_strobe.csv")
    export_points_csv(out, spec.coord_names, res.points)
    return [out]


def _cmd_classify(cfg: RunConfig) -> list[Path]:
    sec = _section(cfg)
    spec = SystemSpec("double_well_2dof", cfg.params)
    sec.validate(spec.params)
    grid = _grid_spec(cfg, SECTION_AXES[sec.id], SECTION_AXES[sec.id])
    A, B = grid.mesh()
    X, ok = _lift(spec.params, sec, A, B)
    sel = ok.ravel()
    code, ts, cr, _ = classify_many(spec.params, X.reshape(-1, 4)[sel], cfg.t_max,
                                    cfg.integrator(), cfg.eps_settle, cfg.workers, cfg.backend)
    pts = np.column_stack([A.ravel()[sel], B.ravel()[sel]])
    out = Path(cfg.out or f"{sec.id}_labels.csv")
    export_points_csv(out, list(grid.axis_names), pts,
                      {"label": [LABELS[int(c)] for c in code],
                       "settle_time": ["" if np.isnan(t) else format(t, ".17g") for t in ts],
                       "crossings": [int(c) for c in cr]})
    return [out]


def _cmd_repro(cfg: RunConfig) -> list[Path]:
    from .repro import run_figure

    paths = run_figure(cfg.figure, cfg.out_dir, cfg.resolution, cfg.workers, cfg.backend,
                       cfg.integrator(), png=True)
    return list(paths.values())


HANDLERS = {"field": _cmd_field, "extract": _cmd_extract, "section": _cmd_section,
            "strobe": _cmd_strobe, "classify": _cmd_classify, "repro": _cmd_repro}


def run(cfg: RunConfig) -> list[Path]:
    cfg.validate()
    return HANDLERS[cfg.command](cfg)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file with RunConfig keys")
    p.add_argument("--workers", type=int, help="worker threads (default: $LDSCOPE_WORKERS or 1)")
    p.add_argument("--backend", choices=("numba", "numpy", "auto"))
    p.add_argument("--rtol", dest="rel_tol", type=float)
    p.add_argument("--atol", dest="abs_tol", type=float)
    p.add_argument("--max-step", dest="max_step", type=float)
    p.add_argument("--method", choices=sorted(METHODS))
    p.add_argument("--fixed-step", dest="fixed_step", type=float)
    p.add_argument("--out", "-o")
    p.add_argument("--png")
    p.add_argument("--colormap")


def _ld_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--param", dest="params", action="append", metavar="NAME=VALUE")
    p.add_argument("--grid", help="'[lo,hi]x[lo,hi]@N'")
    p.add_argument("--resolution", type=int)
    p.add_argument("--t0", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--tau", type=float, help="sets both horizons")
    p.add_argument("--tau-f", dest="tau_f", type=float)
    p.add_argument("--tau-b", dest="tau_b", type=float)
    p.add_argument("--escape-radius", dest="escape_radius", type=float)
    p.add_argument("--escape-center", dest="escape_center", type=_floats)
    p.add_argument("--layer", choices=("forward", "backward", "total", "gradient", "laplacian"))


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldscope", description="Lagrangian descriptor fields")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field", help="compute an LD field on a 2-D grid")
    _common(p)
    _ld_flags(p)
    p.add_argument("--system", choices=sorted(COORD_NAMES))
    p.add_argument("--axes", type=lambda s: s.split(","))
    p.add_argument("--fix", dest="fixed", action="append", metavar="COORD=VALUE")
    p.add_argument("--auto-balance", dest="auto_balance", action="store_true", default=None)
    p.add_argument("--balance-rates", dest="balance_rates", type=_floats)

    p = sub.add_parser("extract", help="ridge points of a stored field")
    _common(p)
    p.add_argument("input")
    p.add_argument("--layer", choices=("forward", "backward", "total"))
    p.add_argument("--operator", choices=OPERATORS)
    p.add_argument("--percentile", type=float)
    p.add_argument("--thin", action="store_true", default=None)
    p.add_argument("--exclude-escape-boundary", dest="exclude_escape_boundary",
                   action="store_true", default=None)

    for name, text in (("section", "LD field on a double-well section"),
                       ("classify", "reactive/nonreactive labels on a section grid")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _ld_flags(p)
        p.add_argument("--section", choices=sorted(SECTION_AXES))
        p.add_argument("--H0", dest="H0", type=float)
        p.add_argument("--x-value", dest="x_value", type=float)
        if name == "classify":
            p.add_argument("--t-max", dest="t_max", type=float)
            p.add_argument("--eps-settle", dest="eps_settle", type=float)

    p = sub.add_parser("strobe", help="stroboscopic map of a forced system")
    _common(p)
    p.add_argument("--system", choices=sorted(COORD_NAMES))
    p.add_argument("--param", dest="params", action="append", metavar="NAME=VALUE")
    p.add_argument("--ic", type=_floats)
    p.add_argument("--t0", type=float)
    p.add_argument("--period", type=float)
    p.add_argument("--n-periods", dest="n_periods", type=int)
    p.add_argument("--n-skip", dest="n_skip", type=int)

    p = sub.add_parser("repro", help="reproduce a published figure's data")
    _common(p)
    p.add_argument("figure")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--resolution", type=int)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        cfg = build_config(args)
        written = run(cfg)
    except (ConfigurationError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"ldscope: error: {msg}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ldscope: error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
