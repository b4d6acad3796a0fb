"""Figure-reproduction targets: exact published parameters plus grid choices.

Physical and LD parameters in ``FIGURES`` are the published values. Grid
ranges are not published; ours are chosen to frame the structures of
interest. The default resolution is 501 per axis and can be overridden.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .extract import field_ridges
from .hamsec import (LABELS, SectionSpec, classify_many, compute_section_ld_field,
                     energy_boundary, seed_on_section)
from .integrate import EscapeRegion, IntegratorConfig, strobe_map
from .io_render import (Overlay, RenderConfig, equilibria_overlays, export_csv,
                        export_points_csv, render_png, write_field)
from .ldfield import GridSpec2D, LDConfig, compute_ld_field
from .systems import SystemSpec, slow_manifold_curve

DEFAULT_RESOLUTION = 501


@dataclass(frozen=True)
class Figure:
    kind: str  # "field" | "section" | "strobe"
    system: str
    params: dict
    ranges: tuple
    p: float = 0.5
    tau_f: float = 0.0
    tau_b: float = 0.0
    escape_radius: float | None = None
    layer: str = "total"
    operator: str = "gradient_norm"
    section: str | None = None
    H0: float = 0.05
    x_value: float = -0.4
    strobe: dict = field(default_factory=dict)
    overlay: str | None = None


def _dw(gamma):
    return {"m1": 1.0, "m2": 1.0, "a": 1.0, "b": 1.0, "omega": 1.0,
            "gamma_x": gamma, "gamma_y": gamma}


_SQ = ((-1.0, 1.0), (-1.0, 1.0))
_HOPF = ((-1.5, 1.5), (-1.5, 1.5))
_DW = {"sigma1": ((-1.6, 1.6), (-0.5, 0.5)), "sigma2": ((-1.5, 1.5), (-0.8, 0.8)),
       "sigma3": ((-0.55, 0.55), (-0.55, 0.55))}

FIGURES: dict[str, Figure] = {
    "saddle-same-tau": Figure("field", "linear_saddle", {"lam": 1.0, "mu": 2.0}, _SQ,
                              tau_f=8.0, tau_b=8.0, operator="laplacian"),
    "saddle-balanced": Figure("field", "linear_saddle", {"lam": 1.0, "mu": 2.0}, _SQ,
                              tau_f=8.0, tau_b=4.346),
    "nonlinear-saddle": Figure("field", "nonlinear_saddle", {"lam": -2.0, "mu": 1.0},
                               ((-1.5, 1.5), (-1.5, 1.5)), tau_f=26.0, tau_b=25.0,
                               overlay="manifolds"),
    "hopf-beta-neg": Figure("field", "hopf", {"beta": -0.5, "sigma": 1.0}, _HOPF,
                            tau_f=8.0, tau_b=8.0, escape_radius=4.0),
    "hopf-beta-0": Figure("field", "hopf", {"beta": 0.0, "sigma": 1.0}, _HOPF,
                          tau_f=8.0, tau_b=8.0, escape_radius=4.0),
    "hopf-beta-pos": Figure("field", "hopf", {"beta": 0.5, "sigma": 1.0}, _HOPF,
                            tau_f=8.0, tau_b=8.0, escape_radius=4.0),
    **{f"vdp-{mu}": Figure("field", "vanderpol", {"mu": float(mu)},
                           ((-6.0, 6.0), (-6.0, 6.0)) if mu == "3" else ((-4.0, 4.0), (-4.0, 4.0)),
                           tau_f=50.0, tau_b=50.0, escape_radius=20.0, operator="laplacian")
       for mu in ("0.1", "0.5", "1.5", "3")},
    "slow-manifold": Figure("field", "nonlinear_saddle", {"lam": -1.0, "mu": -0.05}, _SQ,
                            tau_f=5.0, tau_b=5.0, overlay="slow"),
    "bead": Figure("field", "bead_hoop", {"eps": 0.02, "mu": 2.3}, ((-2.0, 2.0), (-1.5, 1.5)),
                   tau_f=10.0, tau_b=10.0, operator="laplacian", overlay="slow"),
    "lienard": Figure("field", "vdp_lienard", {"mu": 10.0}, ((-3.0, 3.0), (-3.0, 3.0)),
                      tau_f=50.0, tau_b=50.0, escape_radius=6.0, overlay="slow"),
    "duffing-conservative": Figure("field", "duffing", {"alpha": 1.0, "beta": 1.0, "delta": 0.0,
                                                        "gamma": 0.0, "omega": 1.2},
                                   ((-1.6, 1.6), (-1.0, 1.0)), tau_f=20.0, tau_b=20.0),
    "duffing-damped": Figure("field", "duffing", {"alpha": 1.0, "beta": 1.0, "delta": 0.3,
                                                  "gamma": 0.0, "omega": 1.2},
                             ((-1.6, 1.6), (-1.0, 1.0)), tau_f=25.0, tau_b=25.0),
    "duffing-forced": Figure("strobe", "duffing", {"alpha": 1.0, "beta": 1.0, "delta": 0.3,
                                                   "gamma": 0.5, "omega": 1.2},
                             ((-2.0, 2.0), (-1.5, 1.5)), tau_f=20.0, tau_b=20.0,
                             layer="backward",
                             strobe={"ic": (1.0, 0.0), "n_periods": 15000, "n_skip": 100}),
    "duffing-ueda": Figure("strobe", "duffing", {"alpha": 0.0, "beta": 1.0, "delta": 0.05,
                                                 "gamma": 7.5, "omega": 1.0},
                           ((1.0, 4.0), (-5.0, 6.0)), tau_f=20.0, tau_b=20.0, layer="backward",
                           strobe={"ic": (1.0, 0.0), "n_periods": 15000, "n_skip": 100}),
    **{f"dwell-{s}-gamma{g}": Figure("section", "double_well_2dof", _dw(float(g)), _DW[s],
                                     tau_f=15.0, tau_b=15.0, layer="forward",
                                     operator="laplacian", section=s)
       for s in ("sigma1", "sigma2") for g in ("0.1", "0.25", "1")},
    "dwell-sigma3": Figure("section", "double_well_2dof", _dw(0.25), _DW["sigma3"],
                           tau_f=15.0, tau_b=15.0, layer="forward", section="sigma3"),
}


def figure_grid(fig: Figure, resolution: int | None = None) -> GridSpec2D:
    n = int(resolution or DEFAULT_RESOLUTION)
    if fig.kind == "section":
        from .hamsec import SECTION_AXES
        axes = SECTION_AXES[fig.section]
    else:
        from .systems import COORD_NAMES
        axes = COORD_NAMES[fig.system][:2]
    return GridSpec2D(axes, fig.ranges, (n, n))


def figure_ldconfig(fig: Figure) -> LDConfig:
    esc = EscapeRegion() if fig.escape_radius is None else EscapeRegion.circle(fig.escape_radius)
    return LDConfig(fig.p, fig.tau_f, fig.tau_b, esc)


def figure_record(fig_id: str) -> dict:
    """Full parameter set of a target, as embedded in output metadata."""
    fig = FIGURES[fig_id]
    rec = {"id": fig_id, "kind": fig.kind, "system": fig.system, "params": dict(fig.params),
           "p": fig.p, "tau_f": fig.tau_f, "tau_b": fig.tau_b,
           "escape_radius": fig.escape_radius, "ranges": [list(r) for r in fig.ranges],
           "layer": fig.layer, "operator": fig.operator}
    if fig.section:
        rec.update(section=fig.section, H0=fig.H0, x_value=fig.x_value)
    if fig.strobe:
        rec["strobe"] = {k: list(v) if isinstance(v, tuple) else v for k, v in fig.strobe.items()}
    return rec


def _overlays(fig: Figure, spec: SystemSpec, grid: GridSpec2D, section=None):
    ovs = []
    if fig.overlay == "slow":
        xs = np.linspace(*grid.ranges[0], 2001)
        ovs.append(Overlay(np.column_stack([xs, slow_manifold_curve(spec, xs)]), "curve",
                           "magenta"))
    if section is not None:
        ovs.append(Overlay(energy_boundary(spec.params, section), "curve", "magenta"))
    elif spec.dim == 2:
        ovs.extend(equilibria_overlays(spec))
    return tuple(ovs)


def run_figure(fig_id: str, out_dir, resolution: int | None = None, workers: int | None = None,
               backend: str | None = None, intcfg: IntegratorConfig | None = None,
               png: bool = True) -> dict[str, Path]:
    """Compute a target's artifacts into ``out_dir``; returns written paths."""
    if fig_id not in FIGURES:
        raise KeyError(f"unknown figure id {fig_id!r}; known: {sorted(FIGURES)}")
    fig = FIGURES[fig_id]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = SystemSpec(fig.system, fig.params)
    grid = figure_grid(fig, resolution)
    ldcfg = figure_ldconfig(fig)
    intcfg = intcfg or IntegratorConfig()
    section = None
    if fig.kind == "section":
        section = SectionSpec(fig.section, fig.H0, fig.x_value)
        fld = compute_section_ld_field(spec.params, section, grid, ldcfg, intcfg, workers,
                                       backend)
    else:
        fld = compute_ld_field(spec, grid, ldcfg, intcfg, workers, backend)
    fld.meta["repro"] = figure_record(fig_id)
    written = {}
    written["field"] = out / f"{fig_id}.ldf"
    write_field(fld, written["field"])
    ridges = field_ridges(fld, fig.layer, fig.operator, 95.0)
    written["ridges"] = out / f"{fig_id}_ridges.csv"
    export_csv(ridges, written["ridges"])
    if fig.kind == "strobe":
        s = fig.strobe
        period = 2 * math.pi / spec.params["omega"]
        res = strobe_map(spec, s["ic"], 0.0, period, s["n_periods"], s["n_skip"], intcfg,
                         backend)
        written["strobe"] = out / f"{fig_id}_strobe.csv"
        export_points_csv(written["strobe"], spec.coord_names, res.points)
    if fig_id == "dwell-sigma3":
        probes = [(0.0, 0.0), (0.3, 0.3), (0.45, 0.0)]
        seeds = [seed_on_section(spec.params, section, q) for q in probes]
        X = np.array([sd.coords for sd in seeds if sd is not None])
        code, ts, cr, fl = classify_many(spec.params, X, intcfg=intcfg, workers=workers,
                                         backend=backend)
        written["labels"] = out / f"{fig_id}_probes.csv"
        export_points_csv(written["labels"], list(grid.axis_names),
                          np.array([q for q, sd in zip(probes, seeds) if sd is not None]),
                          {"label": [LABELS[int(c)] for c in code],
                           "settle_time": [format(t, ".17g") for t in ts],
                           "crossings": [int(c) for c in cr]})
    if png:
        cfg = RenderConfig(layer=fig.layer, overlays=_overlays(fig, spec, grid, section))
        written["png"] = out / f"{fig_id}.png"
        render_png(fld, cfg, written["png"])
    return written


def override_resolution(fig_id: str, resolution: int) -> GridSpec2D:
    return figure_grid(FIGURES[fig_id], resolution)


def with_params(fig_id: str, **changes) -> Figure:
    return replace(FIGURES[fig_id], **changes)
