"""Damped two-degree-of-freedom double well: Poincare-section seeding, section
LD fields and reactive/non-reactive classification.

State order is ``(x, y, px, py)``. Sections, with the positive-momentum
branch used to complete each seed to energy ``H0``::

    sigma1: y = 0,    grid (x, px), solve py > 0
    sigma2: py = 0,   grid (x, y),  solve px > 0
    sigma3: x = x_value (default -0.4), grid (y, py), solve px > 0
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import default_workers, resolve_backend
from ._kernels_nb import FAILED, SETTLED
from .extract import closed_loop, field_ridges
from .integrate import IntegratorConfig, solve_batch
from .ldfield import CHUNK, GridSpec2D, LDConfig, LDField, _run_chunks, field_meta, sweep_nodes
from .systems import ConfigurationError, StateVec, SystemSpec, as_state

SECTION_AXES = {
    "sigma1": ("x", "px"),
    "sigma2": ("x", "y"),
    "sigma3": ("y", "py"),
}

EPS_SETTLE = 1e-3
T_MAX = 200.0


def _params(spec_or_params) -> dict:
    if isinstance(spec_or_params, SystemSpec):
        if spec_or_params.id != "double_well_2dof":
            raise ConfigurationError("section tools require the double_well_2dof system")
        return dict(spec_or_params.params)
    return dict(SystemSpec("double_well_2dof", dict(spec_or_params)).params)


def potential(params, x, y):
    P = _params(params)
    return P["a"] / 4.0 * x ** 4 - P["b"] / 2.0 * x ** 2 + P["omega"] ** 2 / 2.0 * y ** 2


def hamiltonian_energy(params, state) -> float:
    P = _params(params)
    x, y, px, py = as_state(state).coords
    return px * px / (2 * P["m1"]) + py * py / (2 * P["m2"]) + potential(P, x, y)


def hamiltonian_energy_many(params, X: np.ndarray) -> np.ndarray:
    P = _params(params)
    X = np.asarray(X, dtype=np.float64)
    return (X[..., 2] ** 2 / (2 * P["m1"]) + X[..., 3] ** 2 / (2 * P["m2"])
            + potential(P, X[..., 0], X[..., 1]))


@dataclass(frozen=True)
class SectionSpec:
    id: str = "sigma2"
    H0: float = 0.05
    x_value: float = -0.4
    sign_convention: int = 1

    def __post_init__(self):
        if self.id not in SECTION_AXES:
            raise ConfigurationError(f"section id must be one of {sorted(SECTION_AXES)}")
        if self.sign_convention not in (1, -1):
            raise ConfigurationError("sign_convention must be +1 or -1")

    @property
    def axes(self) -> tuple[str, str]:
        return SECTION_AXES[self.id]

    def validate(self, params) -> None:
        if self.id == "sigma3":
            P = _params(params)
            if potential(P, self.x_value, 0.0) > self.H0:
                raise ConfigurationError(
                    f"x = {self.x_value} is energetically forbidden at H0 = {self.H0}")

    def to_dict(self) -> dict:
        return {"id": self.id, "H0": self.H0, "x_value": self.x_value,
                "sign_convention": self.sign_convention}


def _lift(P, section: SectionSpec, a, b):
    """Vectorized completion of grid pairs ``(a, b)``; returns states and a
    validity mask (false where the momentum discriminant is negative)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s = float(section.sign_convention)
    X = np.zeros(a.shape + (4,))
    if section.id == "sigma1":
        x, px = a, b
        rest = section.H0 - px * px / (2 * P["m1"]) - potential(P, x, 0.0)
        X[..., 0], X[..., 2] = x, px
        mom, mass, slot = rest, P["m2"], 3
    elif section.id == "sigma2":
        x, y = a, b
        rest = section.H0 - potential(P, x, y)
        X[..., 0], X[..., 1] = x, y
        mom, mass, slot = rest, P["m1"], 2
    else:
        y, py = a, b
        x = section.x_value
        rest = section.H0 - py * py / (2 * P["m2"]) - potential(P, x, y)
        X[..., 0], X[..., 1], X[..., 3] = x, y, py
        mom, mass, slot = rest, P["m1"], 2
    ok = mom >= 0.0
    X[..., slot] = s * np.sqrt(np.where(ok, 2.0 * mass * mom, 0.0))
    return X, ok


def seed_on_section(params, section: SectionSpec, grid_point) -> StateVec | None:
    """Complete a section grid point to a 4-D state on the energy shell ``H0``;
    ``None`` when the point is energetically forbidden."""
    P = _params(params)
    a, b = grid_point
    X, ok = _lift(P, section, a, b)
    if not bool(ok):
        return None
    return StateVec(X, 0.0)


def energy_boundary(params, section: SectionSpec, n: int = 721) -> np.ndarray:
    """Closed zero-momentum contour of ``H0`` in the section's grid coordinates.

    Every allowed region here is star-shaped about the grid origin, so the
    contour is found by bisection along ``n`` rays.
    """
    P = _params(params)
    th = np.linspace(0.0, 2 * np.pi, n)
    c, s = np.cos(th), np.sin(th)
    if not _lift(P, section, 0.0, 0.0)[1]:
        return np.zeros((0, 2))
    lo = np.zeros(n)
    hi = np.ones(n)
    while True:
        grow = _lift(P, section, hi * c, hi * s)[1]
        if not grow.any():
            break
        hi = np.where(grow, 2 * hi, hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ok = _lift(P, section, mid * c, mid * s)[1]
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return np.column_stack([lo * c, lo * s])


def _section_spec(params) -> SystemSpec:
    return SystemSpec("double_well_2dof", _params(params))


def compute_section_ld_field(params, section: SectionSpec, grid: GridSpec2D, ldcfg: LDConfig,
                             intcfg: IntegratorConfig | None = None, workers: int | None = None,
                             backend: str | None = None) -> LDField:
    """LD layers on a Poincare section; forbidden nodes are masked out."""
    spec = _section_spec(params)
    section.validate(spec.params)
    if tuple(grid.axis_names) != section.axes:
        raise ConfigurationError(f"{section.id} grids use axes {section.axes}")
    intcfg = intcfg or IntegratorConfig()
    backend = resolve_backend(backend)
    A, B = grid.mesh()
    X, ok = _lift(spec.params, section, A, B)
    X0 = X.reshape(-1, 4)
    valid = ok.ravel()
    fwd, bwd, esc, fail = sweep_nodes(spec, X0, grid.t0, ldcfg, intcfg, active=valid,
                                      workers=workers, backend=backend)
    shape = grid.shape
    forward = fwd.reshape(shape)
    backward = bwd.reshape(shape)
    meta = field_meta(spec, ldcfg, intcfg, backend, n_failed=int(fail.sum()),
                      n_escaped=int(esc.sum()), section=section.to_dict(),
                      n_forbidden=int((~valid).sum()))
    return LDField(grid, forward, backward, forward + backward, esc.reshape(shape),
                   ok.reshape(shape), meta)


# Invariant subspace {y = py = 0} of the x-oscillation; on sigma2 it is the
# line y = 0 and carries its own ridge, unrelated to the transition tube.
_INVARIANT_AXIS = {"sigma2": 1}


def transition_loop(fld: LDField, layer: str = "forward", operator: str = "laplacian",
                    threshold_percentile: float = 95.0, n_bins: int = 180) -> np.ndarray:
    """Closed polygon tracing the transition-tube ridge on a section field.

    Ridge nodes are binned by angle about the saddle's projection ``(0, 0)``;
    each bin keeps its strongest node. On sigma2 the nodes within one cell of
    the invariant line ``y = 0`` are dropped first.
    """
    sec = fld.meta.get("section", {}).get("id")
    rs = field_ridges(fld, layer, operator, threshold_percentile)
    keep = np.ones(len(rs), dtype=bool)
    if sec in _INVARIANT_AXIS:
        k = _INVARIANT_AXIS[sec]
        keep = np.abs(rs.xy[:, k]) > 1.01 * fld.grid.spacing[k]
    return closed_loop(rs.xy[keep], (0.0, 0.0), n_bins, rs.values[keep])


@dataclass(frozen=True)
class TransitionLabel:
    label: str
    settle_time: float | None
    crossings: int
    failed: bool = False


def _wells(P) -> np.ndarray:
    w = math.sqrt(P["b"] / P["a"])
    return np.array([[w, 0.0, 0.0, 0.0], [-w, 0.0, 0.0, 0.0]])


def classify_many(params, X0, t_max: float = T_MAX, intcfg: IntegratorConfig | None = None,
                  eps_settle: float = EPS_SETTLE, workers: int | None = None,
                  backend: str | None = None):
    """Vectorized :func:`classify_transition`; returns label codes
    (1 reactive, 0 nonreactive, -1 asymptotic_or_timeout), settle times
    (NaN when unsettled), crossing counts and failure flags."""
    spec = _section_spec(params)
    backend = resolve_backend(backend)
    X0 = np.ascontiguousarray(np.atleast_2d(X0), dtype=np.float64)
    N = X0.shape[0]
    code = np.full(N, -1, dtype=np.int64)
    tset = np.full(N, np.nan)
    cross = np.zeros(N, dtype=np.int64)
    fail = np.zeros(N, dtype=bool)
    tg = _wells(spec.params)
    workers = default_workers() if workers is None else workers

    def work(a, b):
        r = solve_batch(spec, X0[a:b], 0.0, t_max, "forward", cfg=intcfg, targets=tg,
                        target_radius=eps_settle, backend=backend)
        settled = r.status == SETTLED
        code[a:b] = np.where(settled, np.where(r.target == 0, 1, 0), -1)
        tset[a:b] = np.where(settled, r.stop_u, np.nan)
        cross[a:b] = r.crossings
        fail[a:b] = r.status == FAILED

    _run_chunks(work, N, CHUNK[backend], workers)
    return code, tset, cross, fail


LABELS = {1: "reactive", 0: "nonreactive", -1: "asymptotic_or_timeout"}


def classify_transition(params, state, t_max: float = T_MAX,
                        intcfg: IntegratorConfig | None = None,
                        eps_settle: float = EPS_SETTLE, backend: str | None = None
                        ) -> TransitionLabel:
    """Reactive if the forward trajectory settles in the right well, non-reactive
    if it settles in the left well, otherwise ``asymptotic_or_timeout``."""
    if t_max <= 0:
        raise ConfigurationError("t_max must be positive")
    code, ts, cr, fl = classify_many(params, as_state(state).coords[None, :], t_max, intcfg,
                                     eps_settle, workers=1, backend=backend)
    t = None if np.isnan(ts[0]) else float(ts[0])
    return TransitionLabel(LABELS[int(code[0])], t, int(cr[0]), bool(fl[0]))
