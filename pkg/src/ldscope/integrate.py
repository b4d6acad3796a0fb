"""Trajectory integration, LD accumulation, escape handling and strobe maps."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import _kernels_nb as _nb
from . import _kernels_np as _np
from ._accel import resolve_backend
from .systems import ConfigurationError, StateVec, SystemSpec, as_state

METHODS = {"rk45_adaptive": _nb.DOPRI5, "rk4_fixed": _nb.RK4}


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    max_step: float = 0.1
    method: str = "rk45_adaptive"
    fixed_step: float = 0.01
    max_steps: int = 50_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {sorted(METHODS)}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigurationError("tolerances must be positive")
        if not self.max_step > 0:
            raise ConfigurationError("max_step must be positive")
        if self.method == "rk4_fixed" and not self.fixed_step > 0:
            raise ConfigurationError("fixed_step must be positive for rk4_fixed")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EscapeRegion:
    """Ball outside which integration and LD accumulation stop."""

    center: tuple[float, ...] = (0.0, 0.0)
    radius: float = math.inf
    enabled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.enabled and not (self.radius > 0 and math.isfinite(self.radius)):
            raise ConfigurationError("escape radius must be positive and finite")

    @classmethod
    def circle(cls, radius: float, center: Sequence[float] = (0.0, 0.0)) -> "EscapeRegion":
        return cls(tuple(center), float(radius), True)

    def center_for(self, dim: int) -> np.ndarray:
        if len(self.center) == dim:
            return np.array(self.center, dtype=np.float64)
        if not any(self.center):
            return np.zeros(dim)
        raise ConfigurationError(f"escape center must have {dim} coordinates")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center"] = list(self.center)
        if not math.isfinite(d["radius"]):
            d["radius"] = None
        return d

    @classmethod
    def from_dict(cls, d) -> "EscapeRegion":
        r = d.get("radius")
        return cls(tuple(d.get("center", (0.0, 0.0))), math.inf if r is None else float(r),
                   bool(d.get("enabled", False)))


NO_ESCAPE = EscapeRegion()


@dataclass(frozen=True)
class LDAccumResult:
    ld_value: float
    escaped: bool
    stop_time: float
    final_state: StateVec
    failed: bool = False


@dataclass(frozen=True)
class Trajectory:
    """States sampled at the requested times reached before stopping."""

    t: np.ndarray
    states: np.ndarray
    stop_time: float
    final_state: StateVec
    escaped: bool
    failed: bool


@dataclass(frozen=True)
class BatchResult:
    status: np.ndarray
    stop_u: np.ndarray
    final: np.ndarray
    ld: np.ndarray | None
    target: np.ndarray
    crossings: np.ndarray


def _direction_sign(direction) -> float:
    if direction in ("forward", 1, 1.0):
        return 1.0
    if direction in ("backward", -1, -1.0):
        return -1.0
    raise ConfigurationError(f"direction must be 'forward' or 'backward', got {direction!r}")


def solve_batch(spec: SystemSpec, X0, t0: float, span: float, direction="forward", *,
                p: float = 0.5, with_ld: bool = False, cfg: IntegratorConfig | None = None,
                escape: EscapeRegion | None = None, targets=None, target_radius: float = 0.0,
                backend: str | None = None) -> BatchResult:
    """Integrate many initial conditions over ``span`` time units.

    Node results are independent of one another, so any partition of ``X0``
    gives identical per-node output.
    """
    cfg = cfg or IntegratorConfig()
    escape = escape or NO_ESCAPE
    sgn = _direction_sign(direction)
    X0 = np.ascontiguousarray(np.atleast_2d(np.asarray(X0, dtype=np.float64)))
    n = spec.dim
    if X0.shape[1] != n:
        raise ConfigurationError(f"{spec.id} needs {n}-dimensional initial conditions")
    if span < 0:
        raise ConfigurationError("integration span must be >= 0")
    tgt = np.zeros((0, n)) if targets is None else np.ascontiguousarray(targets, dtype=np.float64)
    esc_c = escape.center_for(n)
    esc_r = float(escape.radius) if escape.enabled else 1.0
    method = METHODS[cfg.method]
    args = (spec.sid, spec.packed(), n, X0, float(t0), sgn, float(span), float(p),
            bool(with_ld), float(cfg.rel_tol), float(cfg.abs_tol), float(cfg.max_step),
            method, float(cfg.fixed_step), bool(escape.enabled), esc_c, esc_r, tgt,
            float(target_radius), int(cfg.max_steps))
    N = X0.shape[0]
    m = n + 1 if with_ld else n
    if resolve_backend(backend) == "numba":
        status = np.empty(N, dtype=np.int64)
        u = np.empty(N)
        Y = np.empty((N, m))
        hit = np.empty(N, dtype=np.int64)
        cross = np.empty(N, dtype=np.int64)
        _nb.solve_batch(*args, status, u, Y, hit, cross)
    else:
        status, u, Y, hit, cross, _, _ = _np.solve_batch(*args)
    return BatchResult(status, u, Y[:, :n], Y[:, n] if with_ld else None, hit, cross)


def _solve_sampled(spec, x0, t0, span, sgn, cfg, escape, samp_u, backend):
    n = spec.dim
    esc_c = escape.center_for(n)
    esc_r = float(escape.radius) if escape.enabled else 1.0
    method = METHODS[cfg.method]
    samp_u = np.ascontiguousarray(samp_u, dtype=np.float64)
    if resolve_backend(backend) == "numba":
        samples = np.zeros((samp_u.shape[0], n))
        y = np.empty(n)
        status, u, ns, _, _ = _nb.solve_node(
            spec.sid, spec.packed(), n, np.ascontiguousarray(x0, dtype=np.float64), float(t0),
            sgn, float(span), 0.5, False, float(cfg.rel_tol), float(cfg.abs_tol),
            float(cfg.max_step), method, float(cfg.fixed_step), bool(escape.enabled), esc_c,
            esc_r, np.zeros((0, n)), 0.0, samp_u, samples, int(cfg.max_steps), y)
        return int(status), float(u), y, samples[:ns]
    status, u, Y, _, _, samples, ns = _np.solve_batch(
        spec.sid, spec.packed(), n, np.asarray(x0, dtype=np.float64)[None, :], float(t0), sgn,
        float(span), 0.5, False, float(cfg.rel_tol), float(cfg.abs_tol), float(cfg.max_step),
        method, float(cfg.fixed_step), bool(escape.enabled), esc_c, esc_r, np.zeros((0, n)),
        0.0, int(cfg.max_steps), samp_u)
    return int(status[0]), float(u[0]), Y[0], samples[0, : ns[0]]


def integrate_trajectory(spec: SystemSpec, ic, t0: float, t1: float,
                         cfg: IntegratorConfig | None = None,
                         escape: EscapeRegion | None = None,
                         t_eval: Sequence[float] | None = None,
                         backend: str | None = None) -> Trajectory:
    """Integrate from ``t0`` to ``t1`` (either direction), landing exactly on
    each time in ``t_eval`` (default: just ``t1``)."""
    cfg = cfg or IntegratorConfig()
    escape = escape or NO_ESCAPE
    x0 = as_state(ic).coords
    if x0.shape[0] != spec.dim:
        raise ConfigurationError(f"{spec.id} needs a {spec.dim}-dimensional state")
    if t1 == t0:
        return Trajectory(np.empty(0), np.empty((0, spec.dim)), float(t0),
                          StateVec(x0, t0), False, False)
    sgn = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    if t_eval is None:
        t_eval = [t1]
    t_eval = np.asarray(t_eval, dtype=np.float64)
    samp_u = sgn * (t_eval - t0)
    if np.any(samp_u < 0) or np.any(samp_u > span) or np.any(np.diff(samp_u) < 0):
        raise ConfigurationError("t_eval must be monotone and lie within [t0, t1]")
    status, u, y, samples = _solve_sampled(spec, x0, t0, span, sgn, cfg, escape, samp_u,
                                           backend)
    t_stop = t0 + sgn * u
    return Trajectory(t_eval[: samples.shape[0]].copy(), samples, t_stop,
                      StateVec(y[: spec.dim], t_stop), status == _nb.ESCAPED or
                      status == _nb.FAILED, status == _nb.FAILED)


def accumulate_ld(spec: SystemSpec, ic, t0: float, tau: float, direction, p: float = 0.5,
                  cfg: IntegratorConfig | None = None, escape: EscapeRegion | None = None,
                  backend: str | None = None) -> LDAccumResult:
    """p-norm LD of one trajectory over ``[t0, t0+tau]`` or ``[t0-tau, t0]``.

    Accumulation freezes at the escape event. A step-size underflow (blow-up
    with escape disabled) stops at the last accepted step and is reported as
    escaped with ``failed=True``.
    """
    if tau < 0:
        raise ConfigurationError("tau must be >= 0")
    if not 0 < p <= 1:
        raise ConfigurationError("p must lie in (0, 1]")
    sgn = _direction_sign(direction)
    x0 = as_state(ic).coords
    r = solve_batch(spec, x0[None, :], t0, tau, direction, p=p, with_ld=True, cfg=cfg,
                    escape=escape, backend=backend)
    st = int(r.status[0])
    t_stop = t0 + sgn * float(r.stop_u[0])
    return LDAccumResult(float(r.ld[0]), st in (_nb.ESCAPED, _nb.FAILED), t_stop,
                         StateVec(r.final[0], t_stop), st == _nb.FAILED)


@dataclass(frozen=True)
class StrobeResult:
    times: np.ndarray
    points: np.ndarray
    failed: bool

    def __len__(self):
        return self.points.shape[0]


def strobe_map(spec: SystemSpec, ic, t0: float, period: float, n_periods: int, n_skip: int = 0,
               cfg: IntegratorConfig | None = None, backend: str | None = None) -> StrobeResult:
    """States at ``t0 + k*period`` for ``k = n_skip..n_periods``."""
    if not period > 0:
        raise ConfigurationError("period must be positive")
    if not 0 <= n_skip <= n_periods:
        raise ConfigurationError("need 0 <= n_skip <= n_periods")
    k = np.arange(n_skip, n_periods + 1, dtype=np.float64)
    times = t0 + k * period
    if n_periods == 0:
        x0 = as_state(ic).coords
        return StrobeResult(times, x0[None, :].copy(), False)
    traj = integrate_trajectory(spec, ic, t0, t0 + n_periods * period, cfg, None, times,
                                backend)
    return StrobeResult(traj.t, traj.states, traj.failed)
