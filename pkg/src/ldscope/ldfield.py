"""Grid sweeps of forward, backward and total LD layers."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from . import __version__
from ._accel import default_workers, resolve_backend
from ._kernels_nb import FAILED, ESCAPED
from .integrate import EscapeRegion, IntegratorConfig, NO_ESCAPE, solve_batch
from .systems import ConfigurationError, SystemSpec, balance_integration_times

CHUNK = {"numba": 512, "numpy": 8192}


def _axis(lo: float, hi: float, n: int) -> np.ndarray:
    """Evenly spaced nodes with both endpoints exact.

    The upper half is measured back from ``hi`` so a range symmetric about
    zero yields nodes that are exact negatives of each other.
    """
    k = np.arange(n)
    w = hi - lo
    out = lo + w * (k / (n - 1))
    up = k >= n / 2
    out[up] = hi - w * ((n - 1 - k[up]) / (n - 1))
    return out


@dataclass(frozen=True)
class GridSpec2D:
    """Node-at-endpoint grid over two phase-space coordinates.

    Layers built on this grid have shape ``(resolution[1], resolution[0])``:
    row ``j`` follows the second axis, column ``i`` the first.
    """

    axis_names: tuple[str, str] = ("x", "y")
    ranges: tuple[tuple[float, float], tuple[float, float]] = ((-1.0, 1.0), (-1.0, 1.0))
    resolution: tuple[int, int] = (501, 501)
    fixed_coords: Mapping[str, float] = field(default_factory=dict)
    t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "axis_names", tuple(self.axis_names))
        object.__setattr__(self, "ranges", tuple((float(a), float(b)) for a, b in self.ranges))
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        object.__setattr__(self, "fixed_coords", {k: float(v) for k, v in self.fixed_coords.items()})
        if len(self.axis_names) != 2 or self.axis_names[0] == self.axis_names[1]:
            raise ConfigurationError("grid needs two distinct axis names")
        for lo, hi in self.ranges:
            if not lo < hi:
                raise ConfigurationError(f"grid range [{lo}, {hi}] must have lo < hi")
        if min(self.resolution) < 2:
            raise ConfigurationError("grid resolution must be >= 2 on both axes")

    @property
    def shape(self) -> tuple[int, int]:
        return self.resolution[1], self.resolution[0]

    @property
    def spacing(self) -> tuple[float, float]:
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.ranges, self.resolution))

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(_axis(lo, hi, n) for (lo, hi), n in zip(self.ranges, self.resolution))

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = self.axes()
        return np.meshgrid(xs, ys, indexing="xy")

    def check_against(self, spec: SystemSpec) -> None:
        names = spec.coord_names
        covered = set(self.axis_names) | set(self.fixed_coords)
        unknown = covered - set(names)
        if unknown:
            raise ConfigurationError(f"{spec.id} has no coordinate(s) {sorted(unknown)}")
        if set(self.axis_names) & set(self.fixed_coords):
            raise ConfigurationError("a coordinate cannot be both a grid axis and fixed")
        missing = set(names) - covered
        if missing:
            raise ConfigurationError(
                f"grid leaves {sorted(missing)} of {spec.id} unspecified; set them in fixed_coords")

    def nodes(self, spec: SystemSpec) -> np.ndarray:
        """Initial conditions in row-major layer order, shape ``(ny*nx, dim)``."""
        self.check_against(spec)
        X, Y = self.mesh()
        out = np.zeros((X.size, spec.dim))
        names = spec.coord_names
        out[:, names.index(self.axis_names[0])] = X.ravel()
        out[:, names.index(self.axis_names[1])] = Y.ravel()
        for k, v in self.fixed_coords.items():
            out[:, names.index(k)] = v
        return out

    def to_dict(self) -> dict:
        return {"axis_names": list(self.axis_names), "ranges": [list(r) for r in self.ranges],
                "resolution": list(self.resolution), "fixed_coords": dict(self.fixed_coords),
                "t0": self.t0}

    @classmethod
    def from_dict(cls, d) -> "GridSpec2D":
        return cls(tuple(d["axis_names"]), tuple(tuple(r) for r in d["ranges"]),
                   tuple(d["resolution"]), dict(d.get("fixed_coords", {})), float(d.get("t0", 0.0)))


@dataclass(frozen=True)
class LDConfig:
    p: float = 0.5
    tau_f: float = 10.0
    tau_b: float = 10.0
    escape: EscapeRegion = NO_ESCAPE
    auto_balance: bool = False
    balance_rates: tuple[float, float] | None = None

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ConfigurationError("p must lie in (0, 1]")
        if self.tau_f < 0 or self.tau_b < 0:
            raise ConfigurationError("integration horizons must be >= 0")
        if not (self.tau_f > 0 or self.tau_b > 0 or self.auto_balance):
            raise ConfigurationError("at least one of tau_f, tau_b must be positive")

    def resolved(self, spec: SystemSpec) -> "LDConfig":
        """Apply ``auto_balance``: derive ``tau_b`` from the saddle rates."""
        if not self.auto_balance:
            return self
        if self.balance_rates is not None:
            lam, mu = self.balance_rates
        elif spec.id == "linear_saddle":
            lam, mu = spec.params["lam"], spec.params["mu"]
        else:
            raise ConfigurationError(
                f"auto_balance for {spec.id} needs explicit balance_rates (expansion, contraction)")
        tau_b = balance_integration_times(lam, mu, self.p, self.tau_f)
        return replace(self, tau_b=tau_b, auto_balance=False, balance_rates=(lam, mu))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["escape"] = self.escape.to_dict()
        d["balance_rates"] = None if self.balance_rates is None else list(self.balance_rates)
        return d

    @classmethod
    def from_dict(cls, d) -> "LDConfig":
        br = d.get("balance_rates")
        return cls(float(d["p"]), float(d["tau_f"]), float(d["tau_b"]),
                   EscapeRegion.from_dict(d.get("escape", {})), bool(d.get("auto_balance", False)),
                   None if br is None else tuple(br))


@dataclass
class LDField:
    grid: GridSpec2D
    forward: np.ndarray
    backward: np.ndarray
    total: np.ndarray
    escape_mask: np.ndarray
    valid_mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.valid_mask is None:
            self.valid_mask = np.ones(self.grid.shape, dtype=bool)
        for name in ("forward", "backward", "total", "escape_mask", "valid_mask"):
            if getattr(self, name).shape != self.grid.shape:
                raise ValueError(f"layer {name} has shape {getattr(self, name).shape}, "
                                 f"grid expects {self.grid.shape}")

    def layer(self, name: str) -> np.ndarray:
        if name not in ("forward", "backward", "total"):
            raise KeyError(name)
        return getattr(self, name)

    @property
    def spec(self) -> SystemSpec | None:
        s = self.meta.get("system")
        return None if s is None else SystemSpec.from_dict(s)


def _run_chunks(fn, n_nodes: int, chunk: int, workers: int):
    bounds = [(a, min(a + chunk, n_nodes)) for a in range(0, n_nodes, chunk)]
    if workers <= 1 or len(bounds) <= 1:
        for b in bounds:
            fn(*b)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for _ in pool.map(lambda b: fn(*b), bounds):
            pass


def sweep_nodes(spec: SystemSpec, X0: np.ndarray, t0: float, ldcfg: LDConfig,
                intcfg: IntegratorConfig, active: np.ndarray | None = None,
                workers: int | None = None, backend: str | None = None):
    """Forward and backward LD for each row of ``X0``.

    Returns ``(forward, backward, escaped, failed)`` flat arrays. Rows with
    ``active`` false are skipped and left at zero.
    """
    backend = resolve_backend(backend)
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    N = X0.shape[0]
    fwd = np.zeros(N)
    bwd = np.zeros(N)
    esc = np.zeros(N, dtype=bool)
    fail = np.zeros(N, dtype=bool)
    idx = np.arange(N) if active is None else np.nonzero(active)[0]
    pts = np.ascontiguousarray(X0[idx])

    def work(a, b):
        sel = idx[a:b]
        for tau, direction, out in ((ldcfg.tau_f, "forward", fwd), (ldcfg.tau_b, "backward", bwd)):
            if tau <= 0:
                continue
            r = solve_batch(spec, pts[a:b], t0, tau, direction, p=ldcfg.p, with_ld=True,
                            cfg=intcfg, escape=ldcfg.escape, backend=backend)
            out[sel] = r.ld
            esc[sel] |= (r.status == ESCAPED) | (r.status == FAILED)
            fail[sel] |= r.status == FAILED

    _run_chunks(work, idx.size, CHUNK[backend], workers)
    return fwd, bwd, esc, fail


def field_meta(spec, ldcfg, intcfg, backend, **extra) -> dict:
    meta = {
        "system": spec.to_dict(),
        "ld_config": ldcfg.to_dict(),
        "integrator": intcfg.to_dict(),
        "engine_version": __version__,
        "backend": backend,
        "normalization": "none",
    }
    meta.update(extra)
    return meta


def compute_ld_field(spec: SystemSpec, grid: GridSpec2D, ldcfg: LDConfig,
                     intcfg: IntegratorConfig | None = None, workers: int | None = None,
                     backend: str | None = None) -> LDField:
    """Forward, backward and total LD over every grid node.

    Output is bit-identical for any ``workers`` value: each node is integrated
    on its own and written to its own slot.
    """
    intcfg = intcfg or IntegratorConfig()
    ldcfg = ldcfg.resolved(spec)
    backend = resolve_backend(backend)
    X0 = grid.nodes(spec)
    fwd, bwd, esc, fail = sweep_nodes(spec, X0, grid.t0, ldcfg, intcfg, workers=workers,
                                      backend=backend)
    shape = grid.shape
    forward = fwd.reshape(shape)
    backward = bwd.reshape(shape)
    meta = field_meta(spec, ldcfg, intcfg, backend, n_failed=int(fail.sum()),
                      n_escaped=int(esc.sum()))
    return LDField(grid, forward, backward, forward + backward, esc.reshape(shape),
                   np.ones(shape, dtype=bool), meta)


def _minmax(layer: np.ndarray, valid: np.ndarray):
    vals = layer[valid]
    if vals.size == 0:
        return np.zeros_like(layer), True
    lo, hi = vals.min(), vals.max()
    if not hi > lo:
        return np.zeros_like(layer), True
    out = (layer - lo) / (hi - lo)
    out[valid] = np.clip(out[valid], 0.0, 1.0)
    out[~valid] = 0.0
    return out, False


def normalize_field(fld: LDField, mode: str = "minmax") -> LDField:
    """Return a copy with each layer mapped independently onto [0, 1]."""
    if mode == "none":
        return fld
    if mode != "minmax":
        raise ConfigurationError(f"unknown normalization mode {mode!r}")
    meta = dict(fld.meta)
    layers = {}
    constant = []
    for name in ("forward", "backward", "total"):
        layers[name], flat = _minmax(fld.layer(name), fld.valid_mask)
        if flat:
            constant.append(name)
    if constant:
        warnings.warn(f"constant layer(s) {constant} normalized to zeros", RuntimeWarning)
        meta["constant_layers"] = constant
    meta["normalization"] = "minmax"
    return LDField(fld.grid, layers["forward"], layers["backward"], layers["total"],
                   fld.escape_mask.copy(), fld.valid_mask.copy(), meta)
