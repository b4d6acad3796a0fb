"""Built-in dynamical systems, their Jacobians and closed-form oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Mapping, Sequence

import numpy as np

from . import _fields as F


class ConfigurationError(ValueError):
    """Invalid system id, parameter set or run configuration."""


class BlowUpError(ArithmeticError):
    """Requested time lies beyond a finite-time blow-up of the solution."""


SYSTEM_IDS = {
    "linear_saddle": F.LINEAR_SADDLE,
    "nonlinear_saddle": F.NONLINEAR_SADDLE,
    "hopf": F.HOPF,
    "vanderpol": F.VANDERPOL,
    "bead_hoop": F.BEAD_HOOP,
    "vdp_lienard": F.VDP_LIENARD,
    "duffing": F.DUFFING,
    "double_well_2dof": F.DOUBLE_WELL,
}

COORD_NAMES = {
    "linear_saddle": ("x", "y"),
    "nonlinear_saddle": ("x", "y"),
    "hopf": ("x", "y"),
    "vanderpol": ("x", "y"),
    "bead_hoop": ("phi", "Omega"),
    "vdp_lienard": ("x", "w"),
    "duffing": ("x", "y"),
    "double_well_2dof": ("x", "y", "px", "py"),
}

DEFAULT_PARAMS = {
    "linear_saddle": {"lam": 1.0, "mu": 2.0},
    "nonlinear_saddle": {"lam": -2.0, "mu": 1.0},
    "hopf": {"beta": 0.5, "sigma": 1.0},
    "vanderpol": {"mu": 1.5},
    "bead_hoop": {"eps": 0.02, "mu": 2.3},
    "vdp_lienard": {"mu": 10.0},
    "duffing": {"alpha": 1.0, "beta": 1.0, "delta": 0.3, "gamma": 0.0, "omega": 1.2},
    "double_well_2dof": {"m1": 1.0, "m2": 1.0, "a": 1.0, "b": 1.0, "omega": 1.0,
                         "gamma_x": 0.25, "gamma_y": 0.25},
}


@dataclass(frozen=True)
class SystemSpec:
    """A built-in system together with a complete, validated parameter map.

    ``params`` may be given partially; missing entries take the defaults of
    the corresponding figure setup.
    """

    id: str
    params: Mapping[str, float] = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.id not in SYSTEM_IDS:
            raise ConfigurationError(
                f"unknown system id {self.id!r}; expected one of {sorted(SYSTEM_IDS)}")
        allowed = F.PARAM_ORDER[SYSTEM_IDS[self.id]]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ConfigurationError(
                f"unknown parameter(s) {sorted(unknown)} for {self.id}; allowed: {list(allowed)}")
        merged = dict(DEFAULT_PARAMS[self.id])
        merged.update({k: float(v) for k, v in self.params.items()})
        for k in allowed:
            if not math.isfinite(merged[k]):
                raise ConfigurationError(f"parameter {k} of {self.id} must be finite")
        if self.id == "bead_hoop" and merged["eps"] == 0.0:
            raise ConfigurationError("bead_hoop requires eps != 0")
        if self.id == "vdp_lienard" and merged["mu"] == 0.0:
            raise ConfigurationError("vdp_lienard requires mu != 0")
        if self.id == "double_well_2dof" and (merged["m1"] == 0.0 or merged["m2"] == 0.0):
            raise ConfigurationError("double_well_2dof requires nonzero masses")
        object.__setattr__(self, "params", {k: merged[k] for k in allowed})

    @property
    def sid(self) -> int:
        return SYSTEM_IDS[self.id]

    @property
    def dim(self) -> int:
        return 4 if self.id == "double_well_2dof" else 2

    @property
    def autonomous(self) -> bool:
        return not (self.id == "duffing" and self.params["gamma"] != 0.0)

    @property
    def coord_names(self) -> tuple[str, ...]:
        return COORD_NAMES[self.id]

    def packed(self) -> np.ndarray:
        return np.array([self.params[k] for k in F.PARAM_ORDER[self.sid]], dtype=np.float64)

    def with_params(self, **overrides) -> "SystemSpec":
        merged = dict(self.params)
        merged.update(overrides)
        return SystemSpec(self.id, merged)

    def to_dict(self) -> dict:
        return {"id": self.id, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SystemSpec":
        return cls(d["id"], dict(d.get("params", {})))


@dataclass(frozen=True)
class StateVec:
    coords: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        c = np.array(self.coords, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(c)) or not math.isfinite(self.t):
            raise ValueError("state entries must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "t", float(self.t))

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    def __iter__(self):
        return iter(self.coords)


def as_state(state, t: float | None = None) -> StateVec:
    if isinstance(state, StateVec):
        return state if t is None else StateVec(state.coords, t)
    return StateVec(state, 0.0 if t is None else t)


def eval_vector_field(spec: SystemSpec, state, t: float | None = None) -> np.ndarray:
    s = as_state(state, t)
    if s.dim != spec.dim:
        raise ConfigurationError(f"{spec.id} has dimension {spec.dim}, state has {s.dim}")
    out = np.empty(spec.dim)
    F.field(spec.sid, spec.packed(), s.t, s.coords, out)
    return out


def jacobian(spec: SystemSpec, state, t: float | None = None) -> np.ndarray:
    s = as_state(state, t)
    x = s.coords
    P = spec.params
    if spec.id == "linear_saddle":
        return np.array([[P["lam"], 0.0], [0.0, -P["mu"]]])
    if spec.id == "nonlinear_saddle":
        return np.array([[P["mu"], 0.0], [-2.0 * P["lam"] * x[0], P["lam"]]])
    if spec.id == "hopf":
        b, sg = P["beta"], P["sigma"]
        X, Y = x
        return np.array([
            [b - sg * (3 * X * X + Y * Y), -1.0 - 2 * sg * X * Y],
            [1.0 - 2 * sg * X * Y, b - sg * (X * X + 3 * Y * Y)],
        ])
    if spec.id == "vanderpol":
        mu = P["mu"]
        return np.array([[0.0, 1.0], [-1.0 - 2 * mu * x[0] * x[1], mu * (1 - x[0] ** 2)]])
    if spec.id == "bead_hoop":
        eps, mu = P["eps"], P["mu"]
        dslow = mu * math.cos(2 * x[0]) - math.cos(x[0])
        return np.array([[0.0, 1.0], [dslow / eps, -1.0 / eps]])
    if spec.id == "vdp_lienard":
        mu = P["mu"]
        return np.array([[-mu * (x[0] ** 2 - 1.0), mu], [-1.0 / mu, 0.0]])
    if spec.id == "duffing":
        return np.array([[0.0, 1.0], [P["alpha"] - 3 * P["beta"] * x[0] ** 2, -P["delta"]]])
    m1, m2, a, b, w = P["m1"], P["m2"], P["a"], P["b"], P["omega"]
    return np.array([
        [0.0, 0.0, 1.0 / m1, 0.0],
        [0.0, 0.0, 0.0, 1.0 / m2],
        [b - 3 * a * x[0] ** 2, 0.0, -P["gamma_x"], 0.0],
        [0.0, -w * w, 0.0, -P["gamma_y"]],
    ])


# Closed-form oracles ----------------------------------------------------------

def analytic_solution_linear_saddle(lam: float, mu: float, ic, t: float) -> StateVec:
    x0, y0 = as_state(ic).coords
    return StateVec((x0 * math.exp(lam * t), y0 * math.exp(-mu * t)), t)


def analytic_solution_nonlinear_saddle(ic, t: float) -> StateVec:
    """Exact flow of the nonlinear saddle at ``lam=-2, mu=1``."""
    x0, y0 = as_state(ic).coords
    half = 0.5 * x0 * x0
    return StateVec((x0 * math.exp(t), half * math.exp(2 * t) + (y0 - half) * math.exp(-2 * t)), t)


def hopf_blowup_time(sigma: float, r0: float) -> float:
    """Backward blow-up time of the ``beta=0`` normal form (``-inf`` at r0=0)."""
    if r0 == 0.0:
        return -math.inf
    return -1.0 / (2.0 * sigma * r0 * r0)


def analytic_solution_hopf_beta0(sigma: float, r0: float, theta0: float, t: float):
    """Polar solution ``(r, theta)`` of the ``beta=0`` normal form."""
    if sigma <= 0 or r0 < 0:
        raise ValueError("requires sigma > 0 and r0 >= 0")
    d = 2.0 * sigma * t * r0 * r0 + 1.0
    if d <= 0.0:
        raise BlowUpError(f"solution from r0={r0} blows up at t={hopf_blowup_time(sigma, r0)}")
    return r0 / math.sqrt(d), theta0 + t


def closed_form_ld_linear_saddle(lam, mu, p, tau_f, tau_b, ic) -> float:
    x0, y0 = as_state(ic).coords
    ax, ay = abs(x0) ** p, abs(y0) ** p
    fwd_x = lam ** (p - 1) * ax / p * (math.exp(p * lam * tau_f) - math.exp(-p * lam * tau_b))
    fwd_y = mu ** (p - 1) * ay / p * (math.exp(-p * mu * tau_f) - math.exp(p * mu * tau_b))
    return fwd_x - fwd_y


def closed_form_ld_hopf_beta0(sigma, p, r0, tau_f=0.0, tau_b=0.0) -> float:
    """Polar-coordinate p-norm LD, ``int |r'|^p + |theta'|^p dt``, for ``beta=0``.

    This uses the polar components, not the Cartesian ones the field engine
    accumulates; it is an oracle for the radial blow-up structure only.
    """
    if tau_b > 0 and 2 * sigma * tau_b * r0 * r0 >= 1.0:
        raise BlowUpError("backward horizon reaches the blow-up time")
    total = tau_f + tau_b
    if abs(p - 2.0 / 3.0) < 1e-14:
        c = sigma ** (-1.0 / 3.0) / 2.0
        total += c * math.log(2 * sigma * tau_f * r0 * r0 + 1.0)
        total -= c * math.log(-2 * sigma * tau_b * r0 * r0 + 1.0)
        return total
    if r0 == 0.0:
        return total
    c = sigma ** (p - 1) * r0 ** (3 * p - 2) / (2 - 3 * p)
    e = 1.0 - 1.5 * p
    total += c * ((2 * sigma * tau_f * r0 * r0 + 1.0) ** e - 1.0)
    total += c * (1.0 - (-2 * sigma * tau_b * r0 * r0 + 1.0) ** e)
    return total


def balance_integration_times(lam: float, mu: float, p: float, tau_f: float) -> float:
    """Backward horizon making forward and backward LD contributions comparable
    for a saddle with expansion rate ``lam`` and contraction rate ``mu``."""
    if lam <= 0 or mu <= 0:
        raise ValueError("rates must be positive")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if lam == mu:
        return float(tau_f)
    return lam / mu * tau_f + (1.0 - p) / (mu * p) * math.log(mu / lam)


def slow_manifold_curve(spec: SystemSpec, x):
    x = np.asarray(x, dtype=np.float64)
    P = spec.params
    if spec.id == "nonlinear_saddle":
        return P["lam"] * x * x / (P["lam"] - 2.0 * P["mu"])
    if spec.id == "bead_hoop":
        return (P["mu"] * np.cos(x) - 1.0) * np.sin(x)
    if spec.id == "vdp_lienard":
        return x ** 3 / 3.0 - x
    raise ConfigurationError(f"{spec.id} has no slow-manifold curve")


# Equilibria -------------------------------------------------------------------

@dataclass(frozen=True)
class Equilibrium:
    state: StateVec
    stability: str
    eigenvalues: np.ndarray


def classify_eigenvalues(ev: np.ndarray, tol: float = 1e-12) -> str:
    re = np.real(ev)
    if re.max() > tol and re.min() < -tol:
        return "saddle"
    if re.max() < -tol:
        return "stable"
    if re.min() > tol:
        return "unstable"
    return "center"


def _equilibrium_points(spec: SystemSpec) -> list[tuple[float, ...]]:
    P = spec.params
    if spec.id in ("linear_saddle", "nonlinear_saddle", "hopf", "vanderpol", "vdp_lienard"):
        return [(0.0, 0.0)]
    if spec.id == "bead_hoop":
        pts = [(0.0, 0.0), (math.pi, 0.0)]
        if P["mu"] > 1.0:
            phi = math.acos(1.0 / P["mu"])
            pts += [(phi, 0.0), (-phi, 0.0)]
        return pts
    if spec.id == "duffing":
        if not spec.autonomous:
            return []
        pts = [(0.0, 0.0)]
        if P["beta"] != 0.0 and P["alpha"] / P["beta"] > 0:
            w = math.sqrt(P["alpha"] / P["beta"])
            pts += [(w, 0.0), (-w, 0.0)]
        return pts
    pts = [(0.0, 0.0, 0.0, 0.0)]
    if P["a"] != 0.0 and P["b"] / P["a"] > 0:
        w = math.sqrt(P["b"] / P["a"])
        pts += [(w, 0.0, 0.0, 0.0), (-w, 0.0, 0.0, 0.0)]
    return pts


def equilibria(spec: SystemSpec) -> list[Equilibrium]:
    out = []
    for pt in _equilibrium_points(spec):
        s = StateVec(pt, 0.0)
        ev = np.linalg.eigvals(jacobian(spec, s))
        ev = ev[np.lexsort((np.imag(ev), -np.real(ev)))]
        out.append(Equilibrium(s, classify_eigenvalues(ev), ev))
    return out
