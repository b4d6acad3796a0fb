"""Vector fields of the built-in systems, written once for both backends.

``field`` reads ``s[k]`` and writes ``out[k]`` for ``k < dim``. Under numba
``s`` is a 1-D state so every term is a scalar; in the numpy kernels ``s``
has shape ``(dim, N)`` and ``t`` shape ``(N,)``, so the same statements act
on whole batches of nodes.
"""
from __future__ import annotations

import numpy as np

from ._accel import njit

LINEAR_SADDLE = 0
NONLINEAR_SADDLE = 1
HOPF = 2
VANDERPOL = 3
BEAD_HOOP = 4
VDP_LIENARD = 5
DUFFING = 6
DOUBLE_WELL = 7

# Parameter order in the packed float64 vector handed to the kernels.
PARAM_ORDER = {
    LINEAR_SADDLE: ("lam", "mu"),
    NONLINEAR_SADDLE: ("lam", "mu"),
    HOPF: ("beta", "sigma"),
    VANDERPOL: ("mu",),
    BEAD_HOOP: ("eps", "mu"),
    VDP_LIENARD: ("mu",),
    DUFFING: ("alpha", "beta", "delta", "gamma", "omega"),
    DOUBLE_WELL: ("m1", "m2", "a", "b", "omega", "gamma_x", "gamma_y"),
}


def field(sid, prm, t, s, out):
    if sid == LINEAR_SADDLE:
        out[0] = prm[0] * s[0]
        out[1] = -prm[1] * s[1]
    elif sid == NONLINEAR_SADDLE:
        out[0] = prm[1] * s[0]
        out[1] = prm[0] * (s[1] - s[0] * s[0])
    elif sid == HOPF:
        r2 = s[0] * s[0] + s[1] * s[1]
        out[0] = prm[0] * s[0] - s[1] - prm[1] * s[0] * r2
        out[1] = s[0] + prm[0] * s[1] - prm[1] * s[1] * r2
    elif sid == VANDERPOL:
        out[0] = s[1]
        out[1] = -s[0] + prm[0] * (1.0 - s[0] * s[0]) * s[1]
    elif sid == BEAD_HOOP:
        slow = (prm[1] * np.cos(s[0]) - 1.0) * np.sin(s[0])
        out[0] = s[1]
        out[1] = (slow - s[1]) / prm[0]
    elif sid == VDP_LIENARD:
        x = s[0]
        out[0] = prm[0] * (s[1] - (x * x * x / 3.0 - x))
        out[1] = -x / prm[0]
    elif sid == DUFFING:
        x = s[0]
        out[0] = s[1]
        out[1] = (-prm[2] * s[1] + prm[0] * x - prm[1] * x * x * x
                  + prm[3] * np.cos(prm[4] * t))
    else:
        # state order (x, y, px, py); harmonic restoring force -omega^2 y
        x = s[0]
        out[0] = s[2] / prm[0]
        out[1] = s[3] / prm[1]
        out[2] = prm[3] * x - prm[2] * x * x * x - prm[5] * s[2]
        out[3] = -prm[4] * prm[4] * s[1] - prm[6] * s[3]


field_nb = njit(cache=True, nogil=True)(field)
