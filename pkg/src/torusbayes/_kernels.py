"""Hot elementwise kernels for the spectral time steppers.

FFTs stay in numpy; everything between transforms (reaction-term evaluation,
Lawson stage combines, Leray projection, convection products) is elementwise
and lives here in two interchangeable flavours:

* a numba ``@njit`` build (default when numba imports), and
* a pure-numpy fallback.

Set ``TORUSBAYES_NUMBA=0`` to force the numpy path.  ``benchmarks/
bench_kernels.py`` times both.
"""

import math
import os

import numpy as np


def _numba_requested() -> bool:
    return os.environ.get("TORUSBAYES_NUMBA", "1").lower() not in ("0", "false", "no")


# ---------------------------------------------------------------------------
# pure numpy implementations
# ---------------------------------------------------------------------------

def bump_reaction_numpy(u, amplitude, width):
    """a * u * exp(1/((u/b)^2 - 1)) inside |u| < b, zero outside."""
    q = (u / width) ** 2
    out = np.zeros_like(u)
    inside = q < 1.0
    out[inside] = amplitude * u[inside] * np.exp(1.0 / (q[inside] - 1.0))
    return out


def lawson_predictor_numpy(decay, coeffs, rhs, dt):
    """Predictor stage of integrating-factor Heun: E*(c + dt*rhs)."""
    return decay * (coeffs + dt * rhs)


def lawson_corrector_numpy(decay, coeffs, rhs0, rhs1, dt):
    """Corrector stage: E*c + dt/2*(E*rhs0 + rhs1)."""
    return decay * coeffs + 0.5 * dt * (decay * rhs0 + rhs1)


def leray_pair_numpy(cx, cy, kx, ky, inv_ksq):
    """Per-mode projection (I - k k^T/|k|^2) of a 2-component coefficient array.

    ``inv_ksq`` must be zero exactly at k = 0; that bin (the mean mode) is
    set to zero.
    """
    dot = (kx * cx + ky * cy) * inv_ksq
    zero = inv_ksq == 0.0
    ox = np.where(zero, 0.0, cx - kx * dot)
    oy = np.where(zero, 0.0, cy - ky * dot)
    return ox, oy


def convect_2d_numpy(ux, uy, dxv1, dyv1, dxv2, dyv2):
    """Physical-space convection products ((u . grad) v) for 2D fields."""
    return ux * dxv1 + uy * dyv1, ux * dxv2 + uy * dyv2


NUMPY_BACKEND = {
    "bump_reaction": bump_reaction_numpy,
    "lawson_predictor": lawson_predictor_numpy,
    "lawson_corrector": lawson_corrector_numpy,
    "leray_pair": leray_pair_numpy,
    "convect_2d": convect_2d_numpy,
}


# ---------------------------------------------------------------------------
# numba implementations (flat loops; wrappers keep the ndarray shapes)
# ---------------------------------------------------------------------------

def _build_numba_backend():
    from numba import njit

    @njit(cache=True)
    def _bump_flat(u, amplitude, width, out):
        for i in range(u.size):
            x = u[i] / width
            q = x * x
            if q < 1.0:
                out[i] = amplitude * u[i] * math.exp(1.0 / (q - 1.0))
            else:
                out[i] = 0.0

    @njit(cache=True)
    def _predictor_flat(decay, coeffs, rhs, dt, out):
        for i in range(coeffs.size):
            out[i] = decay[i] * (coeffs[i] + dt * rhs[i])

    @njit(cache=True)
    def _corrector_flat(decay, coeffs, rhs0, rhs1, dt, out):
        half = 0.5 * dt
        for i in range(coeffs.size):
            out[i] = decay[i] * coeffs[i] + half * (decay[i] * rhs0[i] + rhs1[i])

    @njit(cache=True)
    def _leray_flat(cx, cy, kx, ky, inv_ksq, ox, oy):
        for i in range(cx.size):
            if inv_ksq[i] == 0.0:
                ox[i] = 0.0
                oy[i] = 0.0
            else:
                dot = (kx[i] * cx[i] + ky[i] * cy[i]) * inv_ksq[i]
                ox[i] = cx[i] - kx[i] * dot
                oy[i] = cy[i] - ky[i] * dot

    @njit(cache=True)
    def _convect_flat(ux, uy, dxv1, dyv1, dxv2, dyv2, o1, o2):
        for i in range(ux.size):
            o1[i] = ux[i] * dxv1[i] + uy[i] * dyv1[i]
            o2[i] = ux[i] * dxv2[i] + uy[i] * dyv2[i]

    def _flat(a):
        return np.ascontiguousarray(a).reshape(-1)

    def bump_reaction(u, amplitude, width):
        out = np.empty(u.shape, dtype=u.dtype)
        _bump_flat(_flat(u), float(amplitude), float(width), out.reshape(-1))
        return out

    def lawson_predictor(decay, coeffs, rhs, dt):
        out = np.empty(coeffs.shape, dtype=coeffs.dtype)
        _predictor_flat(_flat(decay), _flat(coeffs), _flat(rhs), float(dt),
                        out.reshape(-1))
        return out

    def lawson_corrector(decay, coeffs, rhs0, rhs1, dt):
        out = np.empty(coeffs.shape, dtype=coeffs.dtype)
        _corrector_flat(_flat(decay), _flat(coeffs), _flat(rhs0), _flat(rhs1),
                        float(dt), out.reshape(-1))
        return out

    def leray_pair(cx, cy, kx, ky, inv_ksq):
        ox = np.empty(cx.shape, dtype=cx.dtype)
        oy = np.empty(cy.shape, dtype=cy.dtype)
        _leray_flat(_flat(cx), _flat(cy), _flat(kx), _flat(ky), _flat(inv_ksq),
                    ox.reshape(-1), oy.reshape(-1))
        return ox, oy

    def convect_2d(ux, uy, dxv1, dyv1, dxv2, dyv2):
        o1 = np.empty(ux.shape, dtype=ux.dtype)
        o2 = np.empty(ux.shape, dtype=ux.dtype)
        _convect_flat(_flat(ux), _flat(uy), _flat(dxv1), _flat(dyv1), _flat(dxv2),
                      _flat(dyv2), o1.reshape(-1), o2.reshape(-1))
        return o1, o2

    return {
        "bump_reaction": bump_reaction,
        "lawson_predictor": lawson_predictor,
        "lawson_corrector": lawson_corrector,
        "leray_pair": leray_pair,
        "convect_2d": convect_2d,
    }


if _numba_requested():
    try:
        _ACTIVE = _build_numba_backend()
        BACKEND = "numba"
    except ImportError:
        _ACTIVE = NUMPY_BACKEND
        BACKEND = "numpy"
else:
    _ACTIVE = NUMPY_BACKEND
    BACKEND = "numpy"

bump_reaction = _ACTIVE["bump_reaction"]
lawson_predictor = _ACTIVE["lawson_predictor"]
lawson_corrector = _ACTIVE["lawson_corrector"]
leray_pair = _ACTIVE["leray_pair"]
convect_2d = _ACTIVE["convect_2d"]
