"""Compiled fixed-step RK4 loops for the two-level master equation.

State vector: ``(rho_ee, Re rho_eg, Im rho_eg)``, optionally followed by the
cantilever displacement and velocity ``(x, v)``. The detuning is
``offset + amp * cos(w t + phase)``. States are recorded every ``every``
steps and always at the final step.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _bloch_rhs(p, re, im, delta, g1, g2, gl, om):
    w = 2.0 * p - 1.0
    dp = -0.5 * g1 * w - gl * p - om * im
    dre = -g2 * re - delta * im
    dim = -g2 * im + delta * re + 0.5 * om * w
    return dp, dre, dim


@njit(cache=True)
def rk4_bloch(y0, t0, dt, nsteps, every, g1, g2, gl, om, offset, amp, wmod, phase):
    nrec = nsteps // every + 1 + (1 if nsteps % every else 0)
    out = np.empty((nrec, 3))
    p, re, im = y0[0], y0[1], y0[2]
    out[0, 0], out[0, 1], out[0, 2] = p, re, im
    h = dt
    d0 = offset + amp * math.cos(wmod * t0 + phase)
    k = 1
    for n in range(nsteps):
        t = t0 + n * h
        dh = offset + amp * math.cos(wmod * (t + 0.5 * h) + phase)
        d1 = offset + amp * math.cos(wmod * (t + h) + phase)
        a1, b1, c1 = _bloch_rhs(p, re, im, d0, g1, g2, gl, om)
        a2, b2, c2 = _bloch_rhs(p + 0.5 * h * a1, re + 0.5 * h * b1, im + 0.5 * h * c1, dh, g1, g2, gl, om)
        a3, b3, c3 = _bloch_rhs(p + 0.5 * h * a2, re + 0.5 * h * b2, im + 0.5 * h * c2, dh, g1, g2, gl, om)
        a4, b4, c4 = _bloch_rhs(p + h * a3, re + h * b3, im + h * c3, d1, g1, g2, gl, om)
        p += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        re += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        im += h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        d0 = d1
        if (n + 1) % every == 0 or n + 1 == nsteps:
            if not (math.isfinite(p) and math.isfinite(re) and math.isfinite(im)):
                out[k, 0] = np.nan
                return out[: k + 1]
            out[k, 0], out[k, 1], out[k, 2] = p, re, im
            k += 1
    return out


@njit(cache=True)
def rk4_bloch_mech(y0, t0, dt, nsteps, every, g1, g2, gl, om, offset, amp, wmod, phase,
                   force, p_ref, mass, wm, q):
    """Co-integrate the spin with ``m (x'' + wm/q x' + wm^2 x) = force (rho_ee - p_ref)``."""
    nrec = nsteps // every + 1 + (1 if nsteps % every else 0)
    out = np.empty((nrec, 5))
    p, re, im, x, v = y0[0], y0[1], y0[2], y0[3], y0[4]
    out[0, 0], out[0, 1], out[0, 2], out[0, 3], out[0, 4] = p, re, im, x, v
    h = dt
    fm = force / mass
    gam = wm / q
    w2 = wm * wm
    d0 = offset + amp * math.cos(wmod * t0 + phase)
    k = 1
    for n in range(nsteps):
        t = t0 + n * h
        dh = offset + amp * math.cos(wmod * (t + 0.5 * h) + phase)
        d1 = offset + amp * math.cos(wmod * (t + h) + phase)
        a1, b1, c1 = _bloch_rhs(p, re, im, d0, g1, g2, gl, om)
        x1 = v
        v1 = -gam * v - w2 * x + fm * (p - p_ref)
        pp, vv = p + 0.5 * h * a1, v + 0.5 * h * v1
        a2, b2, c2 = _bloch_rhs(pp, re + 0.5 * h * b1, im + 0.5 * h * c1, dh, g1, g2, gl, om)
        x2 = vv
        v2 = -gam * vv - w2 * (x + 0.5 * h * x1) + fm * (pp - p_ref)
        pp, vv = p + 0.5 * h * a2, v + 0.5 * h * v2
        a3, b3, c3 = _bloch_rhs(pp, re + 0.5 * h * b2, im + 0.5 * h * c2, dh, g1, g2, gl, om)
        x3 = vv
        v3 = -gam * vv - w2 * (x + 0.5 * h * x2) + fm * (pp - p_ref)
        pp, vv = p + h * a3, v + h * v3
        a4, b4, c4 = _bloch_rhs(pp, re + h * b3, im + h * c3, d1, g1, g2, gl, om)
        x4 = vv
        v4 = -gam * vv - w2 * (x + h * x3) + fm * (pp - p_ref)
        p += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        re += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        im += h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        x += h / 6.0 * (x1 + 2.0 * x2 + 2.0 * x3 + x4)
        v += h / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        d0 = d1
        if (n + 1) % every == 0 or n + 1 == nsteps:
            if not (math.isfinite(p) and math.isfinite(x)):
                out[k, 0] = np.nan
                return out[: k + 1]
            out[k, 0], out[k, 1], out[k, 2], out[k, 3], out[k, 4] = p, re, im, x, v
            k += 1
    return out
