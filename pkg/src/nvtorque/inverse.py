"""Inverse problems: field from an ODMR dip pair, spin count from torque curves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import HBAR
from .nvcore import (
    InputError,
    NvParams,
    StaticField,
    eigensolve,
    moment_change,
    population_torque_difference,
    transition_pairs_angle,
)
from .trace import SignalTrace

# scaling of the fit coordinates: u = B0 / B_SCALE, v = theta / (pi/2)
B_SCALE = 0.1
HALF_PI = 0.5 * math.pi
B_LIMIT = 1.0


class InverseError(ValueError):
    pass


class Unidentifiable(InverseError):
    pass


@dataclass(frozen=True)
class FieldFitResult:
    B0: float
    theta: float
    residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class SpinFitResult:
    N_fit: float
    residual: float
    standard_error: float


def _fold(u, v):
    """Map scaled coordinates onto B0 >= 0, theta in [0, pi/2] (spectral symmetries)."""
    u = np.abs(u)
    v = np.mod(v, 2.0)
    v = np.where(v > 1.0, 2.0 - v, v)
    return u, v


def _pairs(params, u, v):
    u, v = _fold(u, v)
    fm, fp = transition_pairs_angle(params, u * B_SCALE, v * HALF_PI)
    return np.stack([fm, fp], axis=-1)


def fit_field_from_dips(f_minus: float, f_plus: float, params: NvParams | None = None,
                        tol: float = 1e3, max_iter: int = 200, grid: int = 20) -> FieldFitResult:
    """Recover (B0, theta) for one class from its two transition frequencies (Hz).

    A ``grid`` x ``grid`` lattice over B0 in [0, 0.1] T and theta in
    [0, pi/2] seeds damped Gauss-Newton refinements (central-difference
    Jacobian). ``residual`` is the rms frequency mismatch in Hz; the result is
    flagged converged when it does not exceed ``tol``.
    """
    params = params or NvParams()
    if not (math.isfinite(f_minus) and math.isfinite(f_plus)) or f_minus <= 0:
        raise InputError("dip frequencies must be finite and positive")
    if f_minus > f_plus:
        raise InputError(f"f_minus={f_minus} exceeds f_plus={f_plus}")
    target = np.array([f_minus, f_plus])
    u0, v0 = np.meshgrid(np.linspace(0.0, 1.0, grid), np.linspace(0.0, 1.0, grid), indexing="ij")
    cost = np.sum((_pairs(params, u0, v0) - target) ** 2, axis=-1).ravel()
    order = np.argsort(cost, kind="stable")[:4]

    best = None
    for k in order:
        # the spectrum is flat in both coordinates at B0 = 0; start just off it
        u_start = max(float(u0.ravel()[k]), 0.01)
        res = _refine(params, target, u_start, float(v0.ravel()[k]), max_iter)
        if best is None or res[2] < best[2]:
            best = res
    u, v, rms, it = best
    b0, theta = float(u * B_SCALE), float(v * HALF_PI)
    ok = rms <= tol and b0 <= B_LIMIT
    return FieldFitResult(b0, theta, rms, it, bool(ok))


def _refine(params, target, u, v, max_iter, h=1e-5):
    x = np.array([u, v])
    r = _pairs(params, *x) - target
    c = float(r @ r)
    lam = 1e-3
    it = 0
    for it in range(1, max_iter + 1):
        J = np.empty((2, 2))
        for j in range(2):
            dx = np.zeros(2)
            dx[j] = h
            J[:, j] = (_pairs(params, *(x + dx)) - _pairs(params, *(x - dx))) / (2 * h)
        A = J.T @ J
        g = J.T @ r
        improved = False
        while lam < 1e12:
            step = np.linalg.solve(A + lam * np.diag(np.diag(A) + 1e-12), -g)
            xn = np.array(_fold(*(x + step)))
            xn[0] = min(xn[0], B_LIMIT / B_SCALE)
            rn = _pairs(params, *xn) - target
            cn = float(rn @ rn)
            if cn < c:
                x, r, c = xn, rn, cn
                lam = max(lam / 10.0, 1e-12)
                improved = True
                break
            lam *= 10.0
        if not improved or np.max(np.abs(step)) < 1e-15 or math.sqrt(c / 2) < 1e-7:
            break
    u, v = _fold(*x)
    return float(u), float(v), math.sqrt(c / 2.0), it


@dataclass(frozen=True)
class TorqueModel:
    """Per-spin torque as a function of field angle or amplitude.

    ``variable`` is ``"theta"`` (abscissa in rad or deg, fixed ``amplitude``
    in T) or ``"field"`` (abscissa in T or mT, fixed ``theta`` in rad).
    ``quantity`` is ``"norm"`` for ``|(dmu) x B0|`` under saturation of the
    transition or ``"projection"`` for ``(tau_e - tau_g) . axis``.
    """

    params: NvParams = NvParams()
    variable: str = "theta"
    amplitude: float = 0.018
    theta: float = math.radians(60.0)
    class_index: int = 0
    transition: str = "minus"
    quantity: str = "norm"
    axis: tuple = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if self.variable not in ("theta", "field"):
            raise InputError(f"variable must be 'theta' or 'field', got {self.variable!r}")
        if self.quantity not in ("norm", "projection"):
            raise InputError(f"quantity must be 'norm' or 'projection', got {self.quantity!r}")

    def per_spin(self, values, unit: str = "") -> np.ndarray:
        scale = {"deg": math.pi / 180.0, "mT": 1e-3}.get(unit, 1.0)
        out = []
        for x in np.asarray(values, dtype=float) * scale:
            if self.variable == "theta":
                field = StaticField.from_angle(self.amplitude, x, self.class_index, self.params)
            else:
                field = StaticField.from_angle(x, self.theta, self.class_index, self.params)
            sol = eigensolve(self.params, field, self.class_index)
            if self.quantity == "norm":
                out.append(np.linalg.norm(np.cross(moment_change(sol, self.transition), field.vector)))
            else:
                ax = np.asarray(self.axis, dtype=float)
                out.append(population_torque_difference(sol, self.transition) @ (ax / np.linalg.norm(ax)))
        return np.array(out)

    def curve(self, values, N: float, unit: str = "") -> np.ndarray:
        return N * self.per_spin(values, unit)


def fit_polarized_spins(data: SignalTrace, model: TorqueModel, channel: str = "tau") -> SpinFitResult:
    """Least-squares spin count for torque data linear in N.

    ``standard_error`` uses the residual variance with n - 1 degrees of
    freedom; ``residual`` is the rms misfit in N m.
    """
    y = np.asarray(data[channel], dtype=float)
    if y.size < 3:
        raise InputError(f"need at least 3 data points, got {y.size}")
    m = model.per_spin(data.abscissa, data.abscissa_unit)
    mm = float(m @ m)
    if model.variable == "theta":
        b_max = model.amplitude
    else:
        b_max = float(np.max(np.abs(data.abscissa))) * {"mT": 1e-3}.get(data.abscissa_unit, 1.0)
    # torque scale of one spin: hbar |gamma_e| B
    if not mm > 0 or np.max(np.abs(m)) <= 1e-10 * HBAR * abs(model.params.gamma_e) * b_max:
        raise Unidentifiable("model torques vanish at every data point; N is not identifiable")
    n_fit = float(m @ y) / mm
    r = y - n_fit * m
    s = math.sqrt(float(r @ r) / (y.size - 1))
    if not n_fit > 0:
        raise InverseError(f"fitted spin count is not positive ({n_fit:.3e})")
    return SpinFitResult(n_fit, math.sqrt(float(r @ r) / y.size), s / math.sqrt(mm))
