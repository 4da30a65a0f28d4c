"""First flexural mode of the loaded cantilever."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import K_B, TWO_PI
from .trace import SignalTrace


class MechanicsError(ValueError):
    pass


@dataclass(frozen=True)
class CantileverParams:
    """Geometry in m, frequencies in Hz, stiffness N/m, mass kg, bath K.

    ``le`` is derived as ``L / beta``. ``noise_floor`` is the white
    detection-noise level added to displacement spectra (m^2/Hz).
    """

    L: float = 350e-6
    w: float = 32.5e-6
    t: float = 1e-6
    f0: float = 14480.0
    fm: float = 2860.0
    Q: float = 160.0
    km: float = 0.03
    me: float = 1e-11
    beta: float = 1.875
    T_bath: float = 300.0
    noise_floor: float = 1e-21
    le: float = field(init=False)

    def __post_init__(self):
        for name in ("L", "w", "t", "f0", "fm", "Q", "km", "me", "beta"):
            if not getattr(self, name) > 0:
                raise MechanicsError(f"{name} must be positive, got {getattr(self, name)}")
        if self.T_bath < 0 or self.noise_floor < 0:
            raise MechanicsError("T_bath and noise_floor must be >= 0")
        if self.fm > self.f0:
            raise MechanicsError(f"loaded frequency fm={self.fm} exceeds unloaded f0={self.f0}")
        object.__setattr__(self, "le", self.L / self.beta)

    @property
    def omega_m(self) -> float:
        return TWO_PI * self.fm


def added_mass(f0: float, fm: float, me: float) -> float:
    """Mass added to the tip, from the unloaded/loaded frequency ratio."""
    if not 0 < fm:
        raise MechanicsError("fm must be positive")
    if fm > f0:
        raise MechanicsError(f"fm={fm} > f0={f0} implies a negative added mass")
    return ((f0 / fm) ** 2 - 1.0) * me


def loaded_frequency(f0: float, me: float, m_add: float) -> float:
    """Inverse of :func:`added_mass`."""
    return f0 * math.sqrt(me / (me + m_add))


def detection_limits(params: CantileverParams) -> tuple[float, float]:
    """Thermal force and torque sensitivities (N/sqrt(Hz), N m/sqrt(Hz))."""
    f_min = math.sqrt(4.0 * K_B * params.T_bath / math.pi * params.km / (params.Q * params.fm))
    return f_min, f_min * params.le


def mechanical_susceptibility(omega, params: CantileverParams):
    """chi(w) = 1 / (me ((wm^2 - w^2) + i w wm / Q)) in m/N."""
    omega = np.asarray(omega, dtype=float)
    wm = params.omega_m
    return 1.0 / (params.me * ((wm * wm - omega * omega) + 1j * omega * wm / params.Q))


def thermal_rms(params: CantileverParams) -> float:
    """Equipartition rms displacement sqrt(kB T / km)."""
    return math.sqrt(K_B * params.T_bath / params.km)


def thermal_psd(freq, params: CantileverParams, include_floor: bool = True):
    """One-sided displacement PSD (m^2/Hz) of the thermally driven mode.

    The spectrum uses the dynamical mass ``km / wm^2`` so that its integral
    equals ``kB T / km``; the stated ``me`` and ``km`` are not mutually
    consistent at the loaded frequency.
    """
    f = np.asarray(freq, dtype=float)
    wm = params.omega_m
    m_dyn = params.km / (wm * wm)
    w = TWO_PI * f
    chi2 = 1.0 / (m_dyn ** 2 * ((wm * wm - w * w) ** 2 + (w * wm / params.Q) ** 2))
    s = 4.0 * K_B * params.T_bath * (wm / params.Q) * m_dyn * chi2
    return s + params.noise_floor if include_floor else s


def thermal_spectrum(params: CantileverParams, grid) -> SignalTrace:
    grid = np.asarray(grid, dtype=float)
    thermal = thermal_psd(grid, params, include_floor=False)
    return SignalTrace(
        "frequency", "Hz", grid,
        {"S_x": thermal + params.noise_floor, "S_thermal": thermal},
        {"S_x": "m^2/Hz", "S_thermal": "m^2/Hz"},
        {"fm_Hz": repr(params.fm), "Q": repr(params.Q), "T_K": repr(params.T_bath),
         "noise_floor_m2_per_Hz": repr(params.noise_floor)},
    )


def torque_to_force(tau_y: float, le: float) -> float:
    if not le > 0:
        raise MechanicsError("effective length must be positive")
    return tau_y / le


def force_to_displacement_at_resonance(force: float, params: CantileverParams) -> float:
    return force * params.Q / params.km


def torque_from_displacement(x_res: float, params: CantileverParams) -> float:
    """Tip torque producing a resonant displacement amplitude ``x_res``."""
    if x_res < 0:
        raise MechanicsError("displacement amplitude must be >= 0")
    return params.km * params.le * x_res / params.Q


def gradient_force(moment: float, field_gradient: float) -> float:
    """Force on a moment in a field gradient, |mu| grad B (N)."""
    return abs(moment) * field_gradient


def mode_shape(x, params: CantileverParams | None = None):
    """Clamped-free first-mode deflection normalized to 1 at the tip."""
    params = params or CantileverParams()
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > params.L):
        raise MechanicsError("position outside [0, L]")
    b = params.beta
    sigma = (math.cosh(b) + math.cos(b)) / (math.sinh(b) + math.sin(b))

    def w(u):
        return np.cosh(u) - np.cos(u) - sigma * (np.sinh(u) - np.sin(u))

    return w(b * x / params.L) / w(b)
