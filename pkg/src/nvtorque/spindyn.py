"""Two-level master equation for a driven |0'> -> |+-1'> transition.

The populations obey

    d rho_ee/dt = -Gamma1/2 (rho_ee - rho_gg) - gamma_las rho_ee + i Omega/2 (rho_eg - rho_eg*)
    d rho_eg/dt = (-Gamma2* + i Delta) rho_eg + i Omega/2 (rho_ee - rho_gg)

with rho_gg = 1 - rho_ee. The stationary solution is exact for any detuning;
the frequency-modulation response follows from adiabatic elimination of the
coherence, and reduces to the blue-side (Delta = Gamma2*) expressions there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import _kernels
from .nvcore import NvParams


class SpinDynamicsError(ValueError):
    """Invalid rates or undefined stationary state."""


class StepSizeError(SpinDynamicsError):
    def __init__(self, dt, required):
        super().__init__(f"time step {dt:.3e} s too large; need dt <= {required:.3e} s")
        self.required = required


class IntegrationDiverged(ArithmeticError):
    pass


@dataclass(frozen=True)
class RateSet:
    """Rates in rad/s. ``Delta`` is the signed microwave detuning."""

    Gamma1: float
    Gamma2star: float
    gamma_las: float
    Omega: float
    Delta: float

    def __post_init__(self):
        for name in ("Gamma1", "gamma_las", "Omega"):
            if getattr(self, name) < 0:
                raise SpinDynamicsError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not self.Gamma2star > 0:
            raise SpinDynamicsError("Gamma2star must be > 0 (adiabatic elimination undefined)")
        if not math.isfinite(self.Delta):
            raise SpinDynamicsError("Delta must be finite")

    @classmethod
    def from_params(cls, params: NvParams, Omega: float, Delta: float | None = None) -> "RateSet":
        """Rates from ensemble constants; ``Delta`` defaults to the blue-side point Gamma2*."""
        return cls(params.Gamma1, params.Gamma2star, params.gamma_las, Omega,
                   params.Gamma2star if Delta is None else Delta)

    def with_(self, **kw) -> "RateSet":
        return replace(self, **kw)


@dataclass(frozen=True)
class TwoLevelState:
    rho_ee: float
    rho_eg: complex

    @property
    def rho_gg(self) -> float:
        return 1.0 - self.rho_ee


def pumping_rate(rates: RateSet, Delta: float | None = None) -> float:
    """Microwave-induced rate Gamma0(Delta) = Omega^2 Gamma2* / (2 (Gamma2*^2 + Delta^2))."""
    d = rates.Delta if Delta is None else Delta
    g2 = rates.Gamma2star
    return rates.Omega ** 2 * g2 / (2.0 * (g2 * g2 + d * d))


def gamma_tot(rates: RateSet) -> float:
    """Total repolarization rate Gamma1 + gamma_las + Omega^2 / (2 Gamma2*)."""
    return rates.Gamma1 + rates.gamma_las + rates.Omega ** 2 / (2.0 * rates.Gamma2star)


def gamma_tot_detuned(rates: RateSet, Delta: float | None = None) -> float:
    """Population relaxation rate at arbitrary detuning; equals gamma_tot at Delta = Gamma2*."""
    return rates.Gamma1 + rates.gamma_las + 2.0 * pumping_rate(rates, Delta)


def steady_state(rates: RateSet) -> TwoLevelState:
    """Exact stationary state of the master equation at detuning ``rates.Delta``."""
    g0 = pumping_rate(rates)
    denom = rates.Gamma1 + rates.gamma_las + 2.0 * g0
    if denom == 0.0:
        raise SpinDynamicsError("all rates vanish: stationary state undefined")
    p = (0.5 * rates.Gamma1 + g0) / denom
    w = 2.0 * p - 1.0
    g2, d = rates.Gamma2star, rates.Delta
    eg = rates.Omega * w * complex(-d, g2) / (2.0 * (g2 * g2 + d * d))
    return TwoLevelState(p, eg)


def steady_state_slope(rates: RateSet) -> float:
    """d rho_ee^S / d Delta at ``rates.Delta`` (units s)."""
    g2, d = rates.Gamma2star, rates.Delta
    denom = gamma_tot_detuned(rates)
    if denom == 0.0:
        raise SpinDynamicsError("all rates vanish: stationary state undefined")
    dg0 = -rates.Omega ** 2 * g2 * d / (g2 * g2 + d * d) ** 2
    return rates.gamma_las * dg0 / denom ** 2


def fm_population_response(rates: RateSet, omega) -> np.ndarray | complex:
    """Linear transfer delta rho_ee[w] / delta omega_mu[w] (units s).

    Single pole at the detuned relaxation rate; at Delta = Gamma2* this is
    -gamma_las Gamma0 / (2 Gamma2* gamma_tot (gamma_tot + i w)) with
    Gamma0 = Omega^2 / (2 Gamma2*).
    """
    gt = gamma_tot_detuned(rates)
    return steady_state_slope(rates) * gt / (gt + 1j * np.asarray(omega, dtype=float))


def fm_response_vs_detuning(rates: RateSet, Delta, omega: float):
    """Vectorized :func:`fm_population_response` over an array of detunings."""
    d = np.asarray(Delta, dtype=float)
    g2 = rates.Gamma2star
    g0 = rates.Omega ** 2 * g2 / (2.0 * (g2 * g2 + d * d))
    gt = rates.Gamma1 + rates.gamma_las + 2.0 * g0
    if np.any(gt == 0.0):
        raise SpinDynamicsError("all rates vanish: stationary state undefined")
    slope = rates.gamma_las * (-rates.Omega ** 2 * g2 * d / (g2 * g2 + d * d) ** 2) / gt ** 2
    return slope * gt / (gt + 1j * omega)


def relaxation_rate(rates: RateSet, Delta: float | None = None) -> float:
    """Slowest decay rate (1/s) of the full master equation at fixed detuning.

    Equals the adiabatic ``gamma_tot`` only while Omega << Gamma2*; under
    strong driving the populations relax more slowly than that estimate.
    """
    d = rates.Delta if Delta is None else Delta
    g2, om = rates.Gamma2star, rates.Omega
    gen = np.array([
        [-(rates.Gamma1 + rates.gamma_las), 0.0, -om],
        [0.0, -g2, -d],
        [om, d, -g2],
    ])
    return float(-np.max(np.linalg.eigvals(gen).real))


@dataclass(frozen=True)
class Detuning:
    """Detuning waveform ``offset + amplitude cos(omega t + phase)`` in rad/s."""

    offset: float
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def __call__(self, t):
        return self.offset + self.amplitude * np.cos(self.omega * np.asarray(t) + self.phase)

    @property
    def max_abs(self) -> float:
        return abs(self.offset) + abs(self.amplitude)


@dataclass
class BlochTrajectory:
    t: np.ndarray
    rho_ee: np.ndarray
    rho_eg: np.ndarray

    def state(self, i: int = -1) -> TwoLevelState:
        return TwoLevelState(float(self.rho_ee[i]), complex(self.rho_eg[i]))


def max_step(rates: RateSet, delta: Detuning) -> float:
    limit = 1.0 / rates.Gamma2star
    if delta.max_abs > 0:
        limit = min(limit, 2.0 * np.pi / delta.max_abs)
    return limit / 20.0


def _as_detuning(delta, rates) -> Detuning:
    if delta is None:
        return Detuning(rates.Delta)
    if isinstance(delta, Detuning):
        return delta
    return Detuning(float(delta))


def _steps(t_span, dt):
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise SpinDynamicsError("t_span must be increasing")
    return t0, int(math.ceil((t1 - t0) / dt - 1e-9))


def integrate_bloch(rates: RateSet, delta: Detuning | float | None = None, t_span=(0.0, 1e-6),
                    dt: float | None = None, initial: TwoLevelState | None = None,
                    record_every: int = 1) -> BlochTrajectory:
    """Fixed-step RK4 integration of the full (non-eliminated) master equation.

    ``delta`` is a :class:`Detuning` or a constant; None uses ``rates.Delta``.
    The run covers ``t_span`` in whole steps of ``dt`` (default: the largest
    admissible step) and records every ``record_every``-th state plus the final one. The initial
    state defaults to full polarization (rho_ee = 0, no coherence).
    """
    wave = _as_detuning(delta, rates)
    limit = max_step(rates, wave)
    if dt is None:
        dt = limit
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(dt, limit)
    t0, n = _steps(t_span, dt)
    init = initial or TwoLevelState(0.0, 0j)
    y0 = np.array([init.rho_ee, init.rho_eg.real, init.rho_eg.imag])
    every = max(1, int(record_every))
    out = _kernels.rk4_bloch(y0, t0, dt, n, every, rates.Gamma1, rates.Gamma2star,
                             rates.gamma_las, rates.Omega, wave.offset, wave.amplitude,
                             wave.omega, wave.phase)
    if not np.all(np.isfinite(out)):
        raise IntegrationDiverged("non-finite state in master-equation integration")
    t = t0 + dt * np.minimum(every * np.arange(out.shape[0]), n)
    return BlochTrajectory(t, out[:, 0], out[:, 1] + 1j * out[:, 2])


def integrate_bloch_driven_oscillator(rates: RateSet, delta: Detuning, t_span, dt, *, force: float,
                                      mass: float, omega_m: float, Q: float,
                                      record_every: int = 1,
                                      initial: TwoLevelState | None = None):
    """Spin plus cantilever on one RK4 clock, driven by ``force * (rho_ee - rho_ee(0))``.

    Returns ``(t, rho_ee, x)`` sampled every ``record_every`` steps. The
    oscillator starts at rest; the spin starts at ``initial`` (default: the
    stationary state at the waveform offset).
    """
    limit = max_step(rates, delta)
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(dt, limit)
    t0, n = _steps(t_span, dt)
    init = initial or steady_state(rates.with_(Delta=delta.offset))
    y0 = np.array([init.rho_ee, init.rho_eg.real, init.rho_eg.imag, 0.0, 0.0])
    every = max(1, int(record_every))
    out = _kernels.rk4_bloch_mech(y0, t0, dt, n, every, rates.Gamma1, rates.Gamma2star,
                                  rates.gamma_las, rates.Omega, delta.offset, delta.amplitude,
                                  delta.omega, delta.phase, force, init.rho_ee, mass, omega_m, Q)
    if not np.all(np.isfinite(out)):
        raise IntegrationDiverged("non-finite state in spin-mechanics integration")
    t = t0 + dt * np.minimum(every * np.arange(out.shape[0]), n)
    return t, out[:, 0], out[:, 3]


@dataclass
class TorqueDecomposition:
    """Torque terms along a moment trajectory (N m, lab frame, shape (n, 3)).

    ``tau_total`` is the reaction of the crystal anisotropy, i.e. dL/dt.
    """

    t: np.ndarray
    tau_static: np.ndarray
    tau_mw: np.ndarray
    tau_edh: np.ndarray

    @property
    def tau_total(self) -> np.ndarray:
        return self.tau_static + self.tau_mw + self.tau_edh


def torque_decomposition(t, moments, B0, B1: np.ndarray | Callable | None, gamma_e: float
                         ) -> TorqueDecomposition:
    """Split dL/dt = mu x B0 + mu x B1(t) - (1/gamma_e) dmu/dt.

    ``moments`` is an (n, 3) array on the uniform grid ``t``; ``B1`` is an
    (n, 3) array, a callable of ``t`` returning one, or None for no microwave.
    """
    t = np.asarray(t, dtype=float)
    mu = np.asarray(moments, dtype=float)
    if t.ndim != 1 or t.size < 3:
        raise ValueError("need at least 3 samples for the torque decomposition")
    if mu.shape != (t.size, 3):
        raise ValueError(f"moments must have shape ({t.size}, 3), got {mu.shape}")
    steps = np.diff(t)
    if np.abs(steps - steps[0]).max() > 1e-9 * abs(steps[0]):
        raise ValueError("time grid must be uniform")
    if not np.all(np.isfinite(mu)):
        raise ValueError("moment trajectory must be finite")
    if B1 is None:
        b1 = np.zeros_like(mu)
    elif callable(B1):
        b1 = np.asarray(B1(t), dtype=float)
    else:
        b1 = np.asarray(B1, dtype=float)
    b1 = np.broadcast_to(b1, mu.shape)
    b0 = np.asarray(B0, dtype=float)
    dmu = np.gradient(mu, steps[0], axis=0, edge_order=1)
    return TorqueDecomposition(t, np.cross(mu, b0), np.cross(mu, b1), -dmu / gamma_e)
