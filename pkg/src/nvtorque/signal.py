"""Forward synthesis of mechanically detected magnetic resonance signals.

Phase convention: the microwave frequency excursion is
``delta_omega(t) = 2 pi fm_depth cos(w t)`` and a displacement
``x(t) = X cos(w t) - Y sin(w t)``, so X is in phase with the modulation and
``X + iY`` is the complex amplitude of the ``exp(i w t)`` component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .constants import TWO_PI
from .mech import CantileverParams, mechanical_susceptibility
from .nvcore import (
    NvParams,
    StaticField,
    eigensolve,
    population_torque_difference,
    transition_frequencies,
)
from .spindyn import (
    Detuning,
    RateSet,
    fm_population_response,
    fm_response_vs_detuning,
    gamma_tot,
    integrate_bloch_driven_oscillator,
    max_step,
)
from .trace import SignalTrace, TraceError

# Rabi rate per sqrt(mW) at the diamond; puts Y = X (gamma_tot = w_m) near 15 dBm
DEFAULT_KAPPA = 1.04e5


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class DriveConfig:
    """Microwave drive. Frequencies in Hz; ``omega_rabi`` in rad/s.

    When ``power_dbm`` is set the Rabi rate is ``kappa * 10**(power_dbm/20)``
    and ``omega_rabi`` is ignored. ``mod_freq=None`` means the cantilever's
    loaded resonance.
    """

    mw_center: float = 2.87e9
    fm_depth: float = 8e6
    mod_freq: float | None = None
    omega_rabi: float = TWO_PI * 1e6
    power_dbm: float | None = None
    kappa: float = DEFAULT_KAPPA
    transition: str = "minus"
    class_index: int = 0

    def __post_init__(self):
        if self.fm_depth < 0:
            raise SignalError("fm_depth must be >= 0")
        if self.mod_freq is not None and not self.mod_freq > 0:
            raise SignalError("mod_freq must be > 0")
        if not self.kappa > 0:
            raise SignalError("kappa must be > 0")
        if self.omega_rabi < 0:
            raise SignalError("omega_rabi must be >= 0")
        if self.transition not in ("minus", "plus"):
            raise SignalError(f"transition must be 'minus' or 'plus', got {self.transition!r}")
        if self.class_index not in range(4):
            raise SignalError("class_index must be 0..3")

    @property
    def rabi(self) -> float:
        if self.power_dbm is None:
            return self.omega_rabi
        return self.kappa * 10.0 ** (self.power_dbm / 20.0)

    @property
    def depth(self) -> float:
        """Frequency excursion in rad/s."""
        return TWO_PI * self.fm_depth

    def modulation(self, cantilever: CantileverParams) -> float:
        """Modulation angular frequency (rad/s)."""
        return TWO_PI * (cantilever.fm if self.mod_freq is None else self.mod_freq)


@dataclass(frozen=True)
class QuadraturePair:
    X: float
    Y: float

    @property
    def complex(self) -> complex:
        return complex(self.X, self.Y)


def transition_force(nv: NvParams, field: StaticField, class_index: int, transition: str,
                     cantilever: CantileverParams, axis: Sequence[float] = (0.0, 1.0, 0.0)) -> float:
    """F_y = (tau_e - tau_g) . axis / le for the whole class (N)."""
    sol = eigensolve(nv, field, class_index)
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    dtau = nv.N_per_class * population_torque_difference(sol, transition)
    return float(dtau @ ax) / cantilever.le


def displacement_response(omega, rates: RateSet, drive: DriveConfig, F_y: float,
                          cantilever: CantileverParams):
    """Complex displacement amplitude delta x[w] (m) for the drive's FM excursion."""
    return fm_population_response(rates, omega) * F_y * mechanical_susceptibility(omega, cantilever) * drive.depth


def quadratures_at_resonance(rates: RateSet, drive: DriveConfig, F_y: float,
                             cantilever: CantileverParams) -> QuadraturePair:
    """Blue-side closed forms of X and Y at the mechanical resonance."""
    wm = cantilever.omega_m
    gt = gamma_tot(rates)
    g0 = rates.Omega ** 2 / (2.0 * rates.Gamma2star)
    common = F_y * cantilever.Q / (2.0 * cantilever.me) * rates.gamma_las * g0 * drive.depth / rates.Gamma2star
    x = common / (wm * gt * (gt * gt + wm * wm))
    y = common / (wm * wm * (gt * gt + wm * wm))
    return QuadraturePair(x, y)


@dataclass(frozen=True)
class SpuriousBackground:
    """Smooth additive displacement background independent of optical pumping.

    Each quadrature is ``amplitude * sum_k a_k cos(2 pi k u + phi_k)`` over
    the normalized sweep coordinate ``u``, with seeded coefficients.
    """

    x_amplitude: float = 0.0
    y_amplitude: float = 0.0
    seed: int = 0
    modes: int = 4

    def evaluate(self, grid) -> tuple[np.ndarray, np.ndarray]:
        grid = np.asarray(grid, dtype=float)
        span = grid[-1] - grid[0] if grid.size > 1 else 1.0
        u = (grid - grid[0]) / span
        rng = np.random.default_rng(self.seed)
        out = []
        for amp in (self.x_amplitude, self.y_amplitude):
            a = rng.normal(size=self.modes) / np.sqrt(self.modes)
            phi = rng.uniform(0, TWO_PI, size=self.modes)
            k = np.arange(1, self.modes + 1)
            out.append(amp * np.cos(TWO_PI * np.outer(u, k) + phi) @ a)
        return out[0], out[1]


def fmmdmr_sweep(nv: NvParams, field: StaticField, rates_base: RateSet, drive: DriveConfig,
                 cantilever: CantileverParams, center_grid, *, classes: Sequence[int] | None = None,
                 transitions: Sequence[str] = ("minus", "plus"),
                 axis: Sequence[float] = (0.0, 1.0, 0.0),
                 background: SpuriousBackground | None = None) -> SignalTrace:
    """X and Y displacement quadratures versus microwave center frequency.

    Every selected transition contributes the detuned linear response with
    ``Delta = 2 pi (f_mw - f_transition)``; contributions add. The Rabi rate
    comes from ``drive``; relaxation rates from ``rates_base``.
    """
    grid = np.asarray(center_grid, dtype=float)
    if grid.size == 0 or (grid.size > 1 and not np.all(np.diff(grid) > 0)):
        raise SignalError("center grid must be non-empty and ascending")
    classes = range(4) if classes is None else classes
    rates = rates_base.with_(Omega=drive.rabi)
    w = drive.modulation(cantilever)
    chi = complex(mechanical_susceptibility(w, cantilever))
    total = np.zeros(grid.shape, dtype=complex)
    lines = []
    for c in classes:
        sol = eigensolve(nv, field, c)
        pair = transition_frequencies(sol)
        for tr in transitions:
            f_tr = pair.f_minus if tr == "minus" else pair.f_plus
            f_y = transition_force(nv, field, c, tr, cantilever, axis)
            resp = fm_response_vs_detuning(rates, TWO_PI * (grid - f_tr), w)
            total += resp * f_y * chi * drive.depth
            lines.append(f"{c}:{tr}:{f_tr:.3f}:{f_y:.6e}")
    x, y = total.real.copy(), total.imag.copy()
    meta = {
        "field_T": ",".join(repr(v) for v in field.lab_vector),
        "omega_rabi_rad_s": repr(rates.Omega),
        "gamma_las_rad_s": repr(rates.gamma_las),
        "fm_depth_Hz": repr(drive.fm_depth),
        "mod_freq_Hz": repr(w / TWO_PI),
        "N_per_class": repr(nv.N_per_class),
        "transitions": ";".join(lines),
    }
    chans = {"X": x, "Y": y}
    if background is not None:
        bx, by = background.evaluate(grid)
        chans = {"X": x + bx, "Y": y + by}
        meta["background"] = f"{background.x_amplitude!r},{background.y_amplitude!r},{background.seed}"
    return SignalTrace("mw_frequency", "Hz", grid, chans, {"X": "m", "Y": "m"}, meta)


def power_scan(rates_base: RateSet, drive: DriveConfig, omega_grid, F_y: float,
               cantilever: CantileverParams, abscissa: tuple[str, str, Sequence[float]] | None = None
               ) -> SignalTrace:
    """Resonant quadratures and Y/X across Rabi rates (rad/s).

    ``abscissa`` optionally relabels the grid, e.g. ``("power", "dBm", values)``.
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    if omega_grid.size > 1 and not np.all(np.diff(omega_grid) > 0):
        raise SignalError("Rabi grid must be ascending")
    xs, ys = [], []
    for om in omega_grid:
        q = quadratures_at_resonance(rates_base.with_(Omega=float(om)), drive, F_y, cantilever)
        xs.append(q.X)
        ys.append(q.Y)
    xs, ys = np.array(xs), np.array(ys)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(xs != 0, ys / np.where(xs != 0, xs, 1.0), np.nan)
    name, unit, values = abscissa or ("omega_rabi", "rad/s", omega_grid)
    chans = {"X": xs, "Y": ys, "ratio": ratio}
    if abscissa is not None:
        chans["omega_rabi"] = omega_grid
    return SignalTrace(name, unit, values, chans,
                       {"X": "m", "Y": "m", "ratio": "", "omega_rabi": "rad/s"},
                       {"F_y_N": repr(F_y), "fm_depth_Hz": repr(drive.fm_depth)})


def demodulate(x, dt: float, ref_freq: float, time_constant: float, t0: float = 0.0) -> QuadraturePair:
    """Software lock-in: mix with ``2cos`` / ``-2sin`` and low-pass (single pole).

    ``x`` is uniformly sampled with step ``dt`` starting at ``t0``. The
    returned value is the filter output averaged over the final reference
    period, which removes the residual 2f ripple.
    """
    x = np.asarray(x, dtype=float)
    period = 1.0 / ref_freq
    duration = x.size * dt
    if duration < 10 * period:
        raise SignalError(f"trace spans {duration / period:.2f} periods; need at least 10")
    if not time_constant > 0:
        raise SignalError("time constant must be positive")
    t = t0 + dt * np.arange(x.size)
    phase = TWO_PI * ref_freq * t
    mixed = np.stack([2.0 * x * np.cos(phase), -2.0 * x * np.sin(phase)])
    alpha = -math.expm1(-dt / time_constant)
    per = max(1, int(round(period / dt)))
    out = []
    for u in mixed:
        zi = [(1.0 - alpha) * u[:per].mean()]
        y, _ = lfilter([alpha], [1.0, alpha - 1.0], u, zi=zi)
        out.append(float(y[-per:].mean()))
    return QuadraturePair(out[0], out[1])


def simulate_quadratures(rates: RateSet, drive: DriveConfig, F_y: float,
                         cantilever: CantileverParams, *, settle_time: float | None = None,
                         window_periods: int = 30, samples_per_period: int = 400
                         ) -> QuadraturePair:
    """Time-domain oracle: Bloch equations -> force -> oscillator -> lock-in.

    The spin detuning is ``rates.Delta + depth cos(w t)``. The run waits
    ``settle_time`` (default nine amplitude decay times ``2Q/w_m``) for the
    mechanical transient, then demodulates ``window_periods`` periods.
    """
    w = drive.modulation(cantilever)
    wave = Detuning(rates.Delta, drive.depth, w)
    period = TWO_PI / w
    dt = max_step(rates, wave)
    steps_per_period = int(math.ceil(period / dt))
    every = max(1, steps_per_period // samples_per_period)
    steps_per_period = every * int(math.ceil(steps_per_period / every))
    dt = period / steps_per_period
    if settle_time is None:
        settle_time = 9.0 * 2.0 * cantilever.Q / cantilever.omega_m
    n_settle = int(math.ceil(settle_time / period))
    t_end = (n_settle + window_periods) * period
    t, _, x = integrate_bloch_driven_oscillator(
        rates, wave, (0.0, t_end), dt, force=F_y, mass=cantilever.me,
        omega_m=cantilever.omega_m, Q=cantilever.Q, record_every=every)
    start = n_settle * (steps_per_period // every)
    tail = x[start:-1]
    return demodulate(tail, dt * every, w / TWO_PI, window_periods * period / 10.0, t0=t[start])


def background_subtraction(trace_on: SignalTrace, trace_off: SignalTrace) -> SignalTrace:
    """Channel-wise ``on - off`` over the channels both traces share."""
    if not trace_on.same_grid(trace_off):
        raise TraceError("traces have different abscissa grids")
    common = [n for n in trace_on.channels if n in trace_off.channels]
    if not common:
        raise TraceError("traces share no channels")
    meta = dict(trace_on.metadata)
    meta["subtracted"] = "laser-off reference"
    return SignalTrace(trace_on.abscissa_name, trace_on.abscissa_unit, trace_on.abscissa.copy(),
                       {n: trace_on[n] - trace_off[n] for n in common},
                       {n: trace_on.units.get(n, "") for n in common}, meta)
