"""Acceptance gate: fifteen criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the
terminal summary) or ``python tests/test_acceptance.py``.
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import numpy as np

from nvtorque.cli import main as cli_main
from nvtorque.constants import HBAR, K_B, TWO_PI
from nvtorque.inverse import TorqueModel, fit_field_from_dips, fit_polarized_spins
from nvtorque.mech import CantileverParams, added_mass, detection_limits, thermal_rms
from nvtorque.nvcore import (
    NvParams,
    StaticField,
    driven_torque_change,
    eigensolve,
    eigenstate_torques,
    odmr_spectrum,
    transition_frequencies,
    transition_pairs_angle,
)
from nvtorque.signal import (
    DriveConfig,
    SpuriousBackground,
    background_subtraction,
    fmmdmr_sweep,
    power_scan,
    quadratures_at_resonance,
    transition_force,
)
from nvtorque.spindyn import RateSet, gamma_tot, integrate_bloch, relaxation_rate, steady_state
from nvtorque.trace import SignalTrace

NV = NvParams()
CANT = CantileverParams()
WM = CANT.omega_m
G2 = NV.Gamma2star
GENERIC = np.array([0.31, 0.52, 0.79])

RESULTS: list[str] = []


def report(number: int, title: str, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def default_rates(omega=TWO_PI * 1e6, gamma_las=NV.gamma_las):
    return RateSet(NV.Gamma1, G2, gamma_las, omega, G2)


def r_squared(x, y):
    coef = np.polyfit(x, y, 1)
    res = y - np.polyval(coef, x)
    return coef, 1.0 - float(res @ res) / float((y - y.mean()) @ (y - y.mean()))


def generic_field(b=0.018):
    return StaticField(b * GENERIC / np.linalg.norm(GENERIC))


def test_01_added_mass():
    ratio = added_mass(14480.0, 2860.0, CANT.me) / CANT.me
    report(1, "added mass", abs(ratio / 24.63 - 1) <= 5e-3, f"m_add = {ratio:.4f} me (target 24.63 +/- 0.5%)")


def test_02_sensitivities():
    f_min, tau_min = detection_limits(CANT)
    formula = math.sqrt(4 * K_B * 300.0 / math.pi * 0.03 / (160.0 * 2860.0))
    ok = (abs(f_min / formula - 1) <= 0.01 and f"{f_min:.1e}" == "1.9e-14"
          and 0.5 <= f_min / 1e-14 <= 2.0 and 0.25 <= tau_min / 1e-18 <= 4.0)
    report(2, "sensitivities", ok, f"F_min = {f_min:.3e} N/rtHz, tau_min = {tau_min:.3e} N m/rtHz")


def test_03_thermal_rms():
    x = thermal_rms(CANT)
    formula = math.sqrt(K_B * 300.0 / 0.03)
    ok = abs(x / formula - 1) <= 0.01 and abs(x / 0.37e-9 - 1) <= 0.01 and abs(x / 0.4e-9 - 1) <= 0.10
    report(3, "thermal rms", ok, f"x_rms = {x * 1e9:.4f} nm")


def test_04_torque_algebra():
    rng = np.random.default_rng(4)
    worst_sum = worst_perp = 0.0
    for _ in range(1000):
        v = rng.normal(size=3)
        field = StaticField(rng.uniform(0, 0.5) * v / np.linalg.norm(v))
        c = int(rng.integers(4))
        sol = eigensolve(NV, field, c)
        tq = eigenstate_torques(sol, field)
        scale = HBAR * abs(NV.gamma_e) * max(field.amplitude, 1e-30)
        total = sum(tq.torques.values())
        worst_sum = max(worst_sum, np.linalg.norm(total) / scale)
        if field.amplitude > 0:
            b = field.vector / field.amplitude
            worst_perp = max(worst_perp, max(abs(t @ b) for t in tq.torques.values()) / scale)
    ok = worst_sum <= 1e-12 and worst_perp <= 1e-12
    report(4, "torque algebra", ok, f"max |sum| = {worst_sum:.1e}, max |tau.B| = {worst_perp:.1e} (relative)")


def test_05_driven_torque_magnitude():
    f10 = StaticField.from_angle(0.010, math.radians(60), 0)
    t10 = np.linalg.norm(driven_torque_change(NV, f10, 0, "minus"))
    f18 = StaticField.from_angle(0.018, math.radians(60), 0)
    tm = np.linalg.norm(driven_torque_change(NV, f18, 0, "minus"))
    tp = np.linalg.norm(driven_torque_change(NV, f18, 0, "plus"))
    ok = 3e-16 <= t10 <= 3e-15 and tm > tp
    report(5, "driven torque magnitude", ok,
           f"|dtau|(10 mT) = {t10:.3e} N m; 18 mT minus {tm:.3e} > plus {tp:.3e}")


def _slope(label, fields):
    vals = []
    for b in fields:
        tq = eigenstate_torques(eigensolve(NV, StaticField.from_angle(b, math.radians(60), 0), 0),
                                StaticField.from_angle(b, math.radians(60), 0))
        vals.append(tq.norms[label])
    return np.polyfit(np.log(fields), np.log(vals), 1)[0]


def test_06_asymptotics():
    field = StaticField.from_angle(0.3, math.radians(60), 0)
    tq = eigenstate_torques(eigensolve(NV, field, 0), field, NV.N_per_class)
    half = tq.norms["-1"] / 2
    r0, rp = tq.norms["0"] / half, tq.norms["+1"] / half
    ens = HBAR * NV.N_per_class * NV.D
    low = np.geomspace(1e-4, 1e-3, 10)
    s_m, s_p, s_0 = _slope("-1", low), _slope("+1", low), _slope("0", low)
    ok = (abs(r0 - 1) <= 0.25 and abs(rp - 1) <= 0.25 and 1 / 3 <= tq.norms["-1"] / ens <= 3
          and abs(s_m - 1) <= 0.1 and abs(s_p - 1) <= 0.1 and abs(s_0 - 2) <= 0.1)
    report(6, "high/low field asymptotics", ok,
           f"|tau0|/(|tau-1|/2) = {r0:.3f}, |tau+1|/(|tau-1|/2) = {rp:.3f}, "
           f"|tau-1|/(hbar N D) = {tq.norms['-1'] / ens:.3f}; slopes {s_m:.3f}, {s_p:.3f}, {s_0:.3f}")


def test_07_steady_state_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        g2 = TWO_PI * 10 ** rng.uniform(6, 7)
        r = RateSet(TWO_PI * 10 ** rng.uniform(3, 4), g2, TWO_PI * 10 ** rng.uniform(3, 4),
                    TWO_PI * 10 ** rng.uniform(5, 6.5), g2)
        # twenty time constants of the slowest mode of the full equations
        t_end = 20.0 / min(gamma_tot(r), relaxation_rate(r))
        traj = integrate_bloch(r, t_span=(0.0, t_end), record_every=1000)
        ss = steady_state(r)
        worst = max(worst, abs(traj.rho_ee[-1] - ss.rho_ee), abs(traj.rho_eg[-1] - ss.rho_eg))
    report(7, "steady state vs integrator", worst <= 1e-6, f"max terminal deviation {worst:.2e}")


def test_08_linear_response_oracle():
    with tempfile.TemporaryDirectory() as tmp:
        code = cli_main(["oracle-check", "--out", tmp, "--format", "json"])
        rec = json.loads((Path(tmp) / "oracle_check.json").read_text())["record"]
    ok = (code == 0 and rec["fm_depth_Hz"] <= G2 / (TWO_PI * 100) * (1 + 1e-12)
          and rec["relative_error_X"] <= 0.02 and rec["relative_error_Y"] <= 0.02)
    report(8, "linear-response oracle", ok,
           f"X err {rec['relative_error_X']:.2%}, Y err {rec['relative_error_Y']:.2%} "
           f"at fm_depth {rec['fm_depth_Hz']:.0f} Hz")


def test_09_quadrature_ratio():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        g2 = TWO_PI * 10 ** rng.uniform(6, 7)
        r = RateSet(TWO_PI * 10 ** rng.uniform(2, 4), g2, TWO_PI * 10 ** rng.uniform(2, 4),
                    TWO_PI * 10 ** rng.uniform(5, 7), g2)
        q = quadratures_at_resonance(r, DriveConfig(), 1e-12, CANT)
        worst = max(worst, abs((q.Y / q.X) / (gamma_tot(r) / WM) - 1))
    omega = np.linspace(TWO_PI * 1e5, TWO_PI * 5e6, 50)
    tr = power_scan(default_rates(), DriveConfig(), omega, 1e-12, CANT)
    (slope, _), r2 = r_squared(omega ** 2, tr["ratio"])
    expect = 1 / (2 * G2 * WM)
    ok = worst <= 1e-12 and abs(slope / expect - 1) <= 1e-3 and r2 > 0.999
    report(9, "quadrature ratio", ok,
           f"max |Y/X / (gamma_tot/w_m) - 1| = {worst:.1e}; slope ratio {slope / expect:.6f}, R^2 = {r2:.6f}")


def test_10_line_shapes():
    # zero crossings at every transition (non-saturating drive keeps lines resolved)
    field = generic_field()
    lines = [(c, transition_frequencies(eigensolve(NV, field, c))) for c in range(4)]
    grid = np.linspace(2.3e9, 3.45e9, 230001)
    x = fmmdmr_sweep(NV, field, default_rates(), DriveConfig(omega_rabi=TWO_PI * 1e5), CANT, grid)["X"]
    crossings = 0
    for _, pair in lines:
        for f0 in (pair.f_minus, pair.f_plus):
            win = np.abs(grid - f0) <= 2e6
            crossings += bool(np.any(np.diff(np.sign(x[win])) != 0))
    # sign flip between minus and plus of one class
    f60 = StaticField.from_angle(0.018, math.radians(60), 0)
    pair = transition_frequencies(eigensolve(NV, f60, 0))
    xs = fmmdmr_sweep(NV, f60, default_rates(), DriveConfig(), CANT,
                      [pair.f_minus + 3e6, pair.f_plus + 3e6], classes=[0])["X"]
    flipped = np.sign(xs[0]) == -np.sign(xs[1])

    def peak(b, theta_deg):
        f = StaticField.from_angle(b, math.radians(theta_deg), 0)
        fm = transition_frequencies(eigensolve(NV, f, 0)).f_minus
        g = fm + np.linspace(-80e6, 80e6, 3201)
        return np.abs(fmmdmr_sweep(NV, f, default_rates(), DriveConfig(), CANT, g,
                                   classes=[0], transitions=["minus"])["X"]).max()

    null_ratio = peak(0.018, 1.0) / peak(0.018, 60.0)
    B = np.linspace(5e-3, 20e-3, 16)
    _, r2 = r_squared(B, np.array([peak(b, 70.0) for b in B]))
    ok = crossings == 8 and flipped and null_ratio < 0.05 and r2 > 0.99
    report(10, "line-shape structure", ok,
           f"{crossings}/8 zero crossings, sign flip {bool(flipped)}, "
           f"peak(1 deg)/peak(60 deg) = {null_ratio:.2e}, R^2(B) = {r2:.5f}")


def test_11_power_scan_maximum():
    drive = DriveConfig(power_dbm=0.0)
    dbm = np.linspace(-10.0, 35.0, 50)
    omega = drive.kappa * 10 ** (dbm / 20)
    f_y = transition_force(NV, StaticField.from_angle(0.018, math.radians(60), 0), 0, "minus", CANT)
    tr = power_scan(default_rates(), drive, omega, f_y, CANT, abscissa=("power", "dBm", dbm))
    i = int(np.argmax(np.abs(tr["X"])))
    report(11, "power-scan maximum", 0 < i < 49, f"|X| peaks at {dbm[i]:.1f} dBm (index {i} of 50)")


def test_12_inverse_fits():
    rng = np.random.default_rng(12)
    worst_b = worst_t = 0.0
    failures = 0
    for _ in range(500):
        b, th = rng.uniform(1e-3, 0.1), math.radians(rng.uniform(2, 88))
        fm, fp = transition_pairs_angle(NV, b, th)
        r = fit_field_from_dips(float(fm), float(fp), NV)
        failures += not (r.converged and r.residual < 1e3)
        worst_b = max(worst_b, abs(r.B0 / b - 1))
        worst_t = max(worst_t, abs(math.degrees(r.theta - th)))
    model = TorqueModel(NV, variable="theta", amplitude=0.018)
    grid = np.linspace(5, 85, 17)
    clean = model.curve(grid, 5e9, "deg")
    noisy = clean + 0.01 * np.abs(clean).max() * np.random.default_rng(1).normal(size=grid.size)
    fit = fit_polarized_spins(SignalTrace("theta", "deg", grid, {"tau": noisy}, {}, {}), model)
    n_err = abs(fit.N_fit / 5e9 - 1)
    ok = failures == 0 and worst_b <= 1e-3 and worst_t <= 0.1 and n_err <= 0.03
    report(12, "inverse fits", ok,
           f"500 fields: max dB0/B0 = {worst_b:.1e}, max dtheta = {worst_t:.1e} deg, "
           f"{failures} failures; N_fit error {n_err:.2%}")


def _minima(pl):
    return int(np.sum((pl[1:-1] < pl[:-2]) & (pl[1:-1] < pl[2:])))


def test_13_odmr_structure():
    grid = np.linspace(2.3e9, 3.45e9, 24001)
    n_generic = _minima(odmr_spectrum(NV, generic_field(), grid)["PL"])
    n_zero = _minima(odmr_spectrum(NV, StaticField((0.0, 0.0, 0.0)), grid)["PL"])
    report(13, "ODMR structure", n_generic == 8 and n_zero == 1,
           f"{n_generic} minima at 18 mT (generic direction), {n_zero} at zero field")


def test_14_background_subtraction():
    grid = np.linspace(2.6e9, 3.2e9, 1201)
    field = generic_field()
    bg = SpuriousBackground(3e-9, 8e-9, seed=14)
    spin = fmmdmr_sweep(NV, field, default_rates(), DriveConfig(), CANT, grid)
    on = fmmdmr_sweep(NV, field, default_rates(), DriveConfig(), CANT, grid, background=bg)
    off = fmmdmr_sweep(NV, field, default_rates(gamma_las=0.0), DriveConfig(), CANT, grid, background=bg)
    diff = background_subtraction(on, off)
    err = max(np.abs(diff[c] - spin[c]).max() / np.abs(spin[c]).max() for c in ("X", "Y"))
    dark = fmmdmr_sweep(NV, field, default_rates(gamma_las=0.0), DriveConfig(), CANT, grid)
    dark_ratio = np.abs(dark["X"]).max() / np.abs(spin["X"]).max()
    ok = err <= 1e-12 and dark_ratio < 1e-3
    report(14, "background subtraction", ok,
           f"recovery error {err:.1e} (relative), laser-off/laser-on peak {dark_ratio:.1e}")


def test_15_determinism():
    config = "seed = 15\n[background]\nx_amplitude = 1e-10\ny_amplitude = 1e-10\n"
    commands = ["odmr", "torque-map", "fmmdmr", "quadratures", "power-scan", "psd", "fit-spins",
                "sensitivity"]
    mismatched = []
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "run.toml"
        cfg.write_text(config)
        for fmt in ("csv", "json"):
            for cmd in commands:
                outs = []
                for rep in ("a", "b"):
                    d = Path(tmp) / rep
                    assert cli_main([cmd, "--config", str(cfg), "--out", str(d), "--format", fmt]) == 0
                    stem = cmd.replace("-", "_")
                    outs.append(((d / f"{stem}.{fmt}").read_bytes(), (d / f"{stem}.meta.json").read_bytes()))
                if outs[0] != outs[1]:
                    mismatched.append(f"{cmd}/{fmt}")
    report(15, "determinism", not mismatched,
           f"{2 * len(commands)} outputs byte-identical" if not mismatched else f"differ: {mismatched}")


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
