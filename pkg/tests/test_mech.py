import math

import numpy as np
import pytest
from scipy.integrate import quad

from nvtorque.constants import HBAR, K_B, TWO_PI
from nvtorque.mech import (
    CantileverParams,
    MechanicsError,
    added_mass,
    detection_limits,
    force_to_displacement_at_resonance,
    gradient_force,
    loaded_frequency,
    mechanical_susceptibility,
    mode_shape,
    thermal_psd,
    thermal_rms,
    thermal_spectrum,
    torque_from_displacement,
    torque_to_force,
)

C = CantileverParams()


def test_defaults():
    assert (C.L, C.w, C.t) == (350e-6, 32.5e-6, 1e-6)
    assert (C.f0, C.fm, C.Q, C.km, C.me, C.T_bath) == (14480.0, 2860.0, 160.0, 0.03, 1e-11, 300.0)
    assert C.le == pytest.approx(C.L / 1.875, rel=1e-6)
    assert C.le == pytest.approx(190e-6, rel=0.03)


def test_invalid():
    with pytest.raises(MechanicsError):
        CantileverParams(fm=2e4)
    with pytest.raises(MechanicsError):
        CantileverParams(Q=-1)


class TestAddedMass:
    def test_unloaded(self):
        assert added_mass(14480, 14480, 1e-11) == 0

    def test_reference_values(self):
        assert added_mass(14480, 2860, 1e-11) == pytest.approx(24.63e-11, rel=5e-3)
        assert added_mass(14480, 2860, 1e-11) / 1e-11 == pytest.approx(25, rel=0.05)

    def test_half_frequency(self):
        assert added_mass(1000.0, 500.0, 2.0) == pytest.approx(6.0, rel=1e-15)

    def test_negative_mass(self):
        with pytest.raises(MechanicsError):
            added_mass(1000.0, 1001.0, 1.0)

    @pytest.mark.parametrize("ratio", [0.0, 0.3, 5.0, 24.63, 300.0])
    def test_roundtrip(self, ratio):
        fm = loaded_frequency(14480.0, 1e-11, ratio * 1e-11)
        assert added_mass(14480.0, fm, 1e-11) == pytest.approx(ratio * 1e-11, rel=1e-12, abs=1e-24)


class TestLimits:
    def test_reference_values(self):
        f_min, tau_min = detection_limits(C)
        direct = math.sqrt(4 * K_B * 300 / math.pi * 0.03 / (160 * 2860))
        assert f_min == pytest.approx(direct, rel=1e-12)
        assert f_min == pytest.approx(1.9e-14, rel=0.03)
        assert tau_min == pytest.approx(f_min * C.le, rel=1e-12)
        assert tau_min == pytest.approx(3.5e-18, rel=0.03)

    def test_zero_temperature(self):
        assert detection_limits(CantileverParams(T_bath=0.0)) == (0.0, 0.0)

    def test_scaling(self):
        f1, _ = detection_limits(C)
        f2, _ = detection_limits(CantileverParams(T_bath=600.0))
        f3, _ = detection_limits(CantileverParams(Q=320.0))
        assert f2 / f1 == pytest.approx(math.sqrt(2), rel=1e-12)
        assert f3 / f1 == pytest.approx(1 / math.sqrt(2), rel=1e-12)


class TestSusceptibility:
    wm = TWO_PI * 2860

    def test_static(self):
        assert mechanical_susceptibility(0.0, C) == pytest.approx(1 / (C.me * self.wm ** 2), rel=1e-14)

    def test_resonance(self):
        chi = mechanical_susceptibility(self.wm, C)
        assert abs(chi) == pytest.approx(C.Q / (C.me * self.wm ** 2), rel=1e-12)
        assert abs(chi.real) < 1e-12 * abs(chi)
        assert np.angle(chi) == pytest.approx(-np.pi / 2, abs=1e-12)

    def test_double_frequency(self):
        mag = abs(mechanical_susceptibility(2 * self.wm, C))
        base = 1 / (C.me * self.wm ** 2)
        assert base / 3.2 <= mag <= base / 2.9

    def test_conjugate_symmetry(self):
        w = np.linspace(0, 5 * self.wm, 101)
        assert np.allclose(mechanical_susceptibility(-w, C), np.conj(mechanical_susceptibility(w, C)),
                           rtol=1e-15, atol=0)


class TestThermal:
    def test_rms(self):
        assert thermal_rms(C) == pytest.approx(math.sqrt(K_B * 300 / 0.03), rel=1e-14)
        assert thermal_rms(C) == pytest.approx(0.37e-9, rel=0.01)
        assert thermal_rms(C) == pytest.approx(0.4e-9, rel=0.1)

    def test_equipartition(self):
        fm = C.fm
        parts = [(0, 0.9 * fm), (0.9 * fm, fm), (fm, 1.1 * fm), (1.1 * fm, 100 * fm)]
        total = sum(quad(thermal_psd, a, b, args=(C, False), limit=400, epsabs=0)[0] for a, b in parts)
        total += quad(thermal_psd, 100 * fm, np.inf, args=(C, False))[0]
        assert total == pytest.approx(thermal_rms(C) ** 2, rel=0.02)

    def test_peak(self):
        grid = np.linspace(1000, 5000, 4001)
        tr = thermal_spectrum(C, grid)
        assert abs(grid[np.argmax(tr["S_x"])] - C.fm) <= grid[1] - grid[0]
        assert np.allclose(tr["S_x"] - tr["S_thermal"], C.noise_floor)


class TestConversions:
    def test_torque_to_force(self):
        assert torque_to_force(1e-15, 190e-6) == pytest.approx(5.263e-12, rel=1e-3)
        assert torque_to_force(0.0, 190e-6) == 0

    def test_torque_from_displacement(self):
        tau = torque_from_displacement(0.2e-9, C)
        assert tau == pytest.approx(0.03 * C.le * 0.2e-9 / 160, rel=1e-14)
        assert tau == pytest.approx(7.1e-18, rel=0.03)
        assert torque_from_displacement(0.0, C) == 0

    @pytest.mark.parametrize("tau", [1e-18, 3e-16, 2e-15])
    def test_roundtrip(self, tau):
        x = force_to_displacement_at_resonance(torque_to_force(tau, C.le), C)
        assert torque_from_displacement(x, C) == pytest.approx(tau, rel=1e-12)

    def test_gradient_force_is_minor(self):
        from nvtorque.nvcore import NvParams, StaticField, driven_torque_change, eigensolve, moment_change
        p = NvParams()
        f = StaticField.from_angle(0.010, np.radians(60), 0)
        dmu = p.N_per_class * np.linalg.norm(moment_change(eigensolve(p, f, 0), "minus"))
        fg = gradient_force(dmu, 1.0)
        assert 1e-15 < fg < 1e-13
        ftorque = torque_to_force(np.linalg.norm(driven_torque_change(p, f, 0, "minus")), C.le)
        assert ftorque > 10 * fg
        assert dmu == pytest.approx(0.5 * p.N_per_class * HBAR * abs(p.gamma_e), rel=0.1)


class TestModeShape:
    def test_ends(self):
        assert mode_shape(0.0, C) == pytest.approx(0.0, abs=1e-15)
        assert mode_shape(C.L, C) == pytest.approx(1.0, rel=1e-14)

    def test_monotone(self):
        w = mode_shape(np.linspace(0, C.L, 100), C)
        assert np.all(np.diff(w) > 0)

    def test_domain(self):
        with pytest.raises(MechanicsError):
            mode_shape(-1e-6, C)
