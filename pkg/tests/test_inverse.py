import math

import numpy as np
import pytest

from nvtorque.constants import TWO_PI
from nvtorque.inverse import (
    InverseError,
    TorqueModel,
    Unidentifiable,
    fit_field_from_dips,
    fit_polarized_spins,
)
from nvtorque.nvcore import (
    InputError,
    NvParams,
    StaticField,
    eigensolve,
    transition_frequencies,
    transition_pairs_angle,
)
from nvtorque.trace import SignalTrace

P = NvParams()


class TestFieldFit:
    def test_aligned_symmetric_pair(self):
        delta = 30e6
        d = P.D / TWO_PI
        r = fit_field_from_dips(d - delta, d + delta, P)
        assert r.converged
        assert r.B0 == pytest.approx(TWO_PI * delta / abs(P.gamma_e), rel=1e-9)
        assert r.theta == pytest.approx(0.0, abs=1e-4)

    def test_round_trip_operating_point(self):
        field = StaticField.from_angle(0.018, math.radians(70), 0)
        pair = transition_frequencies(eigensolve(P, field, 0))
        r = fit_field_from_dips(pair.f_minus, pair.f_plus, P)
        assert r.converged and r.residual < 1.0
        assert r.B0 == pytest.approx(0.018, rel=1e-3)
        assert math.degrees(r.theta) == pytest.approx(70.0, abs=0.1)

    def test_random_round_trips(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            b, th = rng.uniform(1e-3, 0.1), math.radians(rng.uniform(2, 88))
            fm, fp = transition_pairs_angle(P, b, th)
            r = fit_field_from_dips(float(fm), float(fp), P)
            assert r.converged and r.residual < 1e3
            assert r.B0 == pytest.approx(b, rel=1e-3)
            assert abs(math.degrees(r.theta - th)) < 0.1

    @pytest.mark.parametrize("theta_deg", [30.0, 75.0])
    def test_class_frame_consistency(self, theta_deg):
        # a field referenced to class 2 gives that class the same pair as class 0 would
        field = StaticField.from_angle(0.025, math.radians(theta_deg), 2, P)
        pair = transition_frequencies(eigensolve(P, field, 2))
        r = fit_field_from_dips(pair.f_minus, pair.f_plus, P)
        assert r.B0 == pytest.approx(0.025, rel=1e-3)
        assert math.degrees(r.theta) == pytest.approx(theta_deg, abs=0.1)

    def test_supplement_angle_folds(self):
        fm, fp = transition_pairs_angle(P, 0.02, math.radians(130))
        r = fit_field_from_dips(float(fm), float(fp), P)
        assert math.degrees(r.theta) == pytest.approx(50.0, abs=0.1)

    def test_invariants(self):
        r = fit_field_from_dips(2.80e9, 2.95e9, P)
        assert r.B0 >= 0 and 0 <= r.theta <= math.pi / 2
        if r.converged:
            assert r.residual <= 1e3

    def test_unreachable_pair(self):
        # pair far beyond any field below 1 T with these constants
        r = fit_field_from_dips(1.0e6, 9.0e10, P)
        assert not r.converged
        assert r.residual > 1e3

    def test_order_error(self):
        with pytest.raises(InputError):
            fit_field_from_dips(2.9e9, 2.8e9, P)

    def test_deterministic(self):
        a = fit_field_from_dips(2.75e9, 3.01e9, P)
        b = fit_field_from_dips(2.75e9, 3.01e9, P)
        assert a == b


def synthetic(model, grid, n, noise=0.0, seed=0, unit="deg"):
    y = model.curve(grid, n, unit)
    if noise:
        y = y + noise * np.abs(y).max() * np.random.default_rng(seed).normal(size=y.size)
    return SignalTrace("theta" if model.variable == "theta" else "field", unit, np.asarray(grid, float),
                       {"tau": y}, {"tau": "N m"}, {})


class TestSpinFit:
    model = TorqueModel(P, variable="theta", amplitude=0.018)
    grid = np.linspace(5, 85, 17)

    def test_noise_free_exact(self):
        r = fit_polarized_spins(synthetic(self.model, self.grid, 5e9), self.model)
        assert r.N_fit == pytest.approx(5e9, rel=1e-10)
        assert r.residual <= 1e-10 * 5e9 * np.abs(self.model.per_spin(self.grid, "deg")).max()

    def test_noisy(self):
        r = fit_polarized_spins(synthetic(self.model, self.grid, 5e9, 0.01, seed=2), self.model)
        assert r.N_fit == pytest.approx(5e9, rel=0.03)
        assert r.standard_error > 0

    def test_scaling(self):
        a = fit_polarized_spins(synthetic(self.model, self.grid, 5e9, 0.01, seed=4), self.model)
        tr = synthetic(self.model, self.grid, 5e9, 0.01, seed=4)
        b = fit_polarized_spins(tr.with_channel("tau", 2 * tr["tau"], "N m"), self.model)
        assert b.N_fit == pytest.approx(2 * a.N_fit, rel=1e-12)

    def test_field_variable(self):
        m = TorqueModel(P, variable="field", theta=math.radians(70))
        grid = np.linspace(5, 20, 8)
        r = fit_polarized_spins(synthetic(m, grid, 3e9, unit="mT"), m)
        assert r.N_fit == pytest.approx(3e9, rel=1e-10)

    def test_standard_error_shrinks(self):
        def spread(reps):
            grid = np.tile(self.grid, reps)
            grid.sort()
            grid = grid + np.arange(grid.size) * 1e-9
            errs = [fit_polarized_spins(synthetic(self.model, grid, 5e9, 0.01, seed=s), self.model).standard_error
                    for s in range(20)]
            return np.mean(errs)
        assert spread(4) / spread(1) == pytest.approx(0.5, rel=0.15)

    def test_unidentifiable(self):
        grid = np.array([0.0, 0.0 + 1e-12, 0.0 + 2e-12])
        tr = SignalTrace("theta", "deg", grid, {"tau": np.ones(3)}, {}, {})
        with pytest.raises(Unidentifiable):
            fit_polarized_spins(tr, self.model)

    def test_too_few_points(self):
        with pytest.raises(InputError):
            fit_polarized_spins(synthetic(self.model, self.grid[:2], 5e9), self.model)

    def test_negative_count(self):
        tr = synthetic(self.model, self.grid, 5e9)
        with pytest.raises(InverseError):
            fit_polarized_spins(tr.with_channel("tau", -tr["tau"], "N m"), self.model)

    def test_projection_quantity(self):
        m = TorqueModel(P, variable="theta", quantity="projection")
        r = fit_polarized_spins(synthetic(m, self.grid, 4e9), m)
        assert r.N_fit == pytest.approx(4e9, rel=1e-10)

    def test_bad_model(self):
        with pytest.raises(InputError):
            TorqueModel(P, variable="phi")
