import numpy as np
import pytest
import scipy.linalg as sla

from conftest import ref_params

from darkbell import qops
from darkbell.analyze import (
    ErrorFit,
    SweepGrid,
    fidelity,
    fit_error_model,
    steady_error_cell,
    sweep_couplings,
    sweep_params,
    trace_distance,
)
from darkbell.evolve import SteadyStateCriteria, initial_state, steady_state
from darkbell.qops import HilbertSpec
from darkbell.scheme import build_eliminated_generator


class TestFidelity:
    def test_dark_state(self, small_spec):
        assert fidelity(qops.dark_state_dm(small_spec), small_spec) == pytest.approx(1.0)

    def test_ground_pair_any_motion(self, small_spec):
        for n in (0, 3):
            ket = qops.basis_ket(small_spec, "gg", n)
            assert fidelity(np.outer(ket, ket.conj()), small_spec) == pytest.approx(0.0, abs=1e-14)

    def test_equal_bell_mixture(self, small_spec):
        minus = qops.bell_minus_ket(small_spec, 0)
        plus = (qops.basis_ket(small_spec, "ge", 0) + qops.basis_ket(small_spec, "eg", 0)) / np.sqrt(2)
        rho = 0.5 * (np.outer(minus, minus.conj()) + np.outer(plus, plus.conj()))
        assert fidelity(rho, small_spec) == pytest.approx(0.5)

    def test_linear_in_state(self, small_spec, rng):
        dim = small_spec.dim
        mats = rng.standard_normal((2, dim, dim)) + 1j * rng.standard_normal((2, dim, dim))
        r1, r2 = (m @ m.conj().T for m in mats)
        a, b = 0.25, 0.75
        combined = fidelity(a * r1 + b * r2, small_spec)
        assert combined == pytest.approx(a * fidelity(r1, small_spec) + b * fidelity(r2, small_spec))

    def test_invariant_under_motional_unitary(self, small_spec, rng):
        # fidelity traces out motion, so a motional rotation cannot move it
        n = small_spec.n_motional
        herm = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        herm = herm + herm.conj().T
        u = qops.embed_motion_op(small_spec, sla.expm(1j * herm))
        rho = qops.dark_state_dm(small_spec)
        rho = 0.5 * rho + 0.5 * np.outer(
            qops.basis_ket(small_spec, "ge", 2), qops.basis_ket(small_spec, "ge", 2).conj()
        )
        rotated = u @ rho @ u.conj().T
        assert fidelity(rotated, small_spec) == pytest.approx(fidelity(rho, small_spec), abs=1e-12)

    def test_density_state_carries_spec(self, small_spec):
        assert fidelity(initial_state(small_spec, "dark")) == pytest.approx(1.0)
        with pytest.raises(ValueError, match="spec"):
            fidelity(qops.dark_state_dm(small_spec))


class TestTraceDistance:
    def test_orthogonal_pure_states(self, small_spec):
        a = qops.dark_state_dm(small_spec)
        ket = qops.basis_ket(small_spec, "gg", 0)
        b = np.outer(ket, ket.conj())
        assert trace_distance(a, b) == pytest.approx(1.0)
        assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-14)


class TestSweep:
    def test_single_cell_matches_steady_state(self):
        spec = HilbertSpec(2, 5)
        p = ref_params(gamma_s=200.0, h_r=500.0, xi=0.1)
        crit = SteadyStateCriteria(t_cap=5e-3)
        grid = sweep_couplings([26e3], [20e3], p, spec, criteria=crit, dt=1e-6)
        res = steady_state(
            build_eliminated_generator(p, spec), initial_state(spec, "gg"),
            criteria=crit, dt=1e-6,
        )
        assert grid.error[0, 0] == pytest.approx(1.0 - fidelity(res.state), abs=1e-15)
        assert grid.converged[0, 0] == res.converged
        assert grid.valid[0, 0] == (not res.series.truncation_violated)

    def test_order_independent_cells(self):
        spec = HilbertSpec(2, 4)
        p = ref_params(gamma_s=200.0, h_r=500.0, xi=0.1)
        crit = SteadyStateCriteria(t_cap=2e-3)
        grid = sweep_params(p, spec, "omega", [20e3, 26e3], "h_r", [100.0, 500.0],
                            criteria=crit, dt=1e-6)
        # evaluating the same cells standalone, in reverse, is bit-identical
        for i, omega in enumerate([20e3, 26e3]):
            for j, h_r in enumerate([100.0, 500.0]):
                cell = steady_error_cell(p, spec, {"omega": omega, "h_r": h_r},
                                         criteria=crit, dt=1e-6)
                assert cell[0] == grid.error[i, j]

    def test_axis_validation(self, small_spec):
        p = ref_params()
        with pytest.raises(ValueError, match="sweep"):
            sweep_params(p, small_spec, "bogus", [1.0], "h_r", [1.0])
        with pytest.raises(ValueError, match="differ"):
            sweep_params(p, small_spec, "h_r", [1.0], "h_r", [2.0])

    def test_grid_shape_validation(self):
        with pytest.raises(ValueError, match="shape"):
            SweepGrid("a", np.array([1.0]), "b", np.array([1.0, 2.0]),
                      np.zeros((2, 2)), np.zeros((1, 2), bool), np.zeros((1, 2), bool))


class TestErrorFit:
    def test_exact_linear_data(self):
        a, b = 2e-4, 6e-4
        samples = [(h, g, a * h + b * g) for h in (1.0, 10.0, 100.0) for g in (0.1, 1.0, 10.0)]
        fit = fit_error_model(samples)
        assert fit.a == pytest.approx(a, rel=1e-10)
        assert fit.b == pytest.approx(b, rel=1e-10)
        assert np.abs(fit.residuals).max() < 1e-15

    def test_zero_rates_at_origin(self):
        fit = fit_error_model([(0.0, 0.0, 0.0), (1.0, 0.0, 3e-4), (0.0, 1.0, 5e-4)])
        # intercept-free by construction: the origin sample is fit exactly
        assert fit.residuals[0] == pytest.approx(0.0, abs=1e-15)

    def test_degenerate_design_rejected(self):
        with pytest.raises(ValueError, match="span"):
            fit_error_model([(1.0, 2.0, 0.1), (2.0, 4.0, 0.2), (3.0, 6.0, 0.3)])
        with pytest.raises(ValueError, match="3 samples"):
            fit_error_model([(1.0, 2.0, 0.1), (2.0, 3.0, 0.2)])

    @pytest.mark.slow
    def test_fitted_slope_matches_heating_response(self):
        # steady-state runs as the oracle: the fitted h_r coefficient must
        # agree with the direct finite difference between heating rates
        spec = HilbertSpec(2, 12)
        crit = SteadyStateCriteria(t_cap=0.05)
        samples = []
        errs = {}
        for h_r in (1.0, 10.0, 100.0):
            for gamma_s in (0.1, 1.0, 10.0):
                cell = steady_error_cell(
                    ref_params(h_r=h_r, gamma_s=gamma_s, xi=0.1), spec, {},
                    criteria=crit, dt=1e-6,
                )
                samples.append((h_r, gamma_s, cell[0]))
                errs[(h_r, gamma_s)] = cell[0]
        fit = fit_error_model(samples)
        direct_slope = (errs[(100.0, 1.0)] - errs[(10.0, 1.0)]) / 90.0
        assert fit.a == pytest.approx(direct_slope, rel=0.3)
