import numpy as np
import pytest

from emrelax.bands import (
    BandPartition,
    PeriodicGrid,
    SpectralField,
    besov_norm,
    curl,
    div,
    hybrid_norm,
    transform_forward,
)
from emrelax.model import ModelParams, PressureLaw, enthalpy
from emrelax.relax import (
    InitialLayer,
    convergence_study,
    delta_rho_residual,
    effective_velocity,
    error_norms,
    evaluate_layer,
    fit_slopes,
    layers,
    limit_fields,
    paired_run,
    z_equation_residual,
)
from emrelax.solver import (
    DDState,
    EMStepper,
    InitialSpec,
    SimState,
    StepperConfig,
    make_initial,
)


def params_for(eps=0.2, b_bar=(0.0, 0.0, 1.0)):
    return ModelParams(epsilon=eps, b_bar=b_bar, law=PressureLaw(0.5, 2.0))


@pytest.fixture
def grid():
    return PeriodicGrid(dim=1, n_points=64, length=8.0)


def darcy_state(grid, params, amplitude=1e-2, seed=3):
    """State satisfying the gradient-flow balance with z identically zero."""
    rng = np.random.default_rng(seed)
    x = grid.x[0].ravel()
    rho_p = amplitude * (np.cos(x / grid.length) + 0.5 * np.sin(2 * x / grid.length))
    rho_p -= rho_p.mean()
    rho = params.rho_bar + rho_p
    a_hat = np.fft.fft(rho_p, norm="ortho")
    from emrelax.bands import grad, inv_neg_laplacian

    phi = np.fft.ifft(inv_neg_laplacian(grid, a_hat), norm="ortho").real
    e_long = np.stack(
        [np.fft.ifft(c, norm="ortho").real for c in grad(grid, inv_neg_laplacian(grid, a_hat))]
    )
    h_val = enthalpy(params, rho)
    u = -np.stack(
        [np.fft.ifft(c, norm="ortho").real for c in grad(grid, np.fft.fft(h_val + phi, norm="ortho"))]
    )
    bbar = params.b_bar_vec[:, None]
    b = np.broadcast_to(bbar, (3,) + grid.shape).copy()
    return SimState(grid, params, 0.0, rho, u, e_long, b)


class TestEffectiveVelocity:
    def test_equilibrium_gives_zero(self, grid):
        p = params_for()
        bbar = p.b_bar_vec[:, None]
        state = SimState(
            grid, p, 0.0,
            np.full(grid.shape, p.rho_bar),
            np.zeros((3,) + grid.shape),
            np.zeros((3,) + grid.shape),
            np.broadcast_to(bbar, (3,) + grid.shape).copy(),
        )
        assert np.max(np.abs(effective_velocity(state).z)) == 0.0

    def test_darcy_configuration_gives_zero(self, grid):
        # u parallel to b_bar kills the eps-term: gradient fields with b_bar=(1,0,0)
        p = params_for(b_bar=(1.0, 0.0, 0.0))
        state = darcy_state(grid, p)
        z = effective_velocity(state).z
        assert np.max(np.abs(z)) <= 1e-13

    def test_dual_path_physical_vs_spectral(self, grid, rng):
        from emrelax.bands import grad

        p = params_for()
        state, _ = make_initial(grid, p, InitialSpec(amplitude=1e-2, seed=8))
        z_phys = effective_velocity(state).z
        # spectral-space assembly of the same quantity
        n_hat = np.fft.fft(enthalpy(p, state.rho), norm="ortho")
        z_hat = (
            np.fft.fft(state.u, axis=-1, norm="ortho")
            + grad(grid, n_hat)
            + np.fft.fft(state.e_field, axis=-1, norm="ortho")
            + p.epsilon * np.fft.fft(np.cross(state.u, p.b_bar_vec[:, None], axis=0), axis=-1, norm="ortho")
        )
        z_spec = np.fft.ifft(z_hat, axis=-1, norm="ortho").real
        assert np.max(np.abs(z_phys - z_spec)) <= 1e-10 * max(np.max(np.abs(z_phys)), 1e-12)


class TestInitialLayer:
    def test_layer_values(self, grid):
        p = params_for(eps=0.3)
        state, _ = make_initial(grid, p, InitialSpec(amplitude=1e-2, seed=5))
        layer = layers(p, state)
        at0 = evaluate_layer(layer, 0.0)
        assert np.array_equal(at0["z_L"], layer.z0)
        t_half = p.epsilon**2 * np.log(2.0)
        half = evaluate_layer(layer, t_half)
        assert np.allclose(half["z_L"], 0.5 * layer.z0, rtol=1e-14)
        assert np.allclose(half["u_L"], 0.5 * state.u, rtol=1e-14)

    def test_z0_matches_original_scale_combination(self, grid):
        # z0 = u0/eps + grad h(rho0) + E0 + u0 x b_bar (u0 the original-scale data)
        from emrelax.bands import grad

        p = params_for(eps=0.1)
        state, _ = make_initial(grid, p, InitialSpec(amplitude=1e-3, seed=6, prepared="ill"))
        layer = layers(p, state)
        u0 = p.epsilon * state.u
        n_hat = np.fft.fft(enthalpy(p, state.rho), norm="ortho")
        grad_h = np.fft.ifft(grad(grid, n_hat), axis=-1, norm="ortho").real
        expected = u0 / p.epsilon + grad_h + state.e_field + np.cross(u0, p.b_bar_vec[:, None], axis=0)
        assert np.max(np.abs(layer.z0 - expected)) <= 1e-12

    def test_l1_time_integral_arithmetic(self):
        # int_0^inf exp(-t/eps^2) = eps^2: the layer L1 norm carries eps^2 |z0|
        eps = 0.25
        ts = np.linspace(0, 50 * eps**2, 100001)
        quad = np.trapezoid(np.exp(-ts / eps**2), ts)
        assert quad == pytest.approx(eps**2, rel=1e-6)

    def test_exactness_of_exponential(self):
        layer = InitialLayer(epsilon=0.2, z0=np.ones((3, 4)), u0_over_eps=np.ones((3, 4)))
        for t in (0.0, 0.01, 0.5, 3.0):
            val = layer.z_at(t)
            assert np.max(np.abs(val * np.exp(t / 0.04) - layer.z0)) <= 1e-12
            # semigroup property of the closed form
            assert np.allclose(layer.z_at(t + 0.1), np.exp(-0.1 / 0.04) * layer.z_at(t), rtol=1e-14)


class TestLimitFields:
    def test_equilibrium_all_zero(self, grid):
        p = params_for()
        dd = DDState(grid, p, 0.0, np.full(grid.shape, p.rho_bar), np.zeros(grid.shape))
        lim = limit_fields(dd, p)
        assert np.max(np.abs(lim.u_star)) == 0.0
        assert np.max(np.abs(lim.e_star)) == 0.0
        assert np.max(np.abs(lim.b_one_star)) == 0.0

    def test_generic_state_constraints(self, grid):
        p = params_for()
        _, dd = make_initial(grid, p, InitialSpec(amplitude=1e-2, seed=12))
        lim = limit_fields(dd, p)
        e_hat = np.fft.fft(lim.e_star, axis=-1, norm="ortho")
        rhs = np.fft.fft(p.rho_bar - dd.rho_star, norm="ortho")
        mask = grid.dealias_mask
        assert np.max(np.abs(div(grid, e_hat) - rhs * mask)) <= 1e-12
        assert np.max(np.abs(curl(grid, e_hat))) <= 1e-12

    def test_b_one_star_vanishes_in_1d(self, grid):
        # longitudinal rho* u* has no curl when fields vary along x only
        p = params_for()
        _, dd = make_initial(grid, p, InitialSpec(amplitude=1e-2, seed=12))
        lim = limit_fields(dd, p)
        assert np.max(np.abs(lim.b_one_star)) <= 1e-14

    def test_b_one_star_2d_poisson_identity(self):
        # -Laplace(B1) = curl(rho* u*) on a 2d grid
        grid = PeriodicGrid(dim=2, n_points=32, length=2.0)
        p = params_for()
        rng = np.random.default_rng(3)
        noise = rng.standard_normal(grid.shape)
        a_hat = np.fft.fftn(noise, norm="ortho") * grid.dealias_mask
        a_hat[grid.k_norm == 0] = 0.0
        a_hat *= 1e-2 / np.max(np.abs(np.fft.ifftn(a_hat, norm="ortho").real))
        rho = p.rho_bar + np.fft.ifftn(a_hat, norm="ortho").real
        dd = DDState(grid, p, 0.0, rho, np.zeros(grid.shape))
        lim = limit_fields(dd, p)
        assert np.max(np.abs(lim.b_one_star)) > 0
        b1_hat = np.fft.fftn(lim.b_one_star, axes=(-2, -1), norm="ortho")
        pu_hat = np.fft.fftn(rho * lim.u_star, axes=(-2, -1), norm="ortho")
        lhs = grid.k_sq[None, ...] * b1_hat
        rhs = -curl(grid, pu_hat)
        scale = np.max(np.abs(rhs))
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale

    def test_mean_mismatch_rejected(self, grid):
        p = params_for()
        dd = DDState(grid, p, 0.0, np.full(grid.shape, p.rho_bar + 0.1), np.zeros(grid.shape))
        with pytest.raises(ValueError):
            limit_fields(dd, p)


class TestErrorNorms:
    def test_matched_trajectories_vanish(self, grid):
        # identical equilibrium trajectories carry no layer: every norm is 0
        p = params_for()
        bbar = p.b_bar_vec[:, None]
        em = SimState(
            grid, p, 0.0,
            np.full(grid.shape, p.rho_bar),
            np.zeros((3,) + grid.shape),
            np.zeros((3,) + grid.shape),
            np.broadcast_to(bbar, (3,) + grid.shape).copy(),
        )
        dd = DDState(grid, p, 0.0, em.rho.copy(), np.zeros(grid.shape))
        times = [0.0, 0.05, 0.1]
        norms = error_norms(
            (times, [em] * 3), (times, [dd] * 3), p, BandPartition(grid, p.epsilon)
        )
        for key, val in norms.items():
            assert val <= 1e-13, key

    def test_constant_band_discrepancy(self, grid):
        p = params_for(b_bar=(1.0, 0.0, 0.0))
        em = darcy_state(grid, p)
        dd = DDState(grid, p, 0.0, em.rho.copy(), np.zeros(grid.shape))
        # inject a single-band density discrepancy d into the EM track
        rng = np.random.default_rng(9)
        noise = np.fft.fft(rng.standard_normal(grid.shape), norm="ortho")
        d_hat = noise * grid.band_mask(1)
        d = 1e-4 * np.fft.ifft(d_hat, norm="ortho").real
        d -= d.mean()
        em2 = SimState(grid, p, 0.0, em.rho + d, em.u, em.e_field, em.b_field)
        horizon, n = 0.4, 8
        times = [i * horizon / n for i in range(n + 1)]
        part = BandPartition(grid, p.epsilon)
        norms = error_norms(
            (times, [em2] * (n + 1)), (times, [dd] * (n + 1)), p, part
        )
        d_field = transform_forward(grid, d)
        assert norms["drho_sup_B1/2"] == pytest.approx(besov_norm(d_field, part, 0.5), rel=1e-10)
        assert norms["drho_L2t_B1/2,3/2"] == pytest.approx(
            np.sqrt(horizon) * hybrid_norm(d_field, 0.5, 1.5), rel=1e-10
        )

    def test_mismatched_time_grids_rejected(self, grid):
        p = params_for()
        em = darcy_state(grid, p)
        dd = DDState(grid, p, 0.0, em.rho.copy(), np.zeros(grid.shape))
        with pytest.raises(ValueError):
            error_norms(([0.0, 0.1], [em, em]), ([0.0, 0.2], [dd, dd]), p, BandPartition(grid, 0.2))


class TestSlopeFit:
    def test_constant_errors_slope_zero(self):
        eps = [0.4, 0.2, 0.1, 0.05]
        rows = [{"norms": {"x": 3.0}} for _ in eps]
        fit = fit_slopes(eps, rows)
        assert fit["x"]["slope"] == pytest.approx(0.0, abs=1e-12)

    def test_linear_errors_slope_one(self):
        eps = [0.4, 0.2, 0.1, 0.05]
        rows = [{"norms": {"x": 7.0 * e}} for e in eps]
        fit = fit_slopes(eps, rows)
        assert fit["x"]["slope"] == pytest.approx(1.0, abs=1e-10)
        assert fit["x"]["stderr"] <= 1e-10

    def test_descending_required(self, grid):
        p = params_for()
        with pytest.raises(ValueError):
            convergence_study(grid, p, InitialSpec(), [0.1, 0.2, 0.4])
        with pytest.raises(ValueError):
            convergence_study(grid, p, InitialSpec(), [0.4, 0.2])


class TestPairedRun:
    def test_small_study_norms_finite_and_scale(self, grid):
        # a coarse two-epsilon comparison: every norm shrinks with epsilon
        p = params_for()
        ispec = InitialSpec(bands=(-1, 1), amplitude=1e-3, seed=14)
        rows = {}
        for eps in (0.4, 0.1):
            cfg = StepperConfig(dt=min(1e-3, eps**2 / 5), t_end=0.5)
            rows[eps] = paired_run(grid, p.with_epsilon(eps), ispec, cfg)
        for key in rows[0.4]["norms"]:
            big, small = rows[0.4]["norms"][key], rows[0.1]["norms"][key]
            assert np.isfinite(big) and np.isfinite(small)
            assert big >= 0 and small >= 0
        assert rows[0.1]["norms"]["z_minus_zL_L2t_B1/2"] < rows[0.4]["norms"]["z_minus_zL_L2t_B1/2"]

    def test_delta_b_equals_modified_in_1d(self, grid):
        # B^{1,*} = 0 in 1D3V, so the two magnetic error norms coincide
        p = params_for(eps=0.2)
        cfg = StepperConfig(dt=1e-3, t_end=0.2)
        row = paired_run(grid, p, InitialSpec(amplitude=1e-3, seed=14), cfg)
        assert row["norms"]["dB_L2t_B3/2,1/2"] == pytest.approx(
            row["norms"]["dBmod_L2t_B3/2,1/2"], rel=1e-12
        )


class TestResiduals:
    def make_snapshots(self, grid, p, dt, n_keep=3, t_settle=0.02, amplitude=1e-3):
        cfg = StepperConfig(dt=dt, t_end=dt)
        em, dd = make_initial(grid, p, InitialSpec(amplitude=amplitude, seed=17))
        layer = layers(p, em)
        from emrelax.solver import DDStepper, _cached_stepper

        em_st = _cached_stepper(EMStepper, grid, p, cfg)
        dd_st = _cached_stepper(DDStepper, grid, p, cfg)
        z = em_st.pack(em)
        a = np.fft.fft(dd.rho_star - p.rho_bar, norm="ortho")
        n_settle = int(round(t_settle / dt))
        ems, dds = [], []
        for i in range(1, n_settle + n_keep + 1):
            z = em_st.step_modes(z)
            a = dd_st.step_modes(a)
            if i > n_settle:
                t = i * dt
                ems.append(em_st.unpack(z, t))
                from emrelax.bands import inv_neg_laplacian

                rho_star = p.rho_bar + np.fft.ifft(a, norm="ortho").real
                phi = np.fft.ifft(inv_neg_laplacian(grid, a), norm="ortho").real
                dds.append(DDState(grid, p, t, rho_star, phi))
        return ems, dds, layer

    def test_z_equation_residual_small(self, grid):
        p = params_for(eps=0.2)
        dt = 1e-4
        ems, _, _ = self.make_snapshots(grid, p, dt)
        out = z_equation_residual(ems, dt)
        assert out["relative"] <= 1e-3

    def test_delta_rho_residual_small(self, grid):
        p = params_for(eps=0.2)
        dt = 1e-4
        ems, dds, layer = self.make_snapshots(grid, p, dt)
        out = delta_rho_residual(ems, dds, layer, dt)
        assert out["relative"] <= 1e-3
