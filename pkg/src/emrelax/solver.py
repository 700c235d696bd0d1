"""Pseudo-spectral time integration on the periodic torus.

Three integrators share one backbone:

* the nonlinear rescaled Euler-Maxwell system in primitive perturbation
  variables (rho - rho_bar, u, E, B - b_bar),
* the drift-diffusion limit in the density perturbation, and
* the linearized system (through the exact per-mode propagators, used as a
  cross-check against the symbol module).

The stiff linear part (friction ~1/eps^2, curls ~1/eps, pressure and Lorentz
coupling) is integrated exactly mode by mode; the quadratic residual terms are
advanced with a second-order exponential two-stage rule and 2/3-dealiased
products.  Time-step limits therefore come from advection alone, uniformly in
epsilon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .bands import (
    BandPartition,
    PeriodicGrid,
    SpectralField,
    div,
    grad,
    inv_neg_laplacian,
    project_div_free,
    transform_forward,
)
from .model import ModelParams, enthalpy, pressure_potential

__all__ = [
    "VacuumError",
    "CFLError",
    "SimState",
    "DDState",
    "StepperConfig",
    "InitialSpec",
    "EMStepper",
    "DDStepper",
    "step_em",
    "step_dd",
    "make_initial",
    "run",
    "TrajectoryRecord",
    "gauss_residual",
    "divb_residual",
    "physical_energy",
    "friction_power",
]


class VacuumError(RuntimeError):
    """Density reached the vacuum; the barotropic model left its domain."""


class CFLError(RuntimeError):
    """Advective stability limit violated for the explicit nonlinear terms."""


def _fftn(grid, arr):
    return np.fft.fftn(arr, axes=tuple(range(-grid.dim, 0)), norm="ortho")


def _ifftn_real(grid, arr):
    return np.fft.ifftn(arr, axes=tuple(range(-grid.dim, 0)), norm="ortho").real


def _volume(grid: PeriodicGrid) -> float:
    return (2.0 * math.pi * grid.length) ** grid.dim


def _mean_integral(grid, phys) -> float:
    return float(np.mean(phys) * _volume(grid))


def hermitian_symmetrize(grid: PeriodicGrid, coeffs: np.ndarray) -> np.ndarray:
    """Project onto the coefficients of a real field: c(-k) = conj(c(k))."""
    out = coeffs
    for axis in range(-grid.dim, 0):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return 0.5 * (coeffs + np.conj(out))


@dataclass
class SimState:
    """Nonlinear Euler-Maxwell fields on the grid (physical samples)."""

    grid: PeriodicGrid
    params: ModelParams
    time: float
    rho: np.ndarray
    u: np.ndarray
    e_field: np.ndarray
    b_field: np.ndarray

    def validate(self):
        if np.min(self.rho) <= 0.0:
            raise VacuumError(f"min(rho) = {np.min(self.rho):.3e} <= 0 at t = {self.time}")
        mean = float(np.mean(self.rho))
        if abs(mean - self.params.rho_bar) > 1e-10 * max(1.0, self.params.rho_bar):
            raise ValueError(
                f"torus neutrality violated: mean(rho) = {mean!r} != rho_bar"
            )

    def copy(self) -> "SimState":
        return SimState(
            self.grid,
            self.params,
            self.time,
            self.rho.copy(),
            self.u.copy(),
            self.e_field.copy(),
            self.b_field.copy(),
        )

    def perturbation_fields(self, variable: str = "rho") -> tuple:
        """(a, u, E, H) as SpectralFields; a is rho-rho_bar or the enthalpy."""
        if variable == "rho":
            a = self.rho - self.params.rho_bar
        elif variable == "enthalpy":
            a = enthalpy(self.params, self.rho)
        else:
            raise ValueError(f"unknown diagnostic variable {variable!r}")
        g = self.grid
        return (
            transform_forward(g, a),
            transform_forward(g, self.u),
            transform_forward(g, self.e_field),
            transform_forward(g, self.b_field - self.params.b_bar_vec[:, None].reshape((3,) + (1,) * g.dim)),
        )


@dataclass
class DDState:
    """Drift-diffusion fields: density and the zero-mean potential."""

    grid: PeriodicGrid
    params: ModelParams
    time: float
    rho_star: np.ndarray
    phi_star: np.ndarray

    def validate(self):
        if np.min(self.rho_star) <= 0.0:
            raise VacuumError(f"min(rho*) = {np.min(self.rho_star):.3e} <= 0")

    def copy(self) -> "DDState":
        return DDState(self.grid, self.params, self.time, self.rho_star.copy(), self.phi_star.copy())


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping controls shared by the integrators."""

    dt: float
    t_end: float
    scheme: str = "exp-etdrk2"
    dealias: bool = True
    cfl_safety: float = 0.5

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if self.scheme != "exp-etdrk2":
            raise ValueError(f"unknown scheme {self.scheme!r}")


def _primitive_symbol(params: ModelParams, kvec: np.ndarray) -> np.ndarray:
    """Per-mode linear generator in (rho', u, E, H) variables."""
    from .symbol import cross_matrix

    eps = params.epsilon
    pp = params.pprime_bar
    rb = params.rho_bar
    m = np.zeros((10, 10), dtype=complex)
    m[0, 1:4] = -rb * 1j * kvec
    m[1:4, 0] = -(pp / rb) * 1j * kvec / eps**2
    m[1:4, 1:4] = -(np.eye(3) - eps * cross_matrix(params.b_bar_vec)) / eps**2
    m[1:4, 4:7] = -np.eye(3) / eps**2
    m[4:7, 1:4] = rb * np.eye(3)
    m[4:7, 7:10] = 1j * cross_matrix(kvec) / eps
    m[7:10, 4:7] = -1j * cross_matrix(kvec) / eps
    return m


def _phi_matrices(m: np.ndarray, h: float):
    """exp(hM), phi1(hM), phi2(hM) via one augmented exponential."""
    n = m.shape[0]
    aug = np.zeros((3 * n, 3 * n), dtype=complex)
    aug[:n, :n] = h * m
    aug[:n, n : 2 * n] = np.eye(n)
    aug[n : 2 * n, 2 * n :] = np.eye(n)
    e = expm(aug)
    return e[:n, :n], e[:n, n : 2 * n], e[:n, 2 * n :]


class EMStepper:
    """Exponential two-stage integrator for the nonlinear system.

    Propagator tables are built once per (grid, params, dt); reuse the
    stepper across steps and runs with identical settings.
    """

    def __init__(self, grid: PeriodicGrid, params: ModelParams, cfg: StepperConfig):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        self.sound_speed = math.sqrt(params.pprime_bar)
        kflat = grid.k3.reshape(3, -1).T  # (M, 3)
        n_modes = kflat.shape[0]
        self.e1 = np.empty((n_modes, 10, 10), dtype=complex)
        self.p1 = np.empty_like(self.e1)
        self.p2 = np.empty_like(self.e1)
        h = cfg.dt
        for i in range(n_modes):
            m = _primitive_symbol(params, kflat[i])
            e1, phi1, phi2 = _phi_matrices(m, h)
            self.e1[i] = e1
            self.p1[i] = h * phi1
            self.p2[i] = h * phi2

    # -- state packing ------------------------------------------------------

    def pack(self, state: SimState) -> np.ndarray:
        g = self.grid
        z = np.empty((10,) + g.shape, dtype=complex)
        z[0] = _fftn(g, state.rho - self.params.rho_bar)
        z[1:4] = _fftn(g, state.u)
        z[4:7] = _fftn(g, state.e_field)
        bbar = self.params.b_bar_vec.reshape((3,) + (1,) * g.dim)
        z[7:10] = _fftn(g, state.b_field - bbar)
        return z

    def unpack(self, z: np.ndarray, t: float) -> SimState:
        g = self.grid
        bbar = self.params.b_bar_vec.reshape((3,) + (1,) * g.dim)
        return SimState(
            grid=g,
            params=self.params,
            time=t,
            rho=self.params.rho_bar + _ifftn_real(g, z[0]),
            u=_ifftn_real(g, z[1:4]),
            e_field=_ifftn_real(g, z[4:7]),
            b_field=bbar + _ifftn_real(g, z[7:10]),
        )

    # -- right-hand side ----------------------------------------------------

    def _physical(self, z: np.ndarray):
        g = self.grid
        rho_p = _ifftn_real(g, z[0])
        u = _ifftn_real(g, z[1:4])
        h_field = _ifftn_real(g, z[7:10])
        return rho_p, u, h_field

    def nonlinear(self, z: np.ndarray) -> np.ndarray:
        """Quadratic residual terms, 2/3-dealiased, in spectral form."""
        g = self.grid
        p = self.params
        eps = p.epsilon
        mask = g.dealias_mask if self.cfg.dealias else True
        rho_p, u, h_field = self._physical(z)
        rho = p.rho_bar + rho_p
        if np.min(rho) <= 0.0:
            raise VacuumError(f"min(rho) = {np.min(rho):.3e} <= 0 during step")

        grad_rho_hat = grad(g, z[0])
        grad_rho = _ifftn_real(g, grad_rho_hat)

        # momentum: advection, pressure-law correction, magnetic bending
        adv = np.zeros_like(u)
        for b in range(3):
            grad_ub = _ifftn_real(g, grad(g, z[1 + b]))
            adv[b] = np.einsum("a...,a...->...", u, grad_ub)
        pfac = p.law.pprime(rho) / rho - p.pprime_bar / p.rho_bar
        n_u = -adv - pfac * grad_rho / eps**2 - np.cross(u, h_field, axis=0) / eps

        pu_hat = _fftn(g, rho_p * u) * mask
        n = np.zeros_like(z)
        n[0] = -div(g, pu_hat)
        n[1:4] = _fftn(g, n_u) * mask
        n[4:7] = pu_hat
        self._last_umax = float(np.max(np.abs(u)))
        return n

    def _apply(self, table: np.ndarray, z: np.ndarray) -> np.ndarray:
        flat = z.reshape(10, -1)
        out = np.einsum("mij,jm->im", table, flat)
        return out.reshape(z.shape)

    def check_cfl(self, umax: float):
        limit = self.cfg.cfl_safety * self.grid.dx / (umax + self.sound_speed)
        if self.cfg.dt > limit:
            raise CFLError(
                f"dt = {self.cfg.dt:.3e} exceeds advective limit {limit:.3e} "
                f"(|u|max = {umax:.3e})"
            )

    def step_modes(self, z: np.ndarray) -> np.ndarray:
        n0 = self.nonlinear(z)
        self.check_cfl(self._last_umax)
        za = self._apply(self.e1, z) + self._apply(self.p1, n0)
        n1 = self.nonlinear(za)
        z1 = za + self._apply(self.p2, n1 - n0)
        # the curl-form update keeps div B = 0 exactly; projection + reality
        # symmetrization mop up round-off
        z1[7:10] = project_div_free(self.grid, z1[7:10])
        return hermitian_symmetrize(self.grid, z1)

    def step(self, state: SimState) -> SimState:
        state.validate()
        z = self.pack(state)
        z = self.step_modes(z)
        out = self.unpack(z, state.time + self.cfg.dt)
        out.validate()
        return out


class DDStepper:
    """Exponential two-stage integrator for the drift-diffusion limit."""

    def __init__(self, grid: PeriodicGrid, params: ModelParams, cfg: StepperConfig):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        lam = -(params.pprime_bar * grid.k_sq + params.rho_bar) * cfg.dt
        self.e1 = np.exp(lam)
        # phi1, phi2 of the (strictly negative) per-mode symbol
        self.p1 = cfg.dt * np.expm1(lam) / lam
        self.p2 = cfg.dt * (np.expm1(lam) - lam) / lam**2

    def nonlinear(self, a_hat: np.ndarray) -> np.ndarray:
        g = self.grid
        p = self.params
        mask = g.dealias_mask if self.cfg.dealias else True
        a = _ifftn_real(g, a_hat)
        rho = p.rho_bar + a
        if np.min(rho) <= 0.0:
            raise VacuumError(f"min(rho*) = {np.min(rho):.3e} <= 0 during step")
        grad_a = _ifftn_real(g, grad(g, a_hat))
        e_star = _ifftn_real(g, grad(g, inv_neg_laplacian(g, a_hat)))
        flux = (p.law.pprime(rho) - p.pprime_bar) * grad_a + a * e_star
        return div(g, _fftn(g, flux) * mask)

    def step_modes(self, a_hat: np.ndarray) -> np.ndarray:
        n0 = self.nonlinear(a_hat)
        za = self.e1 * a_hat + self.p1 * n0
        n1 = self.nonlinear(za)
        z1 = za + self.p2 * (n1 - n0)
        return hermitian_symmetrize(self.grid, z1)

    def step(self, state: DDState) -> DDState:
        state.validate()
        a_hat = _fftn(self.grid, state.rho_star - self.params.rho_bar)
        a_hat = self.step_modes(a_hat)
        rho = self.params.rho_bar + _ifftn_real(self.grid, a_hat)
        phi = _ifftn_real(self.grid, inv_neg_laplacian(self.grid, a_hat))
        return DDState(self.grid, self.params, state.time + self.cfg.dt, rho, phi)


_stepper_cache: dict = {}


def _cached_stepper(cls, grid, params, cfg):
    key = (cls.__name__, id(grid), params, cfg.dt, cfg.dealias, cfg.cfl_safety)
    stepper = _stepper_cache.get(key)
    if stepper is None:
        stepper = cls(grid, params, cfg)
        _stepper_cache[key] = stepper
    return stepper


def step_em(state: SimState, cfg: StepperConfig) -> SimState:
    """Advance the nonlinear Euler-Maxwell state by one dt."""
    return _cached_stepper(EMStepper, state.grid, state.params, cfg).step(state)


def step_dd(state: DDState, cfg: StepperConfig) -> DDState:
    """Advance the drift-diffusion state by one dt."""
    return _cached_stepper(DDStepper, state.grid, state.params, cfg).step(state)


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialSpec:
    """Random band-limited initial data description.

    ``velocity_scale`` sets the size of the ill-prepared velocity relative to
    the field amplitude (u0 = velocity_scale * amplitude * noise).
    """

    bands: tuple[int, int] = (-1, 2)
    amplitude: float = 1e-3
    seed: int = 1234
    prepared: str = "ill"
    transverse_scale: float = 0.5
    velocity_scale: float = 1.0

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("amplitude must be > 0")
        if self.prepared not in ("ill", "well"):
            raise ValueError(f"prepared must be 'ill' or 'well', got {self.prepared!r}")
        if self.bands[0] > self.bands[1]:
            raise ValueError("bands must be (j_lo, j_hi) with j_lo <= j_hi")
        if self.velocity_scale <= 0:
            raise ValueError("velocity_scale must be > 0")


def _band_limited_field(grid: PeriodicGrid, bands, rng, ncomp: int = 1) -> np.ndarray:
    """Real random field supported on dyadic bands [j_lo, j_hi], unit max."""
    shape = (ncomp,) + grid.shape if ncomp > 1 else grid.shape
    noise = rng.standard_normal(shape)
    coeffs = _fftn(grid, noise)
    mask = np.zeros(grid.shape, dtype=bool)
    for j in range(bands[0], bands[1] + 1):
        mask |= grid.band_mask(j)
    mask &= grid.k_norm > 0
    mask &= grid.dealias_mask
    coeffs = coeffs * mask
    phys = _ifftn_real(grid, coeffs)
    peak = np.max(np.abs(phys))
    if peak == 0.0:
        raise ValueError(f"no grid modes inside dyadic bands {bands}")
    return phys / peak


def make_initial(grid: PeriodicGrid, params: ModelParams, spec: InitialSpec) -> tuple[SimState, DDState]:
    """Build paired Euler-Maxwell and drift-diffusion initial states.

    The density perturbation is band-limited, zero-mean random noise; the
    longitudinal electric field solves the divergence constraint exactly and
    the magnetic perturbation is divergence-free.  Ill-prepared runs set the
    rescaled velocity to (amplitude-sized u0)/epsilon, exciting the initial
    layer; well-prepared runs start on the gradient-flow velocity.  The
    drift-diffusion state shares the initial density.

    The free transverse electric part and the magnetic perturbation carry an
    extra factor epsilon: the initial distance to the limit-system fields
    must itself be O(epsilon) for the strong-convergence rate to be visible,
    and only the velocity is allowed to be ill-prepared.
    """
    rng = np.random.default_rng(spec.seed)
    p = params
    amp = spec.amplitude
    if amp >= 0.5 * p.rho_bar:
        raise VacuumError(f"amplitude {amp} too large for rho_bar = {p.rho_bar}")

    rho_p = amp * _band_limited_field(grid, spec.bands, rng)
    u0 = spec.velocity_scale * amp * _band_limited_field(grid, spec.bands, rng, ncomp=3)
    e_trans_raw = _band_limited_field(grid, spec.bands, rng, ncomp=3)
    b_raw = _band_limited_field(grid, spec.bands, rng, ncomp=3)

    rho = p.rho_bar + rho_p
    rho_hat = _fftn(grid, rho_p)
    e_long = _ifftn_real(grid, grad(grid, inv_neg_laplacian(grid, rho_hat)))
    e_trans = spec.transverse_scale * amp * p.epsilon * _ifftn_real(
        grid, project_div_free(grid, _fftn(grid, e_trans_raw))
    )
    e_field = e_long + e_trans
    bbar = p.b_bar_vec.reshape((3,) + (1,) * grid.dim)
    b_field = bbar + amp * p.epsilon * _ifftn_real(
        grid, project_div_free(grid, _fftn(grid, b_raw))
    )

    phi = _ifftn_real(grid, inv_neg_laplacian(grid, rho_hat))
    if spec.prepared == "ill":
        u_state = u0 / p.epsilon
    else:
        h_val = enthalpy(p, rho)
        u_state = -_ifftn_real(grid, grad(grid, _fftn(grid, h_val + phi)))

    sim = SimState(grid, p, 0.0, rho, u_state, e_field, b_field)
    sim.validate()
    dd = DDState(grid, p, 0.0, rho.copy(), phi)
    dd.validate()
    return sim, dd


# ---------------------------------------------------------------------------
# diagnostics and the run driver
# ---------------------------------------------------------------------------


def gauss_residual(state: SimState) -> float:
    """Relative L2 residual of div E - (rho_bar - rho)."""
    g = state.grid
    e_hat = _fftn(g, state.e_field)
    lhs = div(g, e_hat)
    rhs = _fftn(g, state.params.rho_bar - state.rho)
    num = float(np.linalg.norm(lhs - rhs))
    den = float(np.linalg.norm(rhs)) + 1e-300
    return num / den


def divb_residual(state: SimState) -> float:
    """L2 norm of div B relative to the magnetic perturbation size."""
    g = state.grid
    b_hat = _fftn(g, state.b_field - state.params.b_bar_vec.reshape((3,) + (1,) * g.dim))
    num = float(np.linalg.norm(div(g, b_hat)))
    den = float(np.linalg.norm(b_hat)) + 1e-300
    return num / den


def physical_energy(state: SimState) -> float:
    """Kinetic + internal + electromagnetic energy of the perturbation."""
    p = state.params
    kinetic = 0.5 * p.epsilon**2 * state.rho * np.sum(state.u**2, axis=0)
    internal = pressure_potential(p, state.rho)
    bbar = p.b_bar_vec.reshape((3,) + (1,) * state.grid.dim)
    em = 0.5 * np.sum(state.e_field**2, axis=0) + 0.5 * np.sum((state.b_field - bbar) ** 2, axis=0)
    return _mean_integral(state.grid, kinetic + internal + em)


def friction_power(state: SimState) -> float:
    """Instantaneous dissipation integral of rho |u|^2."""
    return _mean_integral(state.grid, state.rho * np.sum(state.u**2, axis=0))


@dataclass
class TrajectoryRecord:
    """Diagnostics stream of one nonlinear run."""

    times: list = field(default_factory=list)
    energy_defect: list = field(default_factory=list)
    gauss: list = field(default_factory=list)
    divb: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    band_rows: list = field(default_factory=list)
    final_state: SimState | None = None

    def summary(self) -> dict:
        return {
            "max_energy_defect": max(self.energy_defect) if self.energy_defect else 0.0,
            "max_gauss_residual": max(self.gauss) if self.gauss else 0.0,
            "max_divb_residual": max(self.divb) if self.divb else 0.0,
            "t_final": self.times[-1] if self.times else 0.0,
        }


def run(
    state: SimState,
    cfg: StepperConfig,
    diagnostics_every: int = 10,
    snapshots_every: int = 0,
    band_partition: BandPartition | None = None,
    band_variable: str = "rho",
) -> TrajectoryRecord:
    """March the nonlinear system to t_end, streaming diagnostics.

    Energy accounting integrates the friction power with the trapezoid rule
    at every step so the balance defect measures only the scheme error.
    """
    stepper = _cached_stepper(EMStepper, state.grid, state.params, cfg)
    record = TrajectoryRecord()
    state.validate()
    e0 = physical_energy(state)
    scale = max(abs(e0), 1e-300)
    cum_dissipation = 0.0
    prev_power = friction_power(state)

    def emit(s: SimState, step_idx: int):
        record.times.append(s.time)
        defect = abs(physical_energy(s) + cum_dissipation - e0) / scale
        record.energy_defect.append(defect)
        record.gauss.append(gauss_residual(s))
        record.divb.append(divb_residual(s))
        if band_partition is not None:
            a, u, e, h = s.perturbation_fields(band_variable)
            for name, f in (("a", a), ("u", u), ("E", e), ("H", h)):
                part = band_partition
                for regime, s_reg in (("low", 0.5), ("medium", 1.5), ("high", 2.5)):
                    from .bands import regime_norm

                    record.band_rows.append(
                        {
                            "time": s.time,
                            "term_name": name,
                            "regime": regime,
                            "s": s_reg,
                            "value": regime_norm(f, part, regime, s_reg),
                        }
                    )
        if snapshots_every and step_idx % snapshots_every == 0:
            record.snapshots.append(s.copy())

    emit(state, 0)
    if snapshots_every == 0:
        record.snapshots.append(state.copy())
    n_steps = int(round(cfg.t_end / cfg.dt))
    z = stepper.pack(state)
    t = state.time
    for i in range(1, n_steps + 1):
        z = stepper.step_modes(z)
        t = state.time + i * cfg.dt
        power = None
        current = stepper.unpack(z, t)
        power = friction_power(current)
        cum_dissipation += 0.5 * cfg.dt * (prev_power + power)
        prev_power = power
        if i % diagnostics_every == 0 or i == n_steps:
            emit(current, i)
    record.final_state = stepper.unpack(z, t)
    return record
