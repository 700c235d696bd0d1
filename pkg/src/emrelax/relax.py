"""Relaxation-limit diagnostics: effective velocity, initial layers, and the
epsilon-sweep measuring the strong-convergence rate to drift-diffusion.

The effective velocity ``z = u + grad h(rho) + E + eps u x b_bar`` measures
the distance to the gradient-flow (Darcy) balance; it is damped at rate
1/eps^2 up to an initial-layer correction ``z_L = exp(-t/eps^2) z_0`` carrying
ill-prepared velocity data.  Error norms against a paired drift-diffusion run
are accumulated in band-wise time norms, and log-log slopes against epsilon
are fitted by least squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bands import (
    BandPartition,
    PeriodicGrid,
    SpectralField,
    TimeNormAccumulator,
    curl,
    div,
    grad,
    inv_neg_laplacian,
    transform_forward,
)
from .model import ModelParams, enthalpy
from .solver import (
    DDState,
    DDStepper,
    EMStepper,
    InitialSpec,
    SimState,
    StepperConfig,
    _cached_stepper,
    _fftn,
    _ifftn_real,
    make_initial,
)

__all__ = [
    "EffectiveVelocity",
    "InitialLayer",
    "LimitFields",
    "RelaxReport",
    "effective_velocity",
    "layers",
    "evaluate_layer",
    "limit_fields",
    "ERROR_NORM_KEYS",
    "error_norms",
    "paired_run",
    "fit_slopes",
    "convergence_study",
    "z_equation_residual",
    "delta_rho_residual",
    "horizon_sensitivity",
]


@dataclass
class EffectiveVelocity:
    """Residual of the Darcy balance for one state."""

    z: np.ndarray


@dataclass
class InitialLayer:
    """Closed-form exp(-t/eps^2) corrections for ill-prepared data."""

    epsilon: float
    z0: np.ndarray
    u0_over_eps: np.ndarray

    def z_at(self, t: float) -> np.ndarray:
        return math.exp(-t / self.epsilon**2) * self.z0

    def u_at(self, t: float) -> np.ndarray:
        return math.exp(-t / self.epsilon**2) * self.u0_over_eps


@dataclass
class LimitFields:
    """Limit-system fields derived from one drift-diffusion state."""

    rho_star: np.ndarray
    phi_star: np.ndarray
    u_star: np.ndarray
    e_star: np.ndarray
    b_star: np.ndarray
    b_one_star: np.ndarray


@dataclass
class RelaxReport:
    """Per-epsilon error norms and fitted convergence slopes."""

    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _bbar(params: ModelParams, grid: PeriodicGrid) -> np.ndarray:
    return params.b_bar_vec.reshape((3,) + (1,) * grid.dim)


def effective_velocity(state: SimState) -> EffectiveVelocity:
    """z = u + grad h(rho) + E + eps u x b_bar, gradients taken spectrally."""
    g, p = state.grid, state.params
    n = enthalpy(p, state.rho)
    grad_n = _ifftn_real(g, grad(g, _fftn(g, n)))
    z = state.u + grad_n + state.e_field + p.epsilon * np.cross(state.u, _bbar(p, g), axis=0)
    return EffectiveVelocity(z=z)


def layers(params: ModelParams, initial: SimState) -> InitialLayer:
    """Initial-layer data built from the rescaled initial state.

    With u the rescaled velocity, z evaluated at t=0 equals
    u0/eps + grad h(rho0) + E0 + u0 x b_bar of the original-scale data.
    """
    z0 = effective_velocity(initial).z
    return InitialLayer(epsilon=params.epsilon, z0=z0, u0_over_eps=initial.u.copy())


def evaluate_layer(layer: InitialLayer, t: float) -> dict:
    """Layer fields at time t (exact exponential)."""
    return {"z_L": layer.z_at(t), "u_L": layer.u_at(t)}


def limit_fields(dd: DDState, params: ModelParams) -> LimitFields:
    """Darcy velocity, curl-free electric field, and the induced magnetic
    correction of a drift-diffusion state."""
    g = dd.grid
    rho = dd.rho_star
    if abs(float(np.mean(rho)) - params.rho_bar) > 1e-10 * max(1.0, params.rho_bar):
        raise ValueError("limit fields need mean(rho*) = rho_bar")
    a_hat = _fftn(g, rho - params.rho_bar)
    phi = _ifftn_real(g, inv_neg_laplacian(g, a_hat))
    e_star = _ifftn_real(g, grad(g, inv_neg_laplacian(g, a_hat)))
    h_val = enthalpy(params, rho)
    u_star = -_ifftn_real(g, grad(g, _fftn(g, h_val + phi)))
    pu_hat = _fftn(g, rho * u_star)
    b_one = -_ifftn_real(g, np.stack([inv_neg_laplacian(g, c) for c in curl(g, pu_hat)]))
    b_star = np.broadcast_to(_bbar(params, g), (3,) + g.shape).copy()
    return LimitFields(
        rho_star=rho,
        phi_star=phi,
        u_star=u_star,
        e_star=e_star,
        b_star=b_star,
        b_one_star=b_one,
    )


ERROR_NORM_KEYS = (
    "drho_sup_B1/2",
    "drho_L2t_B1/2,3/2",
    "du_minus_uL_L2t_B1/2",
    "dE_L2t_B1/2",
    "dE_sup_B1/2",
    "dB_L2t_B3/2,1/2",
    "dB_sup_B1/2",
    "dBmod_L2t_B3/2,1/2",
    "dBmod_sup_B1/2",
    "z_minus_zL_L2t_B1/2",
)


class _ErrorAccumulator:
    """Feeds paired states into band-wise time accumulators."""

    def __init__(self, params: ModelParams, part: BandPartition, layer: InitialLayer):
        self.params = params
        self.part = part
        self.layer = layer
        names = ("drho", "du", "dE", "dB", "dBmod", "zml")
        self.acc = {n: TimeNormAccumulator(part) for n in names}

    def update(self, t: float, em: SimState, dd: DDState):
        g = em.grid
        p = self.params
        lim = limit_fields(dd, p)
        drho = em.rho - lim.rho_star
        u_l = self.layer.u_at(t)
        du = em.u - lim.u_star - u_l
        d_e = em.e_field - lim.e_star
        d_b = em.b_field - lim.b_star
        d_bmod = d_b + p.epsilon * lim.b_one_star
        zml = effective_velocity(em).z - self.layer.z_at(t)
        for name, arr in (
            ("drho", drho),
            ("du", du),
            ("dE", d_e),
            ("dB", d_b),
            ("dBmod", d_bmod),
            ("zml", zml),
        ):
            self.acc[name].update(t, field=transform_forward(g, arr))

    def norms(self) -> dict:
        out = {
            "drho_sup_B1/2": self.acc["drho"].norm(0.5, "sup"),
            "drho_L2t_B1/2,3/2": self.acc["drho"].hybrid(0.5, 1.5, "l2"),
            "du_minus_uL_L2t_B1/2": self.acc["du"].norm(0.5, "l2"),
            "dE_L2t_B1/2": self.acc["dE"].norm(0.5, "l2"),
            "dE_sup_B1/2": self.acc["dE"].norm(0.5, "sup"),
            "dB_L2t_B3/2,1/2": self.acc["dB"].hybrid(1.5, 0.5, "l2"),
            "dB_sup_B1/2": self.acc["dB"].norm(0.5, "sup"),
            "dBmod_L2t_B3/2,1/2": self.acc["dBmod"].hybrid(1.5, 0.5, "l2"),
            "dBmod_sup_B1/2": self.acc["dBmod"].norm(0.5, "sup"),
            "z_minus_zL_L2t_B1/2": self.acc["zml"].norm(0.5, "l2"),
        }
        return out


def error_norms(em_traj, dd_traj, params: ModelParams, part: BandPartition) -> dict:
    """Error norms from sampled paired trajectories.

    ``em_traj`` and ``dd_traj`` are (times, states) pairs sharing a uniform
    time grid and one spatial grid; the initial layer is rebuilt from the
    first Euler-Maxwell state.
    """
    times_em, states_em = em_traj
    times_dd, states_dd = dd_traj
    if len(times_em) != len(times_dd) or not np.allclose(times_em, times_dd):
        raise ValueError("paired trajectories must share the time grid")
    if states_em[0].grid.shape != states_dd[0].grid.shape:
        raise ValueError("paired trajectories must share the spatial grid")
    layer = layers(params, states_em[0])
    acc = _ErrorAccumulator(params, part, layer)
    for t, em, dd in zip(times_em, states_em, states_dd):
        acc.update(t, em, dd)
    return acc.norms()


def paired_run(
    grid: PeriodicGrid,
    params: ModelParams,
    ispec: InitialSpec,
    cfg: StepperConfig,
    part: BandPartition | None = None,
    sample_every: int = 1,
    series_every: int = 0,
) -> dict:
    """Run Euler-Maxwell and drift-diffusion in lockstep and accumulate the
    error norms at full time resolution.

    ``series_every`` > 0 additionally records the instantaneous spatial norm
    of each error quantity every that-many samples, for time-series output.
    """
    if part is None:
        part = BandPartition(grid, params.epsilon)
    em0, dd0 = make_initial(grid, params, ispec)
    em_stepper = _cached_stepper(EMStepper, grid, params, cfg)
    dd_stepper = _cached_stepper(DDStepper, grid, params, cfg)
    layer = layers(params, em0)
    acc = _ErrorAccumulator(params, part, layer)
    series: list = []
    half_weights = np.array([2.0 ** (0.5 * j) for j in part.band_ids])

    def capture(t):
        # instantaneous B^(1/2) spatial norm of each error quantity
        if not series_every:
            return
        idx = len(acc.acc["drho"].times) - 1
        if idx % series_every:
            return
        for name, a in acc.acc.items():
            series.append({"time": t, "norm": name, "value": float(a._series[-1] @ half_weights)})

    n_steps = int(round(cfg.t_end / cfg.dt))
    if n_steps % sample_every != 0:
        raise ValueError("sample_every must divide the step count (uniform time grid)")
    z_em = em_stepper.pack(em0)
    a_dd = _fftn(grid, dd0.rho_star - params.rho_bar)
    acc.update(0.0, em0, dd0)
    capture(0.0)
    for i in range(1, n_steps + 1):
        z_em = em_stepper.step_modes(z_em)
        a_dd = dd_stepper.step_modes(a_dd)
        if i % sample_every == 0:
            t = i * cfg.dt
            em = em_stepper.unpack(z_em, t)
            rho_star = params.rho_bar + _ifftn_real(grid, a_dd)
            dd = DDState(grid, params, t, rho_star, _ifftn_real(grid, inv_neg_laplacian(grid, a_dd)))
            acc.update(t, em, dd)
            capture(t)
    out = {"epsilon": params.epsilon, "norms": acc.norms()}
    if series_every:
        out["series"] = series
    return out


def fit_slopes(eps_list, rows) -> dict:
    """Least-squares slope of log(norm) against log(eps), per norm key."""
    x = np.log(np.asarray(eps_list, dtype=float))
    out = {}
    keys = rows[0]["norms"].keys()
    for key in keys:
        y = np.log(np.maximum([row["norms"][key] for row in rows], 1e-300))
        n = len(x)
        xbar, ybar = x.mean(), y.mean()
        sxx = float(np.sum((x - xbar) ** 2))
        slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
        intercept = ybar - slope * xbar
        resid = y - (slope * x + intercept)
        stderr = math.sqrt(float(np.sum(resid**2)) / max(n - 2, 1) / sxx)
        out[key] = {
            "slope": slope,
            "stderr": stderr,
            "residual": float(np.sqrt(np.mean(resid**2))),
        }
    return out


def _auto_dt(epsilon: float, dt_base: float) -> float:
    # resolve the layer time scale eps^2 for accurate time quadrature
    return min(dt_base, epsilon**2 / 5.0)


def convergence_study(
    grid: PeriodicGrid,
    params: ModelParams,
    ispec: InitialSpec,
    eps_list,
    t_end: float = 2.0,
    dt_base: float = 1e-3,
    sample_every: int = 1,
    series_every: int = 0,
) -> RelaxReport:
    """Paired runs over a descending epsilon list plus slope fits.

    All runs share the seed, hence the initial density, so the density error
    vanishes at t = 0.  Any run aborting (vacuum/CFL) is recorded as a
    failure marker and excluded from the fit.
    """
    eps_list = list(eps_list)
    if len(eps_list) < 3:
        raise ValueError("need at least 3 epsilon values for a slope fit")
    if any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilon list must be strictly descending")
    report = RelaxReport(meta={
        "t_end": t_end,
        "dt_base": dt_base,
        "grid": {"dim": grid.dim, "n_points": grid.n_points, "length": grid.length},
        "initial": ispec.__dict__.copy(),
        "density_variable": "rho",
        "regime_convention": "low j<=0 / medium 1..J-1 / high j>=J (disjoint)",
    })
    good_rows, good_eps = [], []
    for eps in eps_list:
        p = params.with_epsilon(eps)
        cfg = StepperConfig(dt=_auto_dt(eps, dt_base), t_end=t_end)
        try:
            row = paired_run(grid, p, ispec, cfg, sample_every=sample_every)
            report.rows.append(row)
            good_rows.append(row)
            good_eps.append(eps)
        except Exception as exc:  # vacuum/CFL markers keep the partial report
            report.rows.append({"epsilon": eps, "failed": str(exc)})
    if len(good_rows) >= 3:
        report.slopes = fit_slopes(good_eps, good_rows)
    return report


def horizon_sensitivity(grid, params, ispec, t_end: float, dt_base: float = 1e-3) -> dict:
    """Relative change of each error norm between horizons T and 2T."""
    cfg1 = StepperConfig(dt=_auto_dt(params.epsilon, dt_base), t_end=t_end)
    cfg2 = StepperConfig(dt=_auto_dt(params.epsilon, dt_base), t_end=2.0 * t_end)
    row1 = paired_run(grid, params, ispec, cfg1)
    row2 = paired_run(grid, params, ispec, cfg2)
    out = {}
    for key in ERROR_NORM_KEYS:
        a, b = row1["norms"][key], row2["norms"][key]
        out[key] = {"T": a, "2T": b, "rel_change": abs(b - a) / max(abs(a), 1e-300)}
    return out


# ---------------------------------------------------------------------------
# residuals of the derived equations
# ---------------------------------------------------------------------------


def _l2(grid, arr) -> float:
    return float(np.sqrt(np.mean(np.sum(np.atleast_2d(arr) ** 2, axis=0))))


def z_equation_residual(states: list[SimState], dt: float) -> dict:
    """Centered-difference residual of the damped effective-velocity equation.

    ``states`` holds three consecutive snapshots (t-dt, t, t+dt).  Returns the
    residual L2 norm over the largest single-term norm.
    """
    sm, s0, sp = states
    g, p = s0.grid, s0.params
    eps = p.epsilon
    bbar = _bbar(p, g)
    z_m, z_0, z_p = (effective_velocity(s).z for s in (sm, s0, sp))
    dz_dt = (z_p - z_m) / (2.0 * dt)
    n_m, n_p = enthalpy(p, sm.rho), enthalpy(p, sp.rho)
    dn_dt_hat = _fftn(g, (n_p - n_m) / (2.0 * dt))
    grad_dn_dt = _ifftn_real(g, grad(g, dn_dt_hat))
    de_dt = (sp.e_field - sm.e_field) / (2.0 * dt)

    u = s0.u
    h_field = s0.b_field - bbar
    adv = np.zeros_like(u)
    u_hat = _fftn(g, u)
    for b in range(3):
        adv[b] = np.einsum("a...,a...->...", u, _ifftn_real(g, grad(g, u_hat[b])))
    uxh = np.cross(u, h_field, axis=0)
    force = -adv - uxh / eps - eps * np.cross(adv, bbar, axis=0) - np.cross(uxh, bbar, axis=0)

    terms = {
        "dz_dt": dz_dt,
        "z_over_eps2": z_0 / eps**2,
        "z_cross_b": np.cross(z_0, bbar, axis=0) / eps,
        "grad_dn_dt": grad_dn_dt,
        "dE_dt": de_dt,
        "force": force,
    }
    residual = dz_dt + z_0 / eps**2 + terms["z_cross_b"] - grad_dn_dt - de_dt - force
    scale = max(_l2(g, t) for t in terms.values())
    return {"residual_l2": _l2(g, residual), "scale": scale, "relative": _l2(g, residual) / scale}


def delta_rho_residual(em_states: list[SimState], dd_states: list[DDState], layer: InitialLayer, dt: float) -> dict:
    """Centered-difference residual of the density-error equation.

    Inputs are three consecutive paired snapshots.  The forcing splits into
    the layer part -div(rho z_L) and the regular part
    div(-rho (z - z_L) + eps rho u x b_bar + dF).
    """
    em_m, em_0, em_p = em_states
    dd_m, dd_0, dd_p = dd_states
    g, p = em_0.grid, em_0.params
    eps = p.epsilon
    bbar = _bbar(p, g)
    t0 = em_0.time

    drho = [em.rho - dd.rho_star for em, dd in ((em_m, dd_m), (em_0, dd_0), (em_p, dd_p))]
    ddrho_dt = (drho[2] - drho[0]) / (2.0 * dt)
    drho_hat = _fftn(g, drho[1])
    lap_drho = _ifftn_real(g, -g.k_sq * drho_hat)

    z = effective_velocity(em_0).z
    z_l = layer.z_at(t0)
    z_tilde = z - z_l
    f1 = -_ifftn_real(g, div(g, _fftn(g, em_0.rho * z_l)))

    lim = limit_fields(dd_0, p)
    grad_rho_eps = _ifftn_real(g, grad(g, _fftn(g, em_0.rho)))
    grad_drho = _ifftn_real(g, grad(g, drho_hat))
    d_e = em_0.e_field - lim.e_star
    df = (
        (p.law.pprime(em_0.rho) - p.law.pprime(dd_0.rho_star)) * grad_rho_eps
        + (p.law.pprime(dd_0.rho_star) - p.pprime_bar) * grad_drho
        + drho[1] * em_0.e_field
        + (dd_0.rho_star - p.rho_bar) * d_e
    )
    flux = -em_0.rho * z_tilde + eps * em_0.rho * np.cross(em_0.u, bbar, axis=0) + df
    f2 = _ifftn_real(g, div(g, _fftn(g, flux)))

    terms = {
        "ddrho_dt": ddrho_dt,
        "diffusion": p.pprime_bar * lap_drho,
        "damping": p.rho_bar * drho[1],
        "f1": f1,
        "f2": f2,
    }
    residual = ddrho_dt - p.pprime_bar * lap_drho + p.rho_bar * drho[1] - f1 - f2
    scale = max(_l2(g, t) for t in terms.values())
    return {"residual_l2": _l2(g, residual), "scale": scale, "relative": _l2(g, residual) / scale}
