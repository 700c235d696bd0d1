"""Barotropic pressure law, enthalpy change of variable, and closure functions.

Everything here is a pure function of the model parameters; the rest of the
package (Fourier symbol, solvers, diagnostics) builds on these.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PressureLaw",
    "ModelParams",
    "enthalpy",
    "rho_of_n",
    "closures",
    "pressure_potential",
]


@dataclass(frozen=True)
class PressureLaw:
    """Gamma-law pressure P(rho) = A * rho**gamma with A > 0, gamma >= 1."""

    amplitude: float = 0.5
    gamma: float = 2.0

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError(f"pressure amplitude must be > 0, got {self.amplitude}")
        if self.gamma < 1:
            raise ValueError(f"adiabatic exponent must be >= 1, got {self.gamma}")

    def p(self, rho):
        return self.amplitude * rho**self.gamma

    def pprime(self, rho):
        return self.amplitude * self.gamma * rho ** (self.gamma - 1.0)


@dataclass(frozen=True)
class ModelParams:
    """Background state and relaxation parameter.

    ``kay = rho_bar / P'(rho_bar)`` is the linearized density-to-enthalpy
    slope entering the electric-field constraint.
    """

    rho_bar: float = 1.0
    b_bar: tuple[float, float, float] = (0.0, 0.0, 1.0)
    epsilon: float = 1.0
    law: PressureLaw = field(default_factory=PressureLaw)

    def __post_init__(self):
        if self.rho_bar <= 0:
            raise ValueError(f"rho_bar must be > 0, got {self.rho_bar}")
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        object.__setattr__(self, "b_bar", tuple(float(b) for b in self.b_bar))
        if len(self.b_bar) != 3:
            raise ValueError("b_bar must be a 3-vector")

    @property
    def pprime_bar(self) -> float:
        return float(self.law.pprime(self.rho_bar))

    @property
    def kay(self) -> float:
        return self.rho_bar / self.pprime_bar

    @property
    def b_bar_vec(self) -> np.ndarray:
        return np.asarray(self.b_bar, dtype=float)

    def with_epsilon(self, epsilon: float) -> "ModelParams":
        return ModelParams(self.rho_bar, self.b_bar, epsilon, self.law)


def enthalpy(params: ModelParams, rho):
    """Enthalpy deviation n = h(rho) - h(rho_bar), h'(rho) = P'(rho)/rho.

    Closed form for the gamma law: A*g/(g-1) * (rho^(g-1) - rho_bar^(g-1))
    for g != 1 and A*log(rho/rho_bar) for g = 1.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("enthalpy undefined at vacuum: rho must be > 0")
    a, g, rb = params.law.amplitude, params.law.gamma, params.rho_bar
    if g == 1.0:
        out = a * np.log(rho / rb)
    else:
        out = a * g / (g - 1.0) * (rho ** (g - 1.0) - rb ** (g - 1.0))
    return out if out.ndim else float(out)


def rho_of_n(params: ModelParams, n):
    """Invert the enthalpy map: rho such that enthalpy(params, rho) = n."""
    n = np.asarray(n, dtype=float)
    a, g, rb = params.law.amplitude, params.law.gamma, params.rho_bar
    if g == 1.0:
        out = rb * np.exp(n / a)
    else:
        base = rb ** (g - 1.0) + (g - 1.0) * n / (a * g)
        if np.any(base <= 0):
            raise ValueError("enthalpy value outside the invertibility range")
        out = base ** (1.0 / (g - 1.0))
    return out if out.ndim else float(out)


def closures(params: ModelParams, n):
    """Nonlinear closures (G, F, Phi) of the enthalpy variable.

    G(n) = P'(rho(n)) - P'(rho_bar), F(n) = rho(n) - rho_bar and
    Phi(n) = F(n) - kay*n; Phi vanishes to second order at n = 0.
    """
    rho = rho_of_n(params, n)
    g_val = params.law.pprime(rho) - params.pprime_bar
    f_val = rho - params.rho_bar
    phi = f_val - params.kay * np.asarray(n, dtype=float)
    if np.ndim(n) == 0:
        return float(g_val), float(f_val), float(phi)
    return g_val, f_val, phi


def pressure_potential(params: ModelParams, rho):
    """Internal-energy density rho * int_{rho_bar}^{rho} (P(s)-P(rho_bar))/s^2 ds.

    This is the potential whose sum with the kinetic and field energies is
    exactly conserved (up to the cumulative friction dissipation); it vanishes
    quadratically at rho = rho_bar.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("pressure potential undefined at vacuum")
    a, g, rb = params.law.amplitude, params.law.gamma, params.rho_bar
    pbar = params.law.p(rb)
    if g == 1.0:
        integral = a * np.log(rho / rb) + pbar * (1.0 / rho - 1.0 / rb)
    else:
        integral = a * (rho ** (g - 1.0) - rb ** (g - 1.0)) / (g - 1.0) + pbar * (
            1.0 / rho - 1.0 / rb
        )
    out = rho * integral
    return out if out.ndim else float(out)
