"""Hypocoercive quadratic form certifying the pointwise decay envelope.

The natural energy of one Fourier mode dissipates only through the velocity
friction.  Augmenting it with three small cross terms produces a form whose
derivative along the mode ODE controls every component; this module builds
that form, checks its equivalence to the weighted amplitude, and searches for
an admissible weight ``eta`` and certified rate ``c0`` by semidefinite
eigenvalue checks on the constraint-compatible subspace.

Sign convention: complex pairings are written ``<a, b> = sum_k a_k conj(b_k)``.
With this convention the dissipative orientation of the velocity/density
cross term is ``+eta * Re<u, i xi n>`` (the opposite orientation is strongly
anti-dissipative; see the numerical check in the tests).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, eigvalsh

from .model import ModelParams
from .symbol import (
    E_SLC,
    H_SLC,
    N_IDX,
    U_SLC,
    SymbolMatrix,
    assemble_symbol,
    cross_matrix,
    gauss_basis,
)

__all__ = [
    "LyapunovWeights",
    "LyapunovForm",
    "build_form",
    "form_terms",
    "evaluate",
    "weighted_metric",
    "equivalence_bounds",
    "dissipation_matrix",
    "dissipation_gap",
    "form_scale",
    "search_eta_c0",
]


@dataclass(frozen=True)
class LyapunovWeights:
    """Cross-term weight; the three cross terms scale as eta, eta, eta^(5/4)."""

    eta: float

    def __post_init__(self):
        if not (0.0 < self.eta < 1.0):
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")


@dataclass
class LyapunovForm:
    """Hermitian matrix q with U^H q U the mode Lyapunov value."""

    q: np.ndarray
    xi: np.ndarray
    weights: LyapunovWeights
    params: ModelParams


def _sym_pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hermitian matrix of Re<A U, B U> for row-selector matrices A, B."""
    return (b.conj().T @ a + a.conj().T @ b) / 2.0


def _selectors(xi: np.ndarray):
    sel_u = np.zeros((3, 10), dtype=complex)
    sel_u[:, U_SLC] = np.eye(3)
    sel_e = np.zeros((3, 10), dtype=complex)
    sel_e[:, E_SLC] = np.eye(3)
    sel_ixin = np.zeros((3, 10), dtype=complex)
    sel_ixin[:, N_IDX] = 1j * xi
    sel_h = np.zeros((3, 10), dtype=complex)
    sel_h[:, H_SLC] = np.eye(3)
    sel_mixih = -1j * cross_matrix(xi) @ sel_h  # rows of -i xi x h
    return sel_u, sel_e, sel_ixin, sel_mixih


def _form_pieces(params: ModelParams, xi: np.ndarray):
    """Q = q0 + eta*q1 + eta^(5/4)*q2 decomposition (q0 the diagonal energy)."""
    eps, pp, kay = params.epsilon, params.pprime_bar, params.kay
    r2 = float(np.dot(xi, xi))
    d1 = 1.0 + eps**2 * r2
    d2 = d1 * (1.0 + r2)
    q0 = 0.5 * np.diag(
        np.r_[1.0, pp * eps**2 * np.ones(3), np.ones(3) / kay, np.ones(3) / kay]
    ).astype(complex)
    sel_u, sel_e, sel_ixin, sel_mixih = _selectors(xi)
    q1 = eps**2 / d1 * (_sym_pair(sel_u, sel_ixin) + _sym_pair(sel_u, sel_e))
    q2 = eps / d2 * _sym_pair(sel_e, sel_mixih)
    return q0, q1, q2


def build_form(params: ModelParams, xi, weights: LyapunovWeights) -> LyapunovForm:
    """Assemble the Hermitian Lyapunov matrix at wavevector xi."""
    xi = np.asarray(xi, dtype=float)
    q0, q1, q2 = _form_pieces(params, xi)
    eta = weights.eta
    q = q0 + eta * q1 + eta**1.25 * q2
    return LyapunovForm(q=q, xi=xi, weights=weights, params=params)


def evaluate(form: LyapunovForm, u) -> float:
    u = np.asarray(u, dtype=complex)
    return float((u.conj() @ form.q @ u).real)


def form_terms(form: LyapunovForm, u) -> dict:
    """Term-by-term evaluation of the form on a state (cross-check path)."""
    u = np.asarray(u, dtype=complex)
    p = form.params
    eps, pp, kay = p.epsilon, p.pprime_bar, p.kay
    xi = form.xi
    eta = form.weights.eta
    r2 = float(np.dot(xi, xi))
    d1 = 1.0 + eps**2 * r2
    d2 = d1 * (1.0 + r2)
    n, uu, ee, hh = u[N_IDX], u[U_SLC], u[E_SLC], u[H_SLC]
    diag = 0.5 * (
        abs(n) ** 2
        + pp * eps**2 * np.sum(np.abs(uu) ** 2)
        + np.sum(np.abs(ee) ** 2) / kay
        + np.sum(np.abs(hh) ** 2) / kay
    )
    cross_un = eta * eps**2 / d1 * np.real(np.sum(uu * np.conj(1j * xi * n)))
    cross_ue = eta * eps**2 / d1 * np.real(np.sum(uu * np.conj(ee)))
    mixih = -1j * np.cross(xi, hh)
    cross_eh = eta**1.25 * eps / d2 * np.real(np.sum(ee * np.conj(mixih)))
    return {
        "diag": float(diag),
        "cross_un": float(cross_un),
        "cross_ue": float(cross_ue),
        "cross_eh": float(cross_eh),
        "total": float(diag + cross_un + cross_ue + cross_eh),
    }


def weighted_metric(params: ModelParams) -> np.ndarray:
    """Diagonal metric of the weighted amplitude |n|^2+eps^2|u|^2+|e|^2+|h|^2."""
    w = np.ones(10)
    w[U_SLC] = params.epsilon**2
    return np.diag(w)


def equivalence_bounds(form: LyapunovForm) -> tuple[float, float]:
    """Sharp constants with c_low*|V|^2 <= U^H Q U <= c_high*|V|^2.

    |V|^2 is the weighted amplitude; the constants are the extreme
    generalized eigenvalues of (Q, W).  A nonpositive c_low signals that the
    cross-term weight eta is too large (reported, not raised).
    """
    w = weighted_metric(form.params)
    vals = eigh(form.q, w, eigvals_only=True)
    return float(vals[0]), float(vals[-1])


def dissipation_matrix(params: ModelParams, xi, c0: float) -> np.ndarray:
    """Diagonal target dissipation R(c0): component rates of the decay claim."""
    xi = np.asarray(xi, dtype=float)
    eps = params.epsilon
    r2 = float(np.dot(xi, xi))
    d1 = 1.0 + eps**2 * r2
    d2 = d1 * (1.0 + r2)
    diag = np.r_[
        c0 * (1.0 + r2) / d1,
        c0 * np.ones(3),
        c0 / d1 * np.ones(3),
        c0 * r2 / d2 * np.ones(3),
    ]
    return np.diag(diag).astype(complex)


def form_scale(sym: SymbolMatrix, form: LyapunovForm, c0: float = 1.0) -> float:
    """Magnitude reference for gap tolerances at this grid point."""
    s = sym.m.conj().T @ form.q + form.q @ sym.m
    r = dissipation_matrix(form.params, form.xi, c0)
    return float(max(np.linalg.norm(s), np.linalg.norm(r), 1e-300))


def dissipation_gap(form: LyapunovForm, sym: SymbolMatrix, c0: float) -> float:
    """Minimum eigenvalue of -(M^H Q + Q M + R(c0)) on the compatible subspace.

    The differential inequality d/dt L + U^H R U <= 0 holds at this xi iff the
    returned value is >= -tol for the chosen tolerance.
    """
    if form.params is not sym.params and form.params != sym.params:
        raise ValueError("form and symbol must share model parameters")
    if not np.allclose(form.xi, sym.xi):
        raise ValueError("form and symbol must share the wavevector")
    s = -(sym.m.conj().T @ form.q + form.q @ sym.m + dissipation_matrix(form.params, form.xi, c0))
    basis = gauss_basis(form.params, form.xi)
    return float(eigvalsh(basis.conj().T @ s @ basis).min())


class _GridCertifier:
    """Precomputed projected pieces for fast (eta, c0) sweeps over a grid."""

    def __init__(self, params: ModelParams, grid_points):
        # grid_points: list of (epsilon, xi_vector)
        self.points = []
        for eps, xi in grid_points:
            p = params.with_epsilon(eps)
            xi = np.asarray(xi, dtype=float)
            sym = assemble_symbol(p, xi)
            basis = gauss_basis(p, xi)
            q0, q1, q2 = _form_pieces(p, xi)
            r1 = dissipation_matrix(p, xi, 1.0)
            m = sym.m

            def proj(a, b=basis):
                return b.conj().T @ a @ b

            g0 = -proj(m.conj().T @ q0 + q0 @ m)
            g1 = -proj(m.conj().T @ q1 + q1 @ m)
            g2 = -proj(m.conj().T @ q2 + q2 @ m)
            rp = proj(r1)
            w = weighted_metric(p)
            self.points.append(
                {
                    "epsilon": eps,
                    "xi": xi,
                    "q_pieces": (q0, q1, q2),
                    "w": w,
                    "g_pieces": (g0, g1, g2),
                    "r_proj": rp,
                    "scale": float(np.linalg.norm(m.conj().T @ q0 + q0 @ m) + np.linalg.norm(r1)),
                }
            )

    def min_gap(self, eta: float, c0: float, rel_tol: float):
        """Worst (gap + tol*scale) over the grid, and the worst point index."""
        worst, worst_idx = np.inf, -1
        for idx, pt in enumerate(self.points):
            g0, g1, g2 = pt["g_pieces"]
            s = g0 + eta * g1 + eta**1.25 * g2 - c0 * pt["r_proj"]
            gap = eigvalsh(s).min() + rel_tol * pt["scale"]
            if gap < worst:
                worst, worst_idx = gap, idx
        return float(worst), worst_idx

    def equivalence(self, eta: float):
        """Worst c_low and c_high over the grid."""
        c_low, c_high = np.inf, -np.inf
        for pt in self.points:
            q0, q1, q2 = pt["q_pieces"]
            q = q0 + eta * q1 + eta**1.25 * q2
            vals = eigh(q, pt["w"], eigvals_only=True)
            c_low = min(c_low, vals[0])
            c_high = max(c_high, vals[-1])
        return float(c_low), float(c_high)

    def gap_table(self, eta: float, c0: float):
        rows = []
        for pt in self.points:
            g0, g1, g2 = pt["g_pieces"]
            s = g0 + eta * g1 + eta**1.25 * g2 - c0 * pt["r_proj"]
            q0, q1, q2 = pt["q_pieces"]
            q = q0 + eta * q1 + eta**1.25 * q2
            vals = eigh(q, pt["w"], eigvals_only=True)
            rows.append(
                {
                    "epsilon": float(pt["epsilon"]),
                    "xi_norm": float(np.linalg.norm(pt["xi"])),
                    "gap": float(eigvalsh(s).min()),
                    "scale": pt["scale"],
                    "c_low": float(vals[0]),
                    "c_high": float(vals[-1]),
                }
            )
        return rows


def search_eta_c0(
    params: ModelParams,
    xi_grid,
    epsilons=None,
    directions=None,
    rel_tol: float = 1e-10,
    cond_cap: float = 1e3,
    bisect_steps: int = 50,
) -> dict:
    """Certified search for the cross-term weight and decay rate.

    Bisects eta in (0, 1) for the largest weight keeping (i) the form
    equivalent to the weighted amplitude with condition number <= cond_cap
    and (ii) the dissipation gap at c0 = 0 nonnegative over the whole grid;
    the returned eta_star is half that boundary value.  Then c0 is maximized
    by bisection subject to gap >= -rel_tol * scale at every grid point.
    Fails with a report naming the worst xi if no admissible eta exists.
    """
    xi_grid = np.atleast_1d(np.asarray(xi_grid, dtype=float))
    if xi_grid.size == 0:
        raise ValueError("xi grid must be nonempty")
    if epsilons is None:
        epsilons = [params.epsilon]
    if directions is None:
        directions = [np.array([1.0, 0.0, 0.0])]
    if xi_grid.ndim == 1:
        points = [
            (eps, r * np.asarray(d, dtype=float) / np.linalg.norm(d))
            if r > 0
            else (eps, np.zeros(3))
            for eps in epsilons
            for r in xi_grid
            for d in directions
        ]
    else:
        points = [(eps, xi) for eps in epsilons for xi in xi_grid]
    cert = _GridCertifier(params, points)

    def admissible(eta):
        c_low, c_high = cert.equivalence(eta)
        if c_low <= 0 or c_high / c_low > cond_cap:
            return False
        gap, _ = cert.min_gap(eta, 0.0, rel_tol)
        return gap >= 0.0

    # grow/bisect the admissible eta interval (0, eta_max)
    if not admissible(1e-4):
        gap, idx = cert.min_gap(1e-4, 0.0, rel_tol)
        return {
            "eta_star": None,
            "c0_star": None,
            "failed": True,
            "worst_xi": cert.points[idx]["xi"].tolist(),
            "worst_gap": gap,
        }
    lo, hi = 1e-4, 1.0 - 1e-12
    if admissible(hi):
        eta_max = hi
    else:
        for _ in range(bisect_steps):
            mid = 0.5 * (lo + hi)
            if admissible(mid):
                lo = mid
            else:
                hi = mid
        eta_max = lo
    eta_star = 0.5 * eta_max

    def c0_ok(c0):
        gap, _ = cert.min_gap(eta_star, c0, rel_tol)
        return gap >= 0.0

    lo, hi = 0.0, 1.0
    while c0_ok(hi) and hi < 1e6:
        hi *= 2.0
    for _ in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        if c0_ok(mid):
            lo = mid
        else:
            hi = mid
    c0_star = lo
    c_low, c_high = cert.equivalence(eta_star)
    table = cert.gap_table(eta_star, c0_star)
    worst_row = min(table, key=lambda row: row["gap"] / row["scale"])
    return {
        "eta_star": float(eta_star),
        "eta_max": float(eta_max),
        "c0_star": float(c0_star),
        "c_low": c_low,
        "c_high": c_high,
        "cond_number": float(c_high / c_low),
        "rel_tol": rel_tol,
        "failed": False,
        "worst_xi": worst_row["xi_norm"],
        "gap_table": table,
    }
