"""Periodic spectral grids, dyadic frequency bands, and discrete Besov norms.

The torus [0, 2*pi*L)^dim carries wavenumbers on the lattice Z^dim / L.  The
lattice is partitioned into sharp dyadic annuli A_j = {2^(j-1) <= |k| < 2^j};
the zero mode joins the lowest occupied annulus.  Besov-type seminorms sum
band L2 norms with weights 2^(j*s); an epsilon-dependent threshold J_eps
splits the bands into low (j <= 0), medium (1 <= j <= J_eps - 1) and high
(j >= J_eps) regimes.  Time-integrated norms take the time norm per band
before summing over bands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import ModelParams

__all__ = [
    "PeriodicGrid",
    "SpectralField",
    "BandPartition",
    "transform_forward",
    "transform_backward",
    "band_project",
    "besov_norm",
    "regime_norm",
    "hybrid_norm",
    "grad",
    "div",
    "curl",
    "inv_neg_laplacian",
    "project_div_free",
    "TimeNormAccumulator",
    "FieldHistoryNorms",
    "energy_functional",
    "dissipation_functional",
    "initial_energy",
    "ENERGY_TERMS",
    "DISSIPATION_TERMS",
]

REGIMES = ("low", "medium", "high")


@dataclass(frozen=True, eq=False)
class PeriodicGrid:
    """Uniform grid on [0, 2*pi*length)^dim with power-of-two points per axis."""

    dim: int = 1
    n_points: int = 256
    length: float = 8.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        n = self.n_points
        if n < 4 or (n & (n - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 4, got {n}")
        if self.length <= 0:
            raise ValueError(f"length must be > 0, got {self.length}")

    @property
    def shape(self) -> tuple:
        return (self.n_points,) * self.dim

    @property
    def n_total(self) -> int:
        return self.n_points**self.dim

    @property
    def dx(self) -> float:
        return 2.0 * math.pi * self.length / self.n_points

    @cached_property
    def x(self) -> list:
        coords = self.dx * np.arange(self.n_points)
        out = []
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.n_points
            out.append(coords.reshape(shape))
        return out

    @cached_property
    def k3(self) -> np.ndarray:
        """Wavevector components (3, *shape); trailing components zero.

        Nyquist columns are zeroed so that spectral derivatives of real
        fields stay real.
        """
        n = self.n_points
        m = np.fft.fftfreq(n, d=1.0 / n)  # integers -n/2..n/2-1
        m = np.where(np.abs(m) == n // 2, 0.0, m)
        out = np.zeros((3,) + self.shape)
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = n
            out[axis] = (m / self.length).reshape(shape)
        return out

    @cached_property
    def k_norm(self) -> np.ndarray:
        """True lattice |k| (Nyquist at its actual frequency); used for band
        bookkeeping, unlike the derivative array k3."""
        n = self.n_points
        m = np.fft.fftfreq(n, d=1.0 / n)
        out = np.zeros(self.shape)
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = n
            out = out + ((m / self.length).reshape(shape)) ** 2
        return np.sqrt(out)

    @cached_property
    def k_sq(self) -> np.ndarray:
        return sum(self.k3[a] ** 2 for a in range(3))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        n = self.n_points
        m = np.fft.fftfreq(n, d=1.0 / n)
        keep = np.abs(m) < n / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = n
            mask &= keep.reshape(shape)
        return mask

    @cached_property
    def _dyadic(self):
        """(band_ids, slot_of_mode): sharp annuli indexed j, zero mode lowest."""
        kn = self.k_norm.ravel()
        nz = kn > 0
        j_of = np.zeros(kn.shape, dtype=int)
        j_of[nz] = np.floor(np.log2(kn[nz])).astype(int) + 1
        j_min = int(j_of[nz].min())
        j_max = int(j_of[nz].max())
        j_of[~nz] = j_min
        band_ids = list(range(j_min, j_max + 1))
        slot = j_of - j_min
        return band_ids, slot

    @property
    def band_ids(self) -> list:
        return self._dyadic[0]

    def band_slots(self) -> np.ndarray:
        return self._dyadic[1]

    def band_mask(self, j: int) -> np.ndarray:
        band_ids, slot = self._dyadic
        if j < band_ids[0] or j > band_ids[-1]:
            return np.zeros(self.shape, dtype=bool)
        return (slot == j - band_ids[0]).reshape(self.shape)


@dataclass
class SpectralField:
    """Scalar or 3-vector field stored as unitary DFT coefficients."""

    grid: PeriodicGrid
    coeffs: np.ndarray  # shape (*grid.shape) or (3, *grid.shape)

    @property
    def components(self) -> int:
        return 1 if self.coeffs.ndim == self.grid.dim else self.coeffs.shape[0]

    def l2(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def band_l2(self) -> np.ndarray:
        """Per-band L2 norms, ordered as grid.band_ids."""
        slot = self.grid.band_slots()
        power = np.abs(self.coeffs) ** 2
        if self.components > 1:
            power = power.sum(axis=0)
        sums = np.bincount(slot, weights=power.ravel(), minlength=len(self.grid.band_ids))
        return np.sqrt(sums)


def transform_forward(grid: PeriodicGrid, phys) -> SpectralField:
    """Physical samples -> unitary DFT coefficients."""
    phys = np.asarray(phys, dtype=float)
    if phys.shape[-grid.dim :] != grid.shape:
        raise ValueError(f"field shape {phys.shape} does not match grid {grid.shape}")
    axes = tuple(range(-grid.dim, 0))
    return SpectralField(grid, np.fft.fftn(phys, axes=axes, norm="ortho"))


def transform_backward(field: SpectralField) -> np.ndarray:
    """Unitary inverse transform; returns the real part of the samples."""
    axes = tuple(range(-field.grid.dim, 0))
    out = np.fft.ifftn(field.coeffs, axes=axes, norm="ortho")
    return out.real


@dataclass(frozen=True)
class BandPartition:
    """Dyadic bands of a grid plus the epsilon-dependent regime threshold."""

    grid: PeriodicGrid
    epsilon: float

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")

    @property
    def j_eps(self) -> int:
        return -math.floor(math.log2(self.epsilon)) + 1

    @property
    def band_ids(self) -> list:
        return self.grid.band_ids

    def regime_of(self, j: int) -> str:
        if j <= 0:
            return "low"
        if j <= self.j_eps - 1:
            return "medium"
        return "high"

    def bands_in(self, regime: str) -> list:
        if regime not in REGIMES:
            raise ValueError(f"unknown regime {regime!r}")
        return [j for j in self.band_ids if self.regime_of(j) == regime]


def band_project(f: SpectralField, part: BandPartition, j: int) -> SpectralField:
    """Zero all coefficients outside annulus A_j (empty beyond the grid)."""
    mask = f.grid.band_mask(j)
    return SpectralField(f.grid, f.coeffs * mask)


def _weighted_band_sum(band_l2: np.ndarray, band_ids, s: float, select=None) -> float:
    total = 0.0
    for idx, j in enumerate(band_ids):
        if select is not None and j not in select:
            continue
        total += 2.0 ** (j * s) * band_l2[idx]
    return float(total)


def besov_norm(f: SpectralField, part: BandPartition, s: float) -> float:
    """Sum over all bands of 2^(j*s) * (band L2 norm)."""
    return _weighted_band_sum(f.band_l2(), part.band_ids, s)


def regime_norm(f: SpectralField, part: BandPartition, regime: str, s: float) -> float:
    """Besov sum restricted to the bands of one regime."""
    select = set(part.bands_in(regime))
    return _weighted_band_sum(f.band_l2(), part.band_ids, s, select)


def hybrid_norm(f: SpectralField, s_low: float, s_high: float) -> float:
    """Two-exponent norm: s_low on bands j <= 0, s_high on bands j >= 1."""
    band_l2 = f.band_l2()
    total = 0.0
    for idx, j in enumerate(f.grid.band_ids):
        s = s_low if j <= 0 else s_high
        total += 2.0 ** (j * s) * band_l2[idx]
    return float(total)


# ---------------------------------------------------------------------------
# spectral calculus on coefficient arrays
# ---------------------------------------------------------------------------


def grad(grid: PeriodicGrid, scalar_coeffs: np.ndarray) -> np.ndarray:
    """i k f, returned with 3 components."""
    return 1j * grid.k3 * scalar_coeffs[None, ...]


def div(grid: PeriodicGrid, vec_coeffs: np.ndarray) -> np.ndarray:
    return 1j * sum(grid.k3[a] * vec_coeffs[a] for a in range(3))


def curl(grid: PeriodicGrid, vec_coeffs: np.ndarray) -> np.ndarray:
    k = grid.k3
    out = np.empty_like(vec_coeffs)
    out[0] = 1j * (k[1] * vec_coeffs[2] - k[2] * vec_coeffs[1])
    out[1] = 1j * (k[2] * vec_coeffs[0] - k[0] * vec_coeffs[2])
    out[2] = 1j * (k[0] * vec_coeffs[1] - k[1] * vec_coeffs[0])
    return out


def inv_neg_laplacian(grid: PeriodicGrid, scalar_coeffs: np.ndarray) -> np.ndarray:
    """(-Laplace)^(-1) with the zero-mean convention (zero mode -> 0)."""
    k_sq = grid.k_sq
    out = np.zeros_like(scalar_coeffs)
    nz = k_sq > 0
    out[nz] = scalar_coeffs[nz] / k_sq[nz]
    return out


def project_div_free(grid: PeriodicGrid, vec_coeffs: np.ndarray) -> np.ndarray:
    """Remove the longitudinal part: v - k (k.v)/|k|^2."""
    k = grid.k3
    k_sq = grid.k_sq
    kv = sum(k[a] * vec_coeffs[a] for a in range(3))
    factor = np.zeros_like(kv)
    nz = k_sq > 0
    factor[nz] = kv[nz] / k_sq[nz]
    return vec_coeffs - k * factor[None, ...]


# ---------------------------------------------------------------------------
# time-integrated band norms
# ---------------------------------------------------------------------------


class TimeNormAccumulator:
    """Per-band time series of band L2 norms with sup/L1/L2-in-time reduction.

    Samples must arrive on a uniform time grid (checked at reduction time).
    """

    def __init__(self, part: BandPartition):
        self.part = part
        self.times: list[float] = []
        self._series: list[np.ndarray] = []

    def update(self, t: float, field: SpectralField | None = None, band_l2=None):
        if band_l2 is None:
            if field is None:
                raise ValueError("provide a field or precomputed band norms")
            band_l2 = field.band_l2()
        if self.times and t <= self.times[-1]:
            raise ValueError("time samples must be strictly increasing")
        self.times.append(float(t))
        self._series.append(np.asarray(band_l2, dtype=float))

    def _check_uniform(self):
        t = np.asarray(self.times)
        if t.size < 2:
            return
        dt = np.diff(t)
        if not np.allclose(dt, dt[0], rtol=1e-8, atol=1e-12):
            raise ValueError("time grid is not uniform")

    def band_time_norms(self, mode: str) -> np.ndarray:
        """Reduce each band series over time: 'sup', 'l1' or 'l2'."""
        if not self._series:
            raise ValueError("no samples accumulated")
        series = np.asarray(self._series)  # (nt, nbands)
        if mode == "sup":
            return series.max(axis=0)
        self._check_uniform()
        if len(self.times) == 1:
            return np.zeros(series.shape[1])
        dt = self.times[1] - self.times[0]
        if mode == "l1":
            return np.trapezoid(series, dx=dt, axis=0)
        if mode == "l2":
            return np.sqrt(np.trapezoid(series**2, dx=dt, axis=0))
        raise ValueError(f"unknown time mode {mode!r}")

    def norm(self, s: float, mode: str, regime: str | None = None) -> float:
        select = set(self.part.bands_in(regime)) if regime else None
        return _weighted_band_sum(self.band_time_norms(mode), self.part.band_ids, s, select)

    def hybrid(self, s_low: float, s_high: float, mode: str) -> float:
        vals = self.band_time_norms(mode)
        total = 0.0
        for idx, j in enumerate(self.part.band_ids):
            total += 2.0 ** (j * (s_low if j <= 0 else s_high)) * vals[idx]
        return float(total)


# (variable, regime, regularity, time mode, epsilon power) tables of the two
# trajectory functionals; the energy rows apply to the weighted group
# (a, eps*u, E, H) while the dissipation rows weight single variables.
ENERGY_TERMS = [
    ("low", 0.5),
    ("medium", 1.5),
    ("high", 2.5),
]

DISSIPATION_TERMS = [
    ("a", "low", 0.5, 0),
    ("u", "low", 0.5, 0),
    ("e", "low", 0.5, 0),
    ("h", "low", 1.5, 0),
    ("a", "medium", 2.5, 0),
    ("u", "medium", 1.5, 0),
    ("e", "medium", 1.5, 0),
    ("h", "medium", 1.5, 0),
    ("a", "high", 2.5, 0),
    ("u", "high", 2.5, 1),
    ("e", "high", 1.5, 0),
    ("h", "high", 1.5, 0),
]


class FieldHistoryNorms:
    """Accumulates the four perturbation fields and composes the functionals."""

    def __init__(self, part: BandPartition):
        self.part = part
        self.acc = {name: TimeNormAccumulator(part) for name in ("a", "u", "e", "h")}

    def update(self, t, a: SpectralField, u: SpectralField, e: SpectralField, h: SpectralField):
        for name, f in zip(("a", "u", "e", "h"), (a, u, e, h)):
            self.acc[name].update(t, field=f)

    def energy(self) -> dict:
        """Sup-in-time group norms at regime-dependent regularity."""
        eps = self.part.epsilon
        breakdown = {}
        total = 0.0
        for regime, s in ENERGY_TERMS:
            group = (
                self.acc["a"].norm(s, "sup", regime)
                + eps * self.acc["u"].norm(s, "sup", regime)
                + self.acc["e"].norm(s, "sup", regime)
                + self.acc["h"].norm(s, "sup", regime)
            )
            weight = eps if regime == "high" else 1.0
            breakdown[f"{regime}:B{s}"] = weight * group
            total += weight * group
        breakdown["total"] = total
        return breakdown

    def dissipation(self) -> dict:
        """L2-in-time single-variable norms; twelve weighted terms."""
        eps = self.part.epsilon
        breakdown = {}
        total = 0.0
        for var, regime, s, eps_pow in DISSIPATION_TERMS:
            val = eps**eps_pow * self.acc[var].norm(s, "l2", regime)
            breakdown[f"{var}:{regime}:B{s}"] = val
            total += val
        breakdown["total"] = total
        return breakdown


def energy_functional(times, states, part: BandPartition) -> dict:
    """Energy functional of a sampled trajectory of (a, u, e, h) fields."""
    hist = FieldHistoryNorms(part)
    for t, (a, u, e, h) in zip(times, states):
        hist.update(t, a, u, e, h)
    return hist.energy()


def dissipation_functional(times, states, part: BandPartition) -> dict:
    """Dissipation functional of a sampled trajectory of (a, u, e, h) fields."""
    hist = FieldHistoryNorms(part)
    for t, (a, u, e, h) in zip(times, states):
        hist.update(t, a, u, e, h)
    return hist.dissipation()


def initial_energy(state0, part: BandPartition) -> dict:
    """Initial data norm: group B^(1/2) low + B^(3/2) medium + eps*B^(5/2) high.

    ``state0`` holds (a0, u0, e0, h0) where u0 is the original-scale initial
    velocity (epsilon times the rescaled one).
    """
    a, u, e, h = state0
    eps = part.epsilon
    breakdown = {}
    total = 0.0
    for regime, s in ENERGY_TERMS:
        group = sum(regime_norm(f, part, regime, s) for f in (a, u, e, h))
        weight = eps if regime == "high" else 1.0
        breakdown[f"{regime}:B{s}"] = weight * group
        total += weight * group
    breakdown["total"] = total
    return breakdown
