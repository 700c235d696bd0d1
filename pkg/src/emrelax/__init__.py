"""Spectral dissipation analysis and relaxation-limit toolkit for the damped
Euler-Maxwell system on periodic domains."""

__version__ = "0.1.0"

from . import bands, config, lyapunov, manifest, model, relax, solver, symbol  # noqa: F401
