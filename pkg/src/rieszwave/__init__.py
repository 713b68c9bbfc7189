"""Spectral Monte Carlo toolkit for hyperbolic SPDEs with long-range noise.

Simulates the semilinear stochastic wave equation driven by noise that is
white in time and has a Riesz (power-law) spatial correlation, and provides
the statistical machinery to test Gaussian fluctuation limits of spatial
averages, covariance structure, tightness moduli, and smoothed-noise
(Picard-type) approximations against independently computed targets.
"""

__version__ = "0.1.0"

from .kernels import (
    BesselMultiplier,
    LimitFunctional,
    MollifierFamily,
    QuadratureError,
    RieszKernel,
    limiting_covariance,
    limiting_variance,
    multiplier_bound_suite,
    riesz_constant,
    tau_beta,
    wave_multiplier,
)

__all__ = [
    "BesselMultiplier",
    "LimitFunctional",
    "MollifierFamily",
    "QuadratureError",
    "RieszKernel",
    "limiting_covariance",
    "limiting_variance",
    "multiplier_bound_suite",
    "riesz_constant",
    "tau_beta",
    "wave_multiplier",
    "__version__",
]
