"""Analytic kernels of the wave simulator.

Pure functions and small frozen evaluators: the free-wave Fourier multiplier
and its pointwise bounds, compactly supported bump mollifiers with their
radial Fourier transforms, the Riesz spectral constant, Bessel multipliers,
the pair-energy constant ``tau_beta`` of the unit ball, and the limiting
variance/covariance functionals that the statistics layer compares against.

Everything here is deterministic and stateless (or frozen after
construction), so instances can be shared freely across threads.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, interpolate, special

__all__ = [
    "QuadratureError",
    "wave_multiplier",
    "multiplier_bound_suite",
    "BoundSuiteResult",
    "MollifierFamily",
    "mollifier_transform",
    "riesz_constant",
    "RieszKernel",
    "BesselMultiplier",
    "sphere_area",
    "ball_volume",
    "ball_overlap_volume",
    "tau_beta",
    "LimitFunctional",
    "limiting_variance",
    "limiting_covariance",
]

TWO_PI = 2.0 * math.pi


class QuadratureError(RuntimeError):
    """Raised when two refinement levels of a quadrature disagree."""


# ---------------------------------------------------------------------------
# free-wave multiplier
# ---------------------------------------------------------------------------

def wave_multiplier(t, r):
    """Fourier multiplier of the free wave propagator at time ``t``.

    Returns sin(2*pi*t*r) / (2*pi*r) for radial frequency r >= 0, with the
    limit value t at r = 0 and 0 for t <= 0.  Vectorized in both arguments.

    Routed through numpy's sinc so the bound |value| <= t holds in floating
    point with no tolerance (the ratio sin(y)/y never exceeds 1).
    """
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    # clamp the sinc ratio into [-1, 1]: true sin(y)/y never leaves it, and
    # the clamp makes |result| <= t immune to last-ulp libm excursions
    ratio = np.clip(np.sinc(2.0 * t_arr * r_arr), -1.0, 1.0)
    out = np.where(t_arr > 0.0, t_arr * ratio, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def _multiplier_diff(t, s, r):
    """|wave_multiplier(t,r) - wave_multiplier(s,r)| via the product identity.

    sin A - sin B = 2 cos((A+B)/2) sin((A-B)/2) keeps the difference exact in
    the near-cancellation regime and makes the chain
    |diff| <= 2|wave_multiplier(|t-s|/2, r)| <= |t-s| hold without tolerance.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    half = wave_multiplier(np.abs(t - s) / 2.0, r)
    cos_term = np.cos(np.pi * (t + s) * r)
    return 2.0 * np.abs(cos_term) * np.abs(half), np.abs(half)


@dataclass(frozen=True)
class BoundSuiteResult:
    passed: bool
    samples: int
    horizon: float
    worst_margins: dict
    runtime_seconds: float

    def summary(self) -> dict:
        return {
            "passed": bool(self.passed),
            "samples": int(self.samples),
            "horizon": float(self.horizon),
            "worst_margins": {k: float(v) for k, v in self.worst_margins.items()},
            "runtime_seconds": float(self.runtime_seconds),
        }


def multiplier_bound_suite(horizon: float = 2.0, samples: int = 100_000,
                           seed: int = 0, r_max: float = 1.0e3) -> BoundSuiteResult:
    """Check the propagator bounds on random (t, s, r) draws.

    Margins reported (all must be >= 0, no tolerance):

    * ``value_le_t``:        t - |v(t,r)|
    * ``square_decay``:      (1+2T^2)/(1+r^2) - v(t,r)^2
    * ``lipschitz_half``:    2|v(|t-s|/2,r)| - |v(t,r)-v(s,r)|
    * ``lipschitz_time``:    |t-s| - 2|v(|t-s|/2,r)|
    * ``bessel_domination``: sqrt(1+2T^2) (1+r^2)^{-1/2} - |v(t,r)|
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, horizon, samples)
    s = rng.uniform(0.0, horizon, samples)
    r = rng.uniform(0.0, r_max, samples)
    # deterministic edge rows: r = 0, t = s, t at the horizon, tiny r
    t = np.concatenate([t, [horizon, 0.5 * horizon, horizon, 0.3 * horizon]])
    s = np.concatenate([s, [0.0, 0.5 * horizon, horizon, 0.3 * horizon]])
    r = np.concatenate([r, [0.0, 1.0, 1e-12, 0.0]])

    v_t = np.abs(wave_multiplier(t, r))
    v_s = np.abs(wave_multiplier(s, r))
    diff, half = _multiplier_diff(t, s, r)

    const = 1.0 + 2.0 * horizon * horizon
    margins = {
        "value_le_t": float(np.min(t - v_t)),
        "square_decay": float(np.min(const / (1.0 + r * r) - v_t * v_t)),
        "lipschitz_half": float(np.min(2.0 * half - diff)),
        "lipschitz_time": float(np.min(np.abs(t - s) - 2.0 * half)),
        "bessel_domination": float(np.min(np.sqrt(const / (1.0 + r * r)) - v_t)),
    }
    # v_s participates through diff; also check its own bound for symmetry
    margins["value_le_t"] = min(margins["value_le_t"], float(np.min(s - v_s)))
    passed = all(m >= 0.0 for m in margins.values())
    return BoundSuiteResult(
        passed=passed,
        samples=int(t.size),
        horizon=float(horizon),
        worst_margins=margins,
        runtime_seconds=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------

def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1} (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def _cap_volume(d: int, h):
    """Volume of a unit-ball cap of height h in R^d via the regularized beta."""
    h = np.asarray(h, dtype=float)
    x = np.clip(2.0 * h - h * h, 0.0, 1.0)
    return 0.5 * ball_volume(d) * special.betainc((d + 1) / 2.0, 0.5, x)


def ball_overlap_volume(d: int, s):
    """|B_1 cap (B_1 + u)| for |u| = s, closed forms for d <= 3."""
    s = np.asarray(s, dtype=float)
    s = np.clip(s, 0.0, 2.0)
    if d == 1:
        out = 2.0 - s
    elif d == 2:
        half = np.clip(s / 2.0, 0.0, 1.0)
        out = 2.0 * np.arccos(half) - half * np.sqrt(np.clip(4.0 - s * s, 0.0, None))
    elif d == 3:
        out = math.pi * (2.0 - s) ** 2 * (4.0 + s) / 12.0
    else:
        out = 2.0 * _cap_volume(d, 1.0 - s / 2.0)
    return out


# ---------------------------------------------------------------------------
# tau_beta: pair energy of the unit ball under the Riesz kernel
# ---------------------------------------------------------------------------

def _tau_real(d: int, beta: float, epsrel: float) -> float:
    area = sphere_area(d)

    def integrand(s):
        return area * s ** (d - 1 - beta) * ball_overlap_volume(d, s)

    val, _ = integrate.quad(integrand, 0.0, 2.0, epsabs=0.0, epsrel=epsrel, limit=200)
    return val


def _tau_fourier(d: int, beta: float, cutoff: float, per_half_period: int) -> float:
    """c_beta * int |F 1_{B_1}|^2 |xi|^{beta-d} dxi as a radial Bessel integral.

    F 1_{B_1}(xi) = |xi|^{-d/2} J_{d/2}(2 pi |xi|), so the integral reduces to
    S_{d-1} int_0^inf J_{d/2}(2 pi rho)^2 rho^{beta-d-1} drho.  The oscillatory
    part is integrated in half-period chunks; the tail uses the mean of the
    Bessel asymptotics J^2(z) ~ 1/(pi z).
    """
    c = riesz_constant(d, beta)
    area = sphere_area(d)
    nu = d / 2.0

    def integrand(rho):
        return special.jv(nu, TWO_PI * rho) ** 2 * rho ** (beta - d - 1.0)

    # [0, 1]: integrand ~ rho^{beta-1} at the origin; QAGS extrapolation
    # resolves the algebraic endpoint singularity
    near, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-12,
                             limit=400)
    # [1, cutoff]: smooth and oscillatory, Gauss-Legendre per half period
    n_chunks = int(round((cutoff - 1.0) / 0.5))
    nodes, weights = leggauss(per_half_period)
    edges = 1.0 + 0.5 * np.arange(n_chunks + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    halfw = 0.25
    rho = (mids[:, None] + halfw * nodes[None, :]).ravel()
    w = np.tile(halfw * weights, n_chunks)
    far = float(np.sum(w * integrand(rho)))
    tail = cutoff ** (beta - d - 1.0) / (2.0 * math.pi ** 2 * (d + 1.0 - beta))
    return c * area * (near + far + tail)


def _tau_newton(beta: float, epsrel: float) -> float:
    """d = 3 route via the radial average of the Riesz potential over the ball.

    psi(r) = int_{B_1} |x-y|^{-beta} dy has the elementary radial profile
    (2 pi / (r (2-beta))) * int_0^1 s ((r+s)^{2-beta} - |r-s|^{2-beta}) ds,
    whose inner integral is closed-form; tau is 4 pi int_0^1 r^2 psi(r) dr.
    """
    a = 2.0 - beta

    def inner(r):
        plus = ((1.0 + r) ** (a + 2.0) - r ** (a + 2.0)) / (a + 2.0) \
            - r * ((1.0 + r) ** (a + 1.0) - r ** (a + 1.0)) / (a + 1.0)
        below = r * r ** (a + 1.0) / (a + 1.0) - r ** (a + 2.0) / (a + 2.0)
        above = (1.0 - r) ** (a + 2.0) / (a + 2.0) + r * (1.0 - r) ** (a + 1.0) / (a + 1.0)
        return plus - (below + above)

    def integrand(r):
        return r * inner(r) * 8.0 * math.pi ** 2 / (2.0 - beta)

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=epsrel, limit=200)
    return val


def tau_beta(d: int, beta: float, method: str = "auto") -> float:
    """Pair energy int_{B_1 x B_1} |x-y|^{-beta} dx dy of the unit ball.

    Methods: ``real`` (1-D overlap-volume quadrature), ``fourier``
    (Bessel integral against the Riesz spectral density), ``newton``
    (d = 3 radial-potential reduction), ``auto`` picks real for d = 1,
    newton for d = 3, fourier otherwise.  Two refinement levels must agree
    to 1e-6 relative or QuadratureError is raised.
    """
    if not 0.0 < beta < min(2.0, d):
        raise ValueError(f"tau_beta requires 0 < beta < min(2, d), got beta={beta}, d={d}")
    if method == "auto":
        method = {1: "real", 2: "fourier", 3: "newton"}.get(d, "fourier")
    if method == "real":
        coarse = _tau_real(d, beta, 1e-9)
        fine = _tau_real(d, beta, 1e-12)
    elif method == "fourier":
        cutoff = 400.0 if d <= 2 else 600.0
        coarse = _tau_fourier(d, beta, cutoff, 12)
        fine = _tau_fourier(d, beta, 2.0 * cutoff, 24)
    elif method == "newton":
        if d != 3:
            raise ValueError("newton reduction is the d = 3 route")
        coarse = _tau_newton(beta, 1e-9)
        fine = _tau_newton(beta, 1e-12)
    else:
        raise ValueError(f"unknown tau_beta method {method!r}")
    if not math.isfinite(fine) or abs(fine - coarse) > 1e-6 * abs(fine):
        raise QuadratureError(
            f"tau_beta({d}, {beta}, {method}) refinements disagree: {coarse} vs {fine}")
    return fine


# ---------------------------------------------------------------------------
# Riesz and Bessel spectral objects
# ---------------------------------------------------------------------------

def riesz_constant(d: int, beta: float) -> float:
    """Spectral density constant of |x|^{-beta}: F(|x|^{-beta}) = c |xi|^{beta-d}.

    Convention Ff(xi) = int e^{-2 pi i xi.x} f(x) dx, under which
    c = pi^{beta - d/2} Gamma((d-beta)/2) / Gamma(beta/2).
    """
    if not 0.0 < beta < d:
        raise ValueError(f"riesz_constant requires 0 < beta < d, got beta={beta}, d={d}")
    return math.pi ** (beta - d / 2.0) * math.gamma((d - beta) / 2.0) / math.gamma(beta / 2.0)


@dataclass(frozen=True)
class RieszKernel:
    """Riesz covariance |x|^{-beta} with its spectral density c |xi|^{beta-d}."""

    dim: int
    beta: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not 0.0 < self.beta < min(2.0, self.dim):
            raise ValueError(
                "noise admissibility requires 0 < beta < min(2, d) "
                f"(finite wave spectral energy); got beta={self.beta}, d={self.dim}")

    @property
    def constant(self) -> float:
        return riesz_constant(self.dim, self.beta)

    def covariance(self, r):
        r = np.asarray(r, dtype=float)
        return r ** (-self.beta)

    def spectral_density(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.constant * rho ** (self.beta - self.dim)

    def tau(self) -> float:
        return tau_beta(self.dim, self.beta)


@dataclass(frozen=True)
class BesselMultiplier:
    """Fourier multiplier (1 + |xi|^2)^{-alpha/2} of the Bessel kernel."""

    alpha: float

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")

    def value(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = (1.0 + rho * rho) ** (-self.alpha / 2.0)
        if out.ndim == 0:
            return float(out)
        return out


# ---------------------------------------------------------------------------
# mollifier family
# ---------------------------------------------------------------------------

def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    ri = r[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ri * ri))
    return out


@lru_cache(maxsize=8)
def _bump_mass(d: int) -> float:
    """Integral of the unnormalized bump over R^d (radial quadrature)."""
    val, _ = integrate.quad(lambda r: float(_bump(np.array([r]))[0]) * r ** (d - 1),
                            0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return sphere_area(d) * val


def _bump_transform_quad(d: int, rho: float) -> float:
    """Radial Fourier transform of the normalized bump at |xi| = rho.

    High-precision single-point path; uses QUADPACK's oscillatory weights for
    d in {1, 3} and dense adaptive subdivision against J_nu otherwise.
    """
    if rho < 1e-12:
        return 1.0
    w = TWO_PI * rho
    bump = lambda r: float(_bump(np.array([r]))[0])
    if d == 1:
        val, _ = integrate.quad(bump, 0.0, 1.0, weight="cos", wvar=w,
                                epsabs=1e-14, epsrel=1e-12, limit=400)
        raw = 2.0 * val
    elif d == 3:
        val, _ = integrate.quad(lambda r: r * bump(r), 0.0, 1.0, weight="sin",
                                wvar=w, epsabs=1e-14, epsrel=1e-12, limit=400)
        raw = 2.0 * val / rho
    else:
        nu = d / 2.0 - 1.0
        lim = int(200 + 4 * rho)
        val, _ = integrate.quad(
            lambda r: bump(r) * special.jv(nu, w * r) * r ** (d / 2.0),
            0.0, 1.0, epsabs=1e-14, epsrel=1e-11, limit=lim)
        raw = TWO_PI * val / rho ** nu if nu != 0.0 else TWO_PI * val
    return raw / _bump_mass(d)


_TABLE_RHO_MAX = 64.0


@lru_cache(maxsize=8)
def _bump_transform_table(d: int):
    """Cubic-spline table of the normalized bump transform on [0, 64]."""
    n_rho = 6001
    rho = np.linspace(0.0, _TABLE_RHO_MAX, n_rho)
    n_nodes = 96 + int(12 * _TABLE_RHO_MAX)
    x, w = leggauss(n_nodes)
    r = 0.5 * (x + 1.0)
    wr = 0.5 * w
    b = _bump(r)
    arg = TWO_PI * np.outer(rho, r)
    if d == 1:
        raw = 2.0 * (np.cos(arg) * (b * wr)).sum(axis=1)
    elif d == 2:
        raw = TWO_PI * (special.j0(arg) * (b * r * wr)).sum(axis=1)
    elif d == 3:
        with np.errstate(invalid="ignore", divide="ignore"):
            raw = 2.0 * (np.sin(arg) * (b * r * wr)).sum(axis=1)
            raw = np.where(rho > 1e-12, raw / np.where(rho > 0, rho, 1.0),
                           2.0 * TWO_PI * ((b * r * r * wr).sum()))
        raw[0] = 2.0 * TWO_PI * (b * r * r * wr).sum()
    elif d == 4:
        with np.errstate(invalid="ignore", divide="ignore"):
            raw = TWO_PI * (special.jv(1.0, arg) * (b * r * r * wr)).sum(axis=1)
            raw = np.where(rho > 1e-12, raw / np.where(rho > 0, rho, 1.0),
                           math.pi * TWO_PI * (b * r ** 3 * wr).sum())
        raw[0] = math.pi * TWO_PI * (b * r ** 3 * wr).sum()
    else:
        raise ValueError(f"unsupported dimension {d}")
    profile = raw / _bump_mass(d)
    profile[0] = 1.0
    return interpolate.CubicSpline(rho, profile)


def _bump_transform(d: int, rho):
    """Normalized bump transform, table for rho <= 64, quadrature beyond."""
    rho = np.asarray(rho, dtype=float)
    scalar = rho.ndim == 0
    rho = np.atleast_1d(np.abs(rho))
    out = np.empty_like(rho)
    near = rho <= _TABLE_RHO_MAX
    if near.any():
        spline = _bump_transform_table(d)
        # clamp: |F Lambda| <= int Lambda = 1 analytically; the spline may
        # wiggle past the bound by ~1e-9 near the origin
        out[near] = np.clip(spline(rho[near]), -1.0, 1.0)
        out[near & (rho < 1e-12)] = 1.0
    far = ~near
    if far.any():
        out[far] = [max(-1.0, min(1.0, _bump_transform_quad(d, rv))) for rv in rho[far]]
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class MollifierFamily:
    """Dyadic family Lambda_n(x) = a_n^d Lambda(a_n x) of bump mollifiers.

    Lambda is the normalized radial bump exp(-1/(1-|x|^2)) supported in the
    unit ball; the scale rule is a_n = 2^n, so sum 1/a_n = 1 and the family
    supports the approximation chain of the solver.  ``transform`` returns
    the Fourier transform of Lambda_n, i.e. FLambda(|xi|/a_n), which equals 1
    at xi = 0 exactly and lies in [-1, 1] everywhere.
    """

    dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2, 3, 4):
            raise ValueError("mollifier family supports d in {1, 2, 3, 4}")

    def scale(self, n: int) -> float:
        if n < 1:
            raise ValueError("mollifier index n must be >= 1")
        return 2.0 ** n

    def transform(self, n: int, rho):
        """F Lambda_n at radial frequency rho = |xi| (any array shape).

        Callers with wavevectors compute the Euclidean norm first; the
        transform is radial so only |xi| enters.
        """
        rho = np.abs(np.asarray(rho, dtype=float))
        return _bump_transform(self.dim, rho / self.scale(n))

    def transform_quad(self, n: int, rho: float) -> float:
        """Quadrature-only path (slow, high precision), for cross-checks."""
        return _bump_transform_quad(self.dim, abs(float(rho)) / self.scale(n))


def mollifier_transform(n: int, rho, dim: int = 1):
    """Module-level convenience for the default family in dimension ``dim``."""
    return MollifierFamily(dim).transform(n, rho)


# ---------------------------------------------------------------------------
# limiting variance / covariance functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LimitFunctional:
    """Tabulated inputs of the limit variance/covariance integrals.

    ``mean_square_path`` tabulates s -> E[sigma(U(s,0))^2] and ``mean_path``
    tabulates s -> E[sigma(U(s,0))] on the (ascending) grid ``times``.  The
    integrals treat the paths as piecewise linear and integrate the product
    with the wave weights (t-r)(s-r) in closed form per interval, so
    polynomial paths are integrated exactly.
    """

    kernel: RieszKernel
    times: np.ndarray
    mean_square_path: np.ndarray
    mean_path: np.ndarray
    tau: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        msq = np.asarray(self.mean_square_path, dtype=float)
        mp = np.asarray(self.mean_path, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("times must be a 1-D grid with at least two points")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if msq.shape != times.shape or mp.shape != times.shape:
            raise ValueError("paths must share the times grid")
        if not (np.all(np.isfinite(msq)) and np.all(np.isfinite(mp))):
            raise ValueError("paths must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "mean_square_path", msq)
        object.__setattr__(self, "mean_path", mp)
        tau = self.tau if self.tau is not None else self.kernel.tau()
        if not (math.isfinite(tau) and tau > 0.0):
            raise ValueError("tau must be finite and positive")
        object.__setattr__(self, "tau", float(tau))

    @classmethod
    def constant_sigma(cls, kernel: RieszKernel, sigma_value: float,
                       horizon: float, tau: float | None = None) -> "LimitFunctional":
        times = np.array([0.0, horizon])
        return cls(kernel=kernel,
                   times=times,
                   mean_square_path=np.full(2, sigma_value ** 2),
                   mean_path=np.full(2, sigma_value),
                   tau=tau)


def _piecewise_product_integral(times, values, s: float, t: float, square: bool) -> float:
    """int_0^{min(s,t)} (s-r)(t-r) p(r) dr for piecewise-linear tabulated p.

    With square=True the integrand uses p(r)^2 (p stays piecewise linear, its
    square piecewise quadratic); everything is integrated in closed form.
    """
    upper = min(s, t)
    if upper <= times[0]:
        return 0.0
    total = 0.0
    poly_w = np.array([s * t, -(s + t), 1.0])  # (s-r)(t-r) in powers of r
    for i in range(times.size - 1):
        a, b = times[i], times[i + 1]
        if a >= upper:
            break
        b = min(b, upper)
        va, vb = values[i], values[i + 1]
        slope = (vb - va) / (times[i + 1] - times[i])
        lin = np.array([va - slope * times[i], slope])
        p = np.polynomial.polynomial.polymul(lin, lin) if square else lin
        integrand = np.polynomial.polynomial.polymul(poly_w, p)
        anti = np.polynomial.polynomial.polyint(integrand)
        total += np.polynomial.polynomial.polyval(b, anti) - \
            np.polynomial.polynomial.polyval(a, anti)
    return float(total)


def _check_range(lf: LimitFunctional, t: float):
    if t < lf.times[0] - 1e-12 or t > lf.times[-1] + 1e-12:
        raise ValueError(
            f"time {t} outside tabulated range [{lf.times[0]}, {lf.times[-1]}]")


def limiting_variance(t: float, lf: LimitFunctional) -> float:
    """tau_beta * int_0^t (t-s)^2 E[sigma(U(s,0))^2] ds."""
    _check_range(lf, t)
    return lf.tau * _piecewise_product_integral(lf.times, lf.mean_square_path,
                                                t, t, square=False)


def limiting_covariance(s: float, t: float, lf: LimitFunctional) -> float:
    """tau_beta * int_0^{s^t} (s-r)(t-r) E[sigma(U(r,0))]^2 dr."""
    _check_range(lf, s)
    _check_range(lf, t)
    return lf.tau * _piecewise_product_integral(lf.times, lf.mean_path,
                                                s, t, square=True)
