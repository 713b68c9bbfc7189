"""Independent ground truth for linear-noise second moments.

Three unrelated routes pin down the same quantities the spectral solver
estimates by Monte Carlo:

* continuum quadrature (``LinearCaseOracle``): for constant sigma the ball
  average F_R(t) is Gaussian with explicitly integrable spectral second
  moments; the time integrals are done in closed form and the remaining
  1-D frequency integral by singularity-removing substitution plus
  half-period Gauss blocks, convergence-checked across two refinements;
* ``closed_form_tau``: the pair-energy constant by antiderivative (d = 1)
  and by radial quadrature of the exact ball-average profile (d = 3),
  independent of the quadrature routes in ``kernels``;
* a dense sampler (``DenseSimulator`` + ``dense_sample_path``): Gaussian
  increments drawn through a factored covariance matrix built by direct
  cosine summation, evolved by a leapfrog finite-difference stepper.  No
  transforms anywhere in the sampling path, so it shares no code with the
  spectral scheme it validates.

The discrete-prediction helpers at the bottom give the exact second
moments of the spectral scheme itself (constant sigma), useful to separate
discretization bias from Monte Carlo error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .kernels import (MollifierFamily, QuadratureError, RieszKernel,
                      wave_multiplier)
from .noise import SpectralWeights
from .solver import SigmaSpec, ball_weights

__all__ = [
    "variance_time_integral",
    "covariance_time_integral",
    "increment_time_integral",
    "LinearCaseOracle",
    "exact_variance_quadrature",
    "exact_covariance_quadrature",
    "exact_increment_quadrature",
    "closed_form_tau",
    "DenseSimulator",
    "dense_sample_path",
    "mode_variance_table",
    "discrete_center_variance",
    "discrete_average_variance",
    "picard_first_gap_prediction",
]


# ---------------------------------------------------------------------------
# closed-form time integrals of products of wave multipliers
# ---------------------------------------------------------------------------

def _one_minus_sinc(x):
    """1 - sin(pi x)/(pi x), series-stabilized near zero."""
    x = np.abs(np.asarray(x, dtype=float))
    px = np.pi * x
    out = np.empty_like(px)
    small = px < 1e-3
    s = px[small]
    out[small] = (s * s / 6.0) * (1.0 - s * s / 20.0)
    ps = px[~small]
    out[~small] = 1.0 - np.sin(ps) / ps
    return out


def variance_time_integral(t: float, xi):
    """int_0^t wave_multiplier(t - s, xi)^2 ds in closed form.

    Equals t^3/3 at xi = 0 and decays like t/(2 (2 pi xi)^2).
    """
    xi = np.asarray(xi, dtype=float)
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return np.zeros_like(xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (t / 2.0) * _one_minus_sinc(4.0 * t * xi) \
            / (2.0 * np.pi * xi) ** 2
    return np.where(xi == 0.0, t ** 3 / 3.0, val)


def covariance_time_integral(s: float, t: float, xi):
    """int_0^{min(s,t)} wave_multiplier(t - r, xi) wave_multiplier(s - r, xi) dr.

    Closed form via product-to-sum; the small-frequency branch uses the
    polynomial limit lo^2 hi / 2 - lo^3 / 6 to avoid cancellation.
    """
    if s < 0.0 or t < 0.0:
        raise ValueError("times must be nonnegative")
    xi = np.asarray(xi, dtype=float)
    lo, hi = (s, t) if s <= t else (t, s)
    if lo == 0.0:
        return np.zeros_like(xi)
    a = 2.0 * np.pi * xi
    dlt = hi - lo
    limit_val = lo * lo * hi / 2.0 - lo ** 3 / 6.0
    with np.errstate(divide="ignore", invalid="ignore"):
        # sin(a hi + a lo) - sin(a hi - a lo) = 2 cos(a hi) sin(a lo)
        num = lo * np.cos(a * dlt) / 2.0 \
            - (lo / 2.0) * np.cos(a * hi) * np.sinc(a * lo / np.pi)
        general = num / a ** 2
    return np.where(a * hi < 1e-4, limit_val, general)


def increment_time_integral(s: float, t: float, xi):
    """Time part of E|F_R(t) - F_R(s)|^2 per frequency, closed form.

    int_0^lo (wm(hi-r) - wm(lo-r))^2 dr + int_lo^hi wm(hi-r)^2 dr with
    lo = min(s,t), hi = max(s,t); identically zero at s = t and equal to
    lo (hi-lo)^2 + (hi-lo)^3/3 at xi = 0.
    """
    if s < 0.0 or t < 0.0:
        raise ValueError("times must be nonnegative")
    xi = np.asarray(xi, dtype=float)
    lo, hi = (s, t) if s <= t else (t, s)
    dlt = hi - lo
    if dlt == 0.0:
        return np.zeros_like(xi)
    a = 2.0 * np.pi * xi
    # difference of multipliers: wm(hi-r) - wm(lo-r) = 2 cos(a (hi+lo-2r)/2)
    # * wm(dlt/2), so the square integrates to 4 wm(dlt/2)^2 * bracket
    bracket = lo / 2.0 \
        + (lo / 2.0) * np.cos(a * hi) * np.sinc(a * lo / np.pi)
    part1 = 4.0 * wave_multiplier(dlt / 2.0, xi) ** 2 * bracket
    part2 = variance_time_integral(dlt, xi)
    return part1 + part2


# ---------------------------------------------------------------------------
# continuum quadrature of ball-average second moments (d = 1)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearCaseOracle:
    """Exact second moments of F_R for constant sigma by 1-D quadrature.

    Every value is computed at two refinement levels (Gauss order and block
    width); a relative disagreement above ``rel_tol`` raises
    ``QuadratureError`` instead of returning a number.
    """

    riesz: RieszKernel
    rel_tol: float = 1e-6
    nodes: int = 12
    cutoff: float = 400.0

    def __post_init__(self):
        if self.riesz.dim != 1:
            raise ValueError(
                "continuum quadrature is implemented for d = 1 only")
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.nodes < 4:
            raise ValueError("nodes must be >= 4")

    # -- drivers ----------------------------------------------------------

    def variance(self, radius: float, t: float) -> float:
        """Var F_R(t) = 2 c int_0^inf K_R(xi) T_t(xi) xi^{beta-1} dxi."""
        self._check_radius(radius)
        if t == 0.0:
            return 0.0
        return self._second_moment(radius,
                                   lambda xi: variance_time_integral(t, xi))

    def covariance(self, radius: float, s: float, t: float) -> float:
        """Cov(F_R(s), F_R(t)) for constant unit sigma."""
        self._check_radius(radius)
        if min(s, t) == 0.0:
            return 0.0
        return self._second_moment(
            radius, lambda xi: covariance_time_integral(s, t, xi))

    def increment_second_moment(self, radius: float, s: float,
                                t: float) -> float:
        """E|F_R(t) - F_R(s)|^2 for constant unit sigma."""
        self._check_radius(radius)
        if s == t:
            return 0.0
        return self._second_moment(
            radius, lambda xi: increment_time_integral(s, t, xi))

    # -- machinery --------------------------------------------------------

    @staticmethod
    def _check_radius(radius: float):
        if not radius > 0.0:
            raise ValueError("radius must be positive")

    def _second_moment(self, radius: float, time_factor) -> float:
        beta = self.riesz.beta
        c = self.riesz.constant

        def integrand(xi):
            xi = np.asarray(xi, dtype=float)
            window = (np.sin(2.0 * np.pi * radius * xi) / (np.pi * xi)) ** 2
            return window * time_factor(xi) * xi ** (beta - 1.0)

        coarse, err_c = self._one_pass(integrand, radius, beta,
                                       self.nodes, 1, 3e-10)
        fine, err_f = self._one_pass(integrand, radius, beta,
                                     self.nodes + 8, 2, 1e-10)
        scale = max(abs(fine), abs(coarse), 1e-300)
        if abs(fine - coarse) > self.rel_tol * scale \
                or max(err_c, err_f) > self.rel_tol * scale:
            raise QuadratureError(
                "ball-average quadrature did not converge: refinements "
                f"differ by {abs(fine - coarse) / scale:.3e} relative "
                f"(tolerance {self.rel_tol:.1e})")
        return 2.0 * c * fine

    def _one_pass(self, integrand, radius: float, beta: float,
                  nodes: int, split: int, head_rel: float):
        head_edge = 1.0 / (4.0 * radius)

        # singularity-removing substitution xi = v^{1/beta} makes the head
        # integrand bounded; sin(2 pi R xi) completes only a quarter period
        # there so plain adaptive quadrature converges fast
        def head_f(v):
            xi = v ** (1.0 / beta)
            return float(integrand(np.asarray([xi]))[0]) \
                * xi ** (1.0 - beta) / beta

        head, head_err = integrate.quad(head_f, 0.0, head_edge ** beta,
                                        epsabs=0.0, epsrel=head_rel,
                                        limit=200)

        width = head_edge / split
        n_blocks = int(math.ceil((self.cutoff - head_edge) / width))
        gl_x, gl_w = np.polynomial.legendre.leggauss(nodes)
        body = 0.0
        chunk = 1 << 16
        for start in range(0, n_blocks, chunk):
            stop = min(start + chunk, n_blocks)
            left = head_edge + width * np.arange(start, stop)
            xs = left[:, None] + (width / 2.0) * (gl_x[None, :] + 1.0)
            body += (width / 2.0) * float(
                (integrand(xs) * gl_w[None, :]).sum())
        return head + body, head_err


def exact_variance_quadrature(radius: float, t: float, riesz: RieszKernel,
                              **controls) -> float:
    return LinearCaseOracle(riesz, **controls).variance(radius, t)


def exact_covariance_quadrature(radius: float, s: float, t: float,
                                riesz: RieszKernel, **controls) -> float:
    return LinearCaseOracle(riesz, **controls).covariance(radius, s, t)


def exact_increment_quadrature(radius: float, s: float, t: float,
                               riesz: RieszKernel, **controls) -> float:
    return LinearCaseOracle(riesz, **controls).increment_second_moment(
        radius, s, t)


# ---------------------------------------------------------------------------
# pair-energy constant, independent routes
# ---------------------------------------------------------------------------

def _newton_profile(r: float, a: float) -> float:
    """int_{B_1} |x - y|^{a-2} dy in d = 3 at |x| = r, inner integrals closed.

    Spherical means reduce the ball integral to
    (2 pi / (r a)) int_0^1 s [(r+s)^a - |r-s|^a] ds, and both pieces have
    elementary antiderivatives.  a = 1 reproduces the classical interior
    potential 2 pi (1 - r^2/3).
    """
    up = 1.0 + r
    i_plus = (up ** (a + 2.0) - r ** (a + 2.0)) / (a + 2.0) \
        - r * (up ** (a + 1.0) - r ** (a + 1.0)) / (a + 1.0)
    i_minus = r ** (a + 2.0) * (1.0 / (a + 1.0) - 1.0 / (a + 2.0)) \
        + (1.0 - r) ** (a + 2.0) / (a + 2.0) \
        + r * (1.0 - r) ** (a + 1.0) / (a + 1.0)
    return 2.0 * np.pi / (r * a) * (i_plus - i_minus)


def closed_form_tau(d: int, beta: float) -> float:
    """Pair energy of the unit ball under |x|^{-beta}, closed routes.

    d = 1 is a plain antiderivative; d = 3 integrates the exact radial
    ball-average profile.  Other dimensions have no elementary form here.
    """
    if d == 1:
        if not 0.0 < beta < 1.0:
            raise ValueError("d = 1 requires 0 < beta < 1")
        return 2.0 ** (3.0 - beta) / ((1.0 - beta) * (2.0 - beta))
    if d == 3:
        if not 0.0 < beta < 2.0:
            raise ValueError("d = 3 requires 0 < beta < 2")
        if beta == 1.0:
            return 32.0 * np.pi ** 2 / 15.0
        a = 2.0 - beta
        val, err = integrate.quad(
            lambda r: 4.0 * np.pi * r * r * _newton_profile(r, a),
            0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
        if not math.isfinite(val) or err > 1e-8 * abs(val):
            raise QuadratureError(
                f"radial profile quadrature unreliable: err={err:.3e}")
        return float(val)
    raise ValueError(f"closed form available only for d in {{1, 3}}, got {d}")


# ---------------------------------------------------------------------------
# dense covariance sampler and leapfrog stepper
# ---------------------------------------------------------------------------

_DENSE_SITE_CAP = {1: 32, 2: 16}


@dataclass
class DenseSimulator:
    """Brute-force noise generator on a tiny grid.

    The increment covariance Gamma = dt * C with
    C_ij = sum_k w_k cos(2 pi xi_k (x_i - x_j)) is assembled by direct
    cosine summation over modes (the band-limited stationary covariance the
    spectral weights imply; the raw image sum of |x|^{-beta} diverges for
    every admissible beta, so the band-limited form IS the torus model).
    Eigenvalues are clipped at zero within a strict budget and the factor
    ``factor @ factor.T = gamma`` drives the sampler.
    """

    weights: SpectralWeights
    dt: float
    gamma: np.ndarray = field(init=False, repr=False)
    factor: np.ndarray = field(init=False, repr=False)
    clip_shift: float = field(init=False)

    def __post_init__(self):
        grid = self.weights.grid
        cap = _DENSE_SITE_CAP.get(grid.dim)
        if cap is None:
            raise ValueError("dense oracle supports d in {1, 2} only")
        if grid.size > cap:
            raise ValueError(
                f"dense oracle caps the grid at N <= {cap} in d = {grid.dim}")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        self.gamma, self.factor, self.clip_shift = self._build()

    def _build(self):
        grid = self.weights.grid
        n = grid.n_modes
        axes = grid.axis_coordinates()
        freqs = grid.axis_frequencies()
        mesh_x = np.meshgrid(*([axes] * grid.dim), indexing="ij")
        mesh_f = np.meshgrid(*([freqs] * grid.dim), indexing="ij")
        sites = np.stack([m.ravel() for m in mesh_x], axis=1)      # (n, d)
        modes = np.stack([m.ravel() for m in mesh_f], axis=1)      # (n, d)
        w_flat = self.weights.w.ravel()

        # covariance table on the grid by direct summation, then the full
        # matrix through periodic index differences
        phases = 2.0 * np.pi * (sites @ modes.T)                   # (n, n)
        table = np.cos(phases) @ w_flat                            # (n,)
        idx = np.indices(grid.shape).reshape(grid.dim, n)
        diff = (idx[:, :, None] - idx[:, None, :]) % grid.size
        flat_diff = np.ravel_multi_index(tuple(diff), grid.shape)
        gamma = self.dt * table[flat_diff]
        gamma = 0.5 * (gamma + gamma.T)

        evals, evecs = np.linalg.eigh(gamma)
        floor = -1e-8 * np.trace(gamma) / n
        if evals.min() < floor:
            raise ValueError(
                "dense covariance fails positive semidefiniteness: "
                f"min eigenvalue {evals.min():.3e} below budget {floor:.3e}")
        clipped = np.clip(evals, 0.0, None)
        gamma_psd = (evecs * clipped) @ evecs.T
        gamma_psd = 0.5 * (gamma_psd + gamma_psd.T)
        shift = float(np.linalg.norm(gamma_psd - gamma))
        scale = float(np.linalg.norm(gamma))
        if scale > 0.0 and shift >= 1e-6 * scale:
            raise ValueError(
                "eigenvalue clipping would distort the dense covariance: "
                f"Frobenius shift {shift:.3e} vs norm {scale:.3e}")
        try:
            factor = np.linalg.cholesky(gamma_psd)
        except np.linalg.LinAlgError:
            factor = evecs * np.sqrt(clipped)
        return gamma_psd, factor, shift

    def increments(self, rng: np.random.Generator, n_steps: int,
                   batch: int = 1) -> np.ndarray:
        """Draw (batch, n_steps, sites) noise increments with covariance gamma."""
        n = self.weights.grid.n_modes
        z = rng.standard_normal((batch, n_steps, n))
        return z @ self.factor.T


def _periodic_laplacian(u: np.ndarray, dim: int, dx: float) -> np.ndarray:
    out = -2.0 * dim * u
    for ax in range(1, dim + 1):
        out = out + np.roll(u, 1, axis=-ax) + np.roll(u, -1, axis=-ax)
    return out / dx ** 2


def dense_sample_path(sim: DenseSimulator, sigma: SigmaSpec, n_steps: int,
                      rng: np.random.Generator, batch: int = 1) -> np.ndarray:
    """Leapfrog paths driven by dense-covariance increments.

    u^{m+1} = 2 u^m - u^{m-1} + dt^2 Lap_h u^m + dt sigma(u^m) dW^m with a
    zero-velocity Taylor start; returns the full physical path of shape
    (batch, n_steps + 1, *grid.shape).  No transforms are involved.
    """
    grid = sim.weights.grid
    dx = grid.spacing
    dt = sim.dt
    if dt > dx / math.sqrt(grid.dim) + 1e-12:
        raise ValueError(
            f"CFL violation: dt = {dt:g} exceeds dx/sqrt(d) = "
            f"{dx / math.sqrt(grid.dim):g}")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    dw = sim.increments(rng, n_steps, batch)
    dw = dw.reshape((batch, n_steps) + grid.shape)

    path = np.empty((batch, n_steps + 1) + grid.shape)
    u_prev = np.ones((batch,) + grid.shape)
    path[:, 0] = u_prev
    u_curr = u_prev + (dt ** 2 / 2.0) * _periodic_laplacian(u_prev, grid.dim, dx) \
        + dt * sigma.value(u_prev) * dw[:, 0]
    path[:, 1] = u_curr
    for m in range(1, n_steps):
        u_next = 2.0 * u_curr - u_prev \
            + dt ** 2 * _periodic_laplacian(u_curr, grid.dim, dx) \
            + dt * sigma.value(u_curr) * dw[:, m]
        u_prev, u_curr = u_curr, u_next
        path[:, m + 1] = u_curr
    return path


# ---------------------------------------------------------------------------
# exact second moments of the spectral scheme itself (constant sigma)
# ---------------------------------------------------------------------------

def mode_variance_table(weights: SpectralWeights, dt: float,
                        n_steps: int) -> np.ndarray:
    """E|uhat_k(M dt)|^2 = dt w_k sum_{j<M} wave_multiplier(j dt, rho_k)^2.

    Exact for constant unit sigma under the left-point kick scheme; the
    j = 0 term vanishes, matching the final kick arriving with zero
    propagation time.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    rho = weights.grid.radial_frequencies()
    acc = np.zeros_like(rho)
    for j in range(n_steps):
        acc += wave_multiplier(j * dt, rho) ** 2
    return dt * weights.w * acc


def discrete_center_variance(weights: SpectralWeights, dt: float,
                             n_steps: int) -> float:
    """Var u(M dt, x) at any site, constant unit sigma."""
    return float(mode_variance_table(weights, dt, n_steps).sum())


def discrete_average_variance(weights: SpectralWeights, dt: float,
                              n_steps: int, radius: float,
                              weight: str = "indicator") -> float:
    """Var F_R(M dt) of the discrete scheme, constant unit sigma.

    The window enters through |S_k|^2 with S = dx^d fftn(window); Hermitian
    pairing is already accounted for by summing over all modes.
    """
    grid = weights.grid
    window = ball_weights(grid, radius, weight)
    s_hat = np.fft.fftn(window) * grid.spacing ** grid.dim
    table = mode_variance_table(weights, dt, n_steps)
    return float((np.abs(s_hat) ** 2 * table).sum())


def picard_first_gap_prediction(weights: SpectralWeights, dt: float,
                                n_steps: int) -> float:
    """L2 gap of the first smoothed iterate at the center, constant sigma.

    For sigma = 1 the first iterate differs from the direct solution only
    by the dyadic filter at index 1, mode by mode, so
    E|u_1 - u|^2 = sum_k (1 - filter_k)^2 E|uhat_k|^2 exactly.
    """
    grid = weights.grid
    fam = MollifierFamily(grid.dim)
    fac = fam.transform(1, grid.radial_frequencies())
    table = mode_variance_table(weights, dt, n_steps)
    return float(np.sqrt(((1.0 - fac) ** 2 * table).sum()))
