"""Periodic-grid field arithmetic.

Conventions used throughout the package:

* The box is [-L/2, L/2)^2 sampled on an N x N grid, dx = L/N, with 'ij'
  array indexing: field[i, j] lives at x = (x1[i], x2[j]).
* Fourier coefficients approximate the continuum transform
  fhat(k) = integral f(x) exp(-i k.x) dx, i.e. fhat = dx^2 * fft2(f), on the
  dual lattice k_n = 2 pi n / L.  Derivatives multiply fhat by i k.
* All k-space integrals carry the measure dk / (2 pi)^2, so Parseval reads
  <f, g> = sum f g dx^2 = (1/L^2) sum_k fhat conj(ghat).
* The k = 0 mode of every solenoidal field, and of the Coulomb potential, is
  pinned to zero (exact for neutral charge densities, not an approximation).

J denotes the rotation matrix [[0, 1], [-1, 0]], so (J a) = (a2, -a1) and the
scalar curl is div(J A) = d1 A2 - d2 A1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import jv

from .errors import ConfigError, DomainError

__all__ = [
    "Grid", "ScalarField", "VectorField", "ChargeDensity",
    "make_charge_density", "project_solenoidal", "coulomb_potential",
    "shift_density", "norms", "inner_l2", "divergence_max",
]


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L/2, L/2)^2 with N points per axis."""

    L: float
    N: int

    def __post_init__(self):
        if self.L <= 0:
            raise ConfigError(f"grid.L must be positive, got {self.L}")
        if self.N < 16 or self.N % 2 != 0:
            raise ConfigError(f"grid.N must be even and >= 16, got {self.N}")

    @property
    def dx(self):
        return self.L / self.N

    @cached_property
    def x1(self):
        """Coordinates along one axis, wrapped to [-L/2, L/2)."""
        x = np.arange(self.N) * self.dx
        return np.where(x >= self.L / 2, x - self.L, x)

    @cached_property
    def xx(self):
        """Meshgrid coordinate arrays (X1, X2), 'ij' indexed."""
        return np.meshgrid(self.x1, self.x1, indexing="ij")

    @cached_property
    def kk(self):
        """Meshgrid wavevector arrays (K1, K2)."""
        k1d = 2 * np.pi * np.fft.fftfreq(self.N, d=self.dx)
        return np.meshgrid(k1d, k1d, indexing="ij")

    @cached_property
    def k2(self):
        kx, ky = self.kk
        return kx**2 + ky**2

    @cached_property
    def k2_safe(self):
        """|k|^2 with the zero mode replaced by 1 (safe divisor)."""
        k2 = self.k2.copy()
        k2[0, 0] = 1.0
        return k2

    @cached_property
    def kmag(self):
        return np.sqrt(self.k2)

    def phase(self, q):
        """Translation multiplier exp(-i k.q); f(x - q) has hat phase*fhat."""
        kx, ky = self.kk
        return np.exp(-1j * (kx * q[0] + ky * q[1]))

    def fft(self, values):
        return self.dx**2 * np.fft.fft2(values, axes=(-2, -1))

    def ifft(self, hat):
        return np.fft.ifft2(hat / self.dx**2, axes=(-2, -1)).real


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

class ScalarField:
    """Real scalar field on a Grid, with lazily synced Fourier coefficients."""

    __slots__ = ("grid", "_values", "_hat")

    def __init__(self, grid, values=None, hat=None):
        if values is None and hat is None:
            raise ValueError("ScalarField needs values or hat")
        self.grid = grid
        self._values = None if values is None else np.asarray(values, dtype=float)
        self._hat = None if hat is None else np.asarray(hat, dtype=complex)

    @property
    def values(self):
        if self._values is None:
            self._values = self.grid.ifft(self._hat)
        return self._values

    @property
    def hat(self):
        if self._hat is None:
            self._hat = self.grid.fft(self._values)
        return self._hat


class VectorField:
    """Two-component real vector field, stored spectrally.

    The hat array has shape (2, N, N).  `solenoidal` is a constructor flag,
    set by operations that guarantee k.ahat(k) = 0; it is advisory and can be
    verified with :func:`divergence_max`.
    """

    __slots__ = ("grid", "_hat", "_values", "solenoidal")

    def __init__(self, grid, hat=None, values=None, solenoidal=False):
        if hat is None and values is None:
            raise ValueError("VectorField needs values or hat")
        self.grid = grid
        self._hat = None if hat is None else np.asarray(hat, dtype=complex)
        self._values = None if values is None else np.asarray(values, dtype=float)
        self.solenoidal = solenoidal

    @classmethod
    def zero(cls, grid):
        return cls(grid, hat=np.zeros((2, grid.N, grid.N), dtype=complex), solenoidal=True)

    @property
    def hat(self):
        if self._hat is None:
            self._hat = self.grid.fft(self._values)
        return self._hat

    @property
    def values(self):
        if self._values is None:
            self._values = self.grid.ifft(self._hat)
        return self._values


def _hat_of(f):
    return f.hat if hasattr(f, "hat") else np.asarray(f)


# ---------------------------------------------------------------------------
# Spectral operations
# ---------------------------------------------------------------------------

def project_solenoidal(a):
    """Remove the longitudinal part: ahat -> ahat - k (k.ahat) / k^2.

    The k = 0 mode is set to zero.  Idempotent and self-adjoint; a gradient
    field is annihilated.
    """
    g = a.grid
    kx, ky = g.kk
    ah = a.hat
    kdot = kx * ah[0] + ky * ah[1]
    out = np.empty_like(ah)
    out[0] = ah[0] - kx * kdot / g.k2_safe
    out[1] = ah[1] - ky * kdot / g.k2_safe
    out[:, 0, 0] = 0.0
    return VectorField(g, hat=out, solenoidal=True)


def project_solenoidal_hat(grid, ah):
    """In-place-free hat-level projection used by the dynamics inner loops."""
    kx, ky = grid.kk
    kdot = kx * ah[0] + ky * ah[1]
    out = np.empty_like(ah)
    out[0] = ah[0] - kx * kdot / grid.k2_safe
    out[1] = ah[1] - ky * kdot / grid.k2_safe
    out[:, 0, 0] = 0.0
    return out


def divergence_max(a):
    """max_k |k.ahat| / max_k |ahat|, a grid measure of failed solenoidality."""
    g = a.grid
    kx, ky = g.kk
    ah = a.hat
    div = np.abs(kx * ah[0] + ky * ah[1])
    scale = np.max(np.abs(ah))
    if scale == 0.0:
        return 0.0
    return float(np.max(div) / scale)


def inner_l2(f, g):
    """L2 inner product via the Parseval-weighted Fourier sum.

    Accepts scalar or vector fields (vector fields contract over components).
    """
    fh, gh = _hat_of(f), _hat_of(g)
    grid = f.grid if hasattr(f, "grid") else g.grid
    return float(np.sum(fh * np.conj(gh)).real) / grid.L**2


def norms(f):
    """Return {'l2': ..., 'h1dot': ...} for a scalar or vector field.

    h1dot is the seminorm (sum |k|^2 |fhat|^2 / L^2)^(1/2); the constant mode
    carries zero weight, which is the periodic-box substitute for the
    homogeneous norm on the plane.
    """
    fh = _hat_of(f)
    grid = f.grid
    w = np.abs(fh) ** 2
    l2 = np.sqrt(float(np.sum(w)) / grid.L**2)
    h1 = np.sqrt(float(np.sum(grid.k2 * w)) / grid.L**2)
    return {"l2": l2, "h1dot": h1}


def coulomb_potential(rho):
    """Static potential of a neutral density: Phi0hat = rhohat / k^2, zero mode 0.

    Satisfies Laplacian(Phi0) = -rho spectrally.  Non-neutral densities are
    rejected: without neutrality the 2D potential grows logarithmically and
    has no periodic representative.
    """
    g = rho.grid
    rh = rho.hat
    scale = np.max(np.abs(rh))
    if scale > 0 and abs(rh[0, 0]) > 1e-10 * scale:
        raise DomainError("coulomb_potential requires a neutral density (rhohat(0) = 0)")
    ph = rh / g.k2_safe
    ph[0, 0] = 0.0
    return ScalarField(g, hat=ph)


def shift_density(rho, q):
    """Band-limited translation rho(. - q): hat multiplies by exp(-i k.q)."""
    g = rho.grid
    return ScalarField(g, hat=g.phase(q) * rho.hat)


# ---------------------------------------------------------------------------
# Charge densities
# ---------------------------------------------------------------------------

class _LaplacianGaussianProfile:
    """rho = Laplacian(g), g(r) = a exp(-r^2 / (2 sigma^2)).

    ghat(k) = 2 pi a sigma^2 exp(-sigma^2 k^2 / 2); rhohat = -k^2 ghat.
    Neutral by construction and super-exponentially band-limited.
    """

    def __init__(self, sigma, amplitude):
        self.sigma = sigma
        self.amplitude = amplitude

    def g_hat(self, k):
        s = self.sigma
        return self.amplitude * 2 * np.pi * s**2 * np.exp(-(s * k) ** 2 / 2)

    def rho_hat(self, k):
        return -(k**2) * self.g_hat(k)

    def drho_hat(self, k):
        """d/dk of the radial profile rho_hat."""
        s = self.sigma
        return k * (s**2 * k**2 - 2) * self.g_hat(k)

    def grad_factor(self, k):
        """grad rhohat = grad_factor(|k|) * k; finite at k = 0."""
        s = self.sigma
        return (s**2 * k**2 - 2) * self.g_hat(k)

    def rho_real(self, r2):
        s2 = self.sigma**2
        return self.amplitude * np.exp(-r2 / (2 * s2)) * (r2 / s2**2 - 2 / s2)

    def k_support(self):
        """Radius beyond which |rho_hat| and |drho_hat| are < 1e-16 * peak."""
        k = np.linspace(0, 400 / self.sigma, 40000)
        mag = np.maximum(np.abs(self.rho_hat(k)), np.abs(self.drho_hat(k)))
        peak = mag.max()
        if peak == 0.0:
            return 1.0 / self.sigma   # vanishing charge: any finite cutoff works
        above = np.nonzero(mag > 1e-16 * peak)[0]
        return float(k[above[-1]] + 2 * (k[1] - k[0]))


class _LaplacianBumpProfile:
    """Compactly supported alternative: rho = Laplacian(g),
    g(r) = a (1 - r^2/R^2)^p on r < R, with R = 4 sigma and p = 8.

    ghat(k) = 2 pi a R^2 2^p p! J_{p+1}(kR) / (kR)^{p+1}.  Only finitely
    smooth, so rhohat decays algebraically; used for sensitivity checks
    against the Gaussian default.
    """

    p = 8

    def __init__(self, sigma, amplitude):
        self.sigma = sigma
        self.amplitude = amplitude
        self.R = 4.0 * sigma
        self._c = 2 * np.pi * amplitude * self.R**2 * 2**self.p * gamma_fn(self.p + 1)

    def _bessel_ratio(self, nu, u):
        """J_nu(u) / u^(p+1) with the analytic limit near u = 0."""
        u = np.asarray(u, dtype=float)
        small = u < 1e-6
        us = np.where(small, 1.0, u)
        out = jv(nu, us) / us ** (self.p + 1)
        # J_nu(u) ~ (u/2)^nu / nu!  =>  ratio ~ u^(nu-p-1) / (2^nu nu!)
        lim = u ** (nu - self.p - 1) / (2**nu * gamma_fn(nu + 1))
        return np.where(small, lim, out)

    def g_hat(self, k):
        u = self.R * np.asarray(k, dtype=float)
        return self._c * self._bessel_ratio(self.p + 1, u)

    def dg_hat(self, k):
        u = self.R * np.asarray(k, dtype=float)
        return -self._c * self.R * self._bessel_ratio(self.p + 2, u)

    def rho_hat(self, k):
        return -(np.asarray(k, dtype=float) ** 2) * self.g_hat(k)

    def drho_hat(self, k):
        k = np.asarray(k, dtype=float)
        return -2 * k * self.g_hat(k) - k**2 * self.dg_hat(k)

    def grad_factor(self, k):
        k = np.asarray(k, dtype=float)
        return -2 * self.g_hat(k) - k * self.dg_hat(k)

    def rho_real(self, r2):
        a, R, p = self.amplitude, self.R, self.p
        u = np.clip(r2 / R**2, 0.0, 1.0)
        inside = r2 < R**2
        t = np.where(inside, 1.0 - u, 0.0)
        val = -4 * a * p / R**2 * t ** (p - 1) + 4 * a * p * (p - 1) * (r2 / R**4) * t ** (p - 2)
        return np.where(inside, val, 0.0)

    def k_support(self):
        # Algebraic decay: fall back to a generous fixed multiple of 1/sigma.
        k = np.linspace(0, 2000 / self.sigma, 200000)
        mag = np.maximum(np.abs(self.rho_hat(k)), np.abs(self.drho_hat(k)))
        peak = mag.max()
        if peak == 0.0:
            return 1.0 / self.sigma
        above = np.nonzero(mag > 1e-16 * peak)[0]
        return float(k[above[-1]] + 2 * (k[1] - k[0]))


_PROFILES = {
    "laplacian-gaussian": _LaplacianGaussianProfile,
    "laplacian-bump": _LaplacianBumpProfile,
}


@dataclass
class ChargeDensity:
    """Radial, neutral charge density with closed-form Fourier transform.

    `hat` is the closed-form transform sampled on the dual lattice (the FFT of
    the real-space samples agrees with it to aliasing error, which is checked
    in the test suite, not assumed here).
    """

    grid: Grid
    shape: str
    sigma: float
    amplitude: float
    profile: object = field(repr=False)

    @cached_property
    def values(self):
        x, y = self.grid.xx
        return self.profile.rho_real(x**2 + y**2)

    @cached_property
    def hat(self):
        return self.profile.rho_hat(self.grid.kmag)

    @cached_property
    def grad_hat(self):
        """grad_k rhohat as a (2, N, N) array (real; radial profile)."""
        kx, ky = self.grid.kk
        fac = self.profile.grad_factor(self.grid.kmag)
        return np.stack([fac * kx, fac * ky])

    @cached_property
    def jy_rho_hat(self):
        """hat of the spin current direction x -> J x rho(x), projected.

        Formed in real space from the grid coordinate field (J x = (x2, -x1))
        and the sampled density, then transformed and projected; for radial
        profiles it is already solenoidal, so the projection only prunes
        rounding.  Agrees with the closed form i J grad_k rhohat to the
        (negligible) wrap-around of x rho(x) at the box seam.
        """
        g = self.grid
        x, y = g.xx
        vals = np.stack([y * self.values, -x * self.values])
        hat = g.fft(vals)
        kx, ky = g.kk
        kdot = kx * hat[0] + ky * hat[1]
        hat[0] -= kx * kdot / g.k2_safe
        hat[1] -= ky * kdot / g.k2_safe
        hat[:, 0, 0] = 0.0
        return hat

    @cached_property
    def unit_current_hat(self):
        """Projected unit currents (P[e1 rho], P[e2 rho]) hats, shape (2, 2, N, N)."""
        g = self.grid
        kx, ky = g.kk
        out = np.zeros((2, 2, g.N, g.N), dtype=complex)
        rh = self.hat
        out[0, 0] = (1 - kx * kx / g.k2_safe) * rh
        out[0, 1] = -ky * kx / g.k2_safe * rh
        out[1, 0] = -kx * ky / g.k2_safe * rh
        out[1, 1] = (1 - ky * ky / g.k2_safe) * rh
        out[:, :, 0, 0] = 0.0
        return out

    @cached_property
    def phi0_hat(self):
        """Coulomb potential hat rhohat / k^2 (zero mode pinned)."""
        ph = self.hat / self.grid.k2_safe
        ph[0, 0] = 0.0
        return ph

    def k_support(self):
        return self.profile.k_support()

    def total_charge(self):
        return float(np.sum(self.values)) * self.grid.dx**2

    def radial_asymmetry(self):
        """Max deviation of the sampled rho from its dihedral-symmetry average.

        The 8 images of a grid point under axis flips and transposition share
        the same radius, so a radial profile makes them equal.
        """
        v = self.values

        def flip(a, axis):
            # x -> -x on the wrapped grid is index i -> (-i) mod N.
            return np.roll(np.flip(a, axis=axis), 1, axis=axis)

        images = [v, flip(v, 0), flip(v, 1), flip(flip(v, 0), 1)]
        images += [im.T for im in images]
        stack = np.stack(images)
        return float(np.max(stack.max(axis=0) - stack.min(axis=0)))


def make_charge_density(shape, sigma, amplitude, grid):
    """Construct a ChargeDensity, validating grid resolution bounds.

    sigma must be resolved (sigma >= 4 dx) and fit the box (sigma <= L/8) so
    the profile's tails are below machine precision at the boundary.
    """
    if shape not in _PROFILES:
        raise ConfigError(f"unknown density shape {shape!r}; options: {sorted(_PROFILES)}")
    if sigma < 4 * grid.dx:
        raise ConfigError(f"rho.sigma = {sigma} unresolved: need sigma >= 4 dx = {4 * grid.dx}")
    if sigma > grid.L / 8:
        raise ConfigError(f"rho.sigma = {sigma} too wide for the box: need sigma <= L/8 = {grid.L / 8}")
    profile = _PROFILES[shape](sigma, amplitude)
    return ChargeDensity(grid=grid, shape=shape, sigma=sigma, amplitude=amplitude, profile=profile)
