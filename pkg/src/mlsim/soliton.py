"""Closed-form travelling/spinning solutions and the momentum-map inversion.

A solution moving at constant velocity v (|v| < 1) and spinning at constant
rate omega is, in the comoving frame, a stationary point of the reduced
system.  Its vector potential has the closed Fourier form

    Ahat(k) = [ (v - k (v.k)/k^2) rhohat(k) - omega (Jy rho)hat(k) ]
              / (k^2 - (v.k)^2),            k != 0,

    where (Jy rho)hat equals i J grad_k rhohat in closed form,

with the conjugate field Pi = -(v.grad) A, both evaluated spectrally on the
grid.  The total momenta (P, M) carried by the solution follow from the grid
inner products, which makes the reconstructed particle velocities equal
(v, omega) to rounding, and the discrete right-hand side vanish identically.

solve_soliton_params inverts (v, omega) -> (P, M) by a damped Newton
iteration using the closed-form Jacobian of the map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ParticleKind, ReducedState, field_couplings
from .errors import DomainError, InversionError
from .kspace import KSpaceIntegrals, kinetic_momentum
from .spectral import VectorField

__all__ = ["SolitonParams", "SolitonRecord", "build_soliton",
           "soliton_momenta", "solve_soliton_params"]

V_CLAMP = 1.0 - 1e-6   # Newton iterates stay strictly inside |v| < 1


@dataclass(frozen=True)
class SolitonParams:
    """Velocity and spin rate of a travelling solution; requires |v| < 1."""

    v: tuple
    omega: float

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.shape != (2,):
            raise DomainError("v must be a 2-vector")
        if not np.isfinite(v).all() or not np.isfinite(self.omega):
            raise DomainError("soliton parameters must be finite")
        if float(v @ v) >= 1.0:
            raise DomainError(f"|v| = {np.linalg.norm(v):.6g} is outside the admissible |v| < 1")
        object.__setattr__(self, "v", tuple(float(c) for c in v))

    @property
    def v_array(self):
        return np.asarray(self.v, dtype=float)


@dataclass
class SolitonRecord:
    """A constructed soliton: fields, momenta, and the particle it belongs to."""

    params: SolitonParams
    A: VectorField
    Pi: VectorField
    P: np.ndarray
    M: float
    particle: ParticleKind

    @property
    def grid(self):
        return self.A.grid

    def to_state(self, q=(0.0, 0.0), phi=0.0, t=0.0):
        """View the record as a reduced state (fields plus parameters)."""
        return ReducedState(A=self.A, Pi=self.Pi, P=self.P.copy(), M=self.M,
                            q=np.asarray(q, dtype=float), phi=phi, t=t)


def _soliton_hats(params, rho):
    # The spin source (J y rho) enters through the same grid-formed hat the
    # evolution equations use, so the discrete stationarity identity holds to
    # rounding; it agrees with the closed form i J grad_k rhohat to ~1e-15.
    g = rho.grid
    v = params.v_array
    omega = params.omega
    kx, ky = g.kk
    vk = v[0] * kx + v[1] * ky
    D = g.k2 - vk**2
    D[0, 0] = 1.0
    rh = rho.hat
    jy = rho.jy_rho_hat
    Ah = np.empty((2, g.N, g.N), dtype=complex)
    Ah[0] = ((v[0] - kx * vk / g.k2_safe) * rh - omega * jy[0]) / D
    Ah[1] = ((v[1] - ky * vk / g.k2_safe) * rh - omega * jy[1]) / D
    Ah[:, 0, 0] = 0.0
    Pih = -1j * vk * Ah
    return Ah, Pih


def soliton_momenta(A, Pi, rho, params, particle):
    """(P, M) such that the reconstructed velocities equal (v, omega).

    P = p_kin(v) - <Pi, grad_* A> + <A, rho>,  M = I omega - <J y . A, rho>,
    with all inner products taken as Parseval-weighted Fourier sums on the
    grid.  p_kin is m v or m v / sqrt(1 - v^2) depending on the particle.
    """
    pi_gradA, A_rho, jy_A = field_couplings(rho.grid, rho, A.hat, Pi.hat)
    pkin = kinetic_momentum(params.v_array, particle.m, particle.relativistic)
    P = pkin - pi_gradA + A_rho
    M = particle.I * params.omega - jy_A
    return P, float(M)


def build_soliton(params, rho, m=1.0, I=1.0, kind="nonrelativistic"):
    """Construct the soliton record for parameters (v, omega).

    The travelling-wave elimination requires |v| < 1 (the denominator
    k^2 - (v.k)^2 stays uniformly positive); the zero mode is pinned.
    """
    if not isinstance(params, SolitonParams):
        params = SolitonParams(tuple(params[0]), params[1])
    particle = kind if isinstance(kind, ParticleKind) else ParticleKind(kind, m=m, I=I)
    Ah, Pih = _soliton_hats(params, rho)
    g = rho.grid
    A = VectorField(g, hat=Ah, solenoidal=True)
    Pi = VectorField(g, hat=Pih, solenoidal=True)
    P, M = soliton_momenta(A, Pi, rho, params, particle)
    return SolitonRecord(params=params, A=A, Pi=Pi, P=P, M=M, particle=particle)


def solve_soliton_params(P, M, rho, m=1.0, I=1.0, kind="nonrelativistic",
                         tol=1e-9, max_iter=50, integrals=None):
    """Invert the momentum map: find (v, omega) with momenta (P, M).

    Damped Newton iteration on F(v, omega) = (P(v, omega) - P, M(v, omega) - M)
    with the closed-form Jacobian; steps that would push |v| past 1 - 1e-6 are
    halved.  The initial guess divides by the field-corrected inertia, which
    is exact in the small-momentum limit.

    Raises InversionError (carrying the residual trace) on non-convergence.
    """
    P = np.asarray(P, dtype=float)
    M = float(M)
    if not (np.isfinite(P).all() and np.isfinite(M)):
        raise DomainError("target momenta must be finite")
    particle = kind if isinstance(kind, ParticleKind) else ParticleKind(kind, m=m, I=I)
    ks = integrals if integrals is not None else KSpaceIntegrals(rho, mode="lattice")

    mu_f, iota_f = ks.field_mass_corrections()
    v = P / (particle.m + mu_f)
    speed = np.linalg.norm(v)
    if speed > 0.9:
        v *= 0.9 / speed
    omega = M / (particle.I + iota_f)

    scale = 1.0 + np.linalg.norm(P) + abs(M)
    residuals = []
    for _ in range(max_iter):
        Pc, Mc = ks.momentum_map(v, omega, particle.m, particle.I, particle.relativistic)
        F = np.array([Pc[0] - P[0], Pc[1] - P[1], Mc - M])
        res = float(np.linalg.norm(F))
        residuals.append(res)
        if res <= tol * scale:
            return SolitonParams((v[0], v[1]), float(omega))
        J = ks.momentum_jacobian(v, omega, particle.m, particle.I, particle.relativistic)
        step = np.linalg.solve(J, F)
        factor = 1.0
        while np.linalg.norm(v - factor * step[:2]) > V_CLAMP:
            factor *= 0.5
            if factor < 1e-12:
                raise InversionError("Newton step collapsed at the |v| = 1 boundary",
                                     residuals)
        v = v - factor * step[:2]
        omega = omega - factor * step[2]
    raise InversionError(
        f"momentum-map inversion did not converge in {max_iter} iterations "
        f"(last residual {residuals[-1]:.3e})", residuals)
