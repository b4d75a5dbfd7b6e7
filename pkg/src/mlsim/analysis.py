"""Quantitative checks of everything the theory asserts.

Contents:

* seeded solenoidal perturbation generator (smooth spectral envelope);
* the trajectory distance: field norm of the difference plus the particle
  velocity mismatches;
* the energy lower bound at a soliton, with the exact quadratic rearrangement
  identity evaluated through two independent routes;
* closed-form Jacobian tables of the momentum map, their finite-difference
  cross-check, determinant positivity, and the axis-aligned structural zeros;
* the orbital-stability experiment: perturb, evolve, track the distance to
  the original and to the momentum-matched soliton;
* conserved-quantity drift monitoring for sampled trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import (LabState, ParticleKind, ReducedState, field_couplings,
                       reduced_hamiltonian)
from .errors import ConfigError, DomainError
from .kspace import KSpaceIntegrals, kinetic_momentum
from .soliton import SolitonParams, build_soliton, solve_soliton_params
from .spectral import VectorField, norms

__all__ = [
    "Perturbation", "solenoidal_perturbation", "distance",
    "LowerBoundResult", "lower_bound_check",
    "JacobianTable", "jacobian_entries", "jacobian_vs_finite_difference",
    "cauchy_schwarz_check", "StabilityReport", "stability_experiment",
    "conservation_monitor", "gradient_check", "relativistic_convexity_check",
]


# ---------------------------------------------------------------------------
# Perturbations
# ---------------------------------------------------------------------------

@dataclass
class Perturbation:
    """A seeded solenoidal field-pair direction, reproducible from its seed."""

    dA: VectorField
    dPi: VectorField
    amplitude: float
    seed: int
    sigma_p: float


def solenoidal_perturbation(grid, seed, amplitude=1.0, sigma_p=1.0):
    """Random smooth solenoidal perturbation (dA, dPi).

    White noise per component, shaped by the spectral envelope
    exp(-|k|^2 sigma_p^2), projected solenoidal with the zero mode pinned,
    then scaled so that |dA|_H1dot + |dPi|_L2 = amplitude.  Starting from
    real-space noise keeps the coefficients conjugate-symmetric exactly.
    """
    rng = np.random.default_rng(seed)
    env = np.exp(-grid.k2 * sigma_p**2)
    kx, ky = grid.kk

    def draw():
        hat = grid.fft(rng.standard_normal((2, grid.N, grid.N))) * env
        kdot = kx * hat[0] + ky * hat[1]
        hat[0] -= kx * kdot / grid.k2_safe
        hat[1] -= ky * kdot / grid.k2_safe
        hat[:, 0, 0] = 0.0
        return hat

    dA_hat, dPi_hat = draw(), draw()
    dA = VectorField(grid, hat=dA_hat, solenoidal=True)
    dPi = VectorField(grid, hat=dPi_hat, solenoidal=True)
    size = norms(dA)["h1dot"] + norms(dPi)["l2"]
    scale = amplitude / size if size > 0 else 0.0
    return Perturbation(
        dA=VectorField(grid, hat=dA_hat * scale, solenoidal=True),
        dPi=VectorField(grid, hat=dPi_hat * scale, solenoidal=True),
        amplitude=amplitude, seed=seed, sigma_p=sigma_p)


# ---------------------------------------------------------------------------
# Distance
# ---------------------------------------------------------------------------

def distance(s1, s2, rho, particle):
    """d(s1, s2) = |A1 - A2|_H1dot + |Pi1 - Pi2|_L2 + |qdot1 - qdot2| + |phidot1 - phidot2|.

    Each state's velocities are reconstructed with its own parameters, so two
    states may sit in different reduced systems (different P, M).
    """
    if s1.grid is not s2.grid and (s1.grid.L, s1.grid.N) != (s2.grid.L, s2.grid.N):
        raise ConfigError("distance: states live on different grids")
    dA = VectorField(s1.grid, hat=s1.A.hat - s2.A.hat)
    dPi = VectorField(s1.grid, hat=s1.Pi.hat - s2.Pi.hat)
    qd1, pd1 = dynamics.particle_velocities(s1, rho, particle)
    qd2, pd2 = dynamics.particle_velocities(s2, rho, particle)
    return (norms(dA)["h1dot"] + norms(dPi)["l2"]
            + float(np.linalg.norm(qd1 - qd2)) + abs(pd1 - pd2))


# ---------------------------------------------------------------------------
# Lower bound
# ---------------------------------------------------------------------------

def _precise_inner(grid, fh, gh):
    a = fh.astype(np.clongdouble)
    b = gh.astype(np.clongdouble)
    return (a * np.conj(b)).real.sum() / grid.L**2


@dataclass
class LowerBoundResult:
    delta_H: float
    bound: float
    passed: bool
    identity_lhs: float
    identity_rhs: float
    identity_rel_err: float
    identity_abs_err: float
    identity_noise_floor: float   # extended-precision resolution of the sides
    convexity_gap: float   # relativistic kinetic-convexity term; >= 0 (0 for Newtonian)

    @property
    def identity_ok(self):
        """|lhs - rhs| within 1e-9 relative plus the computational noise floor.

        A perturbation that barely couples to the charge makes both sides
        tiny; the relative comparison is then meaningful only down to the
        extended-precision resolution of the Hamiltonian differences.
        """
        return self.identity_abs_err <= (
            1e-9 * max(abs(self.identity_lhs), abs(self.identity_rhs))
            + self.identity_noise_floor)


class _PreciseWorkspace:
    """Flat extended-precision views of everything lower_bound_check needs.

    Modes outside the support of the density and the perturbation envelope
    carry amplitudes below 1e-28 of scale, far under the 1e-19 extended
    epsilon, so they are cut to keep the longdouble passes cheap.
    """

    def __init__(self, record, rho, sigma_p=1.0):
        grid = record.grid
        kcut = max(rho.k_support(), 8.0 / sigma_p)
        mask = grid.kmag <= kcut
        kx, ky = grid.kk
        self.L2 = np.longdouble(grid.L) ** 2
        self.kx = kx[mask].astype(np.longdouble)
        self.ky = ky[mask].astype(np.longdouble)
        self.k2 = grid.k2[mask].astype(np.longdouble)
        self.mask = mask
        self.A0 = record.A.hat[:, mask].astype(np.clongdouble)
        self.Pi0 = record.Pi.hat[:, mask].astype(np.clongdouble)
        self.rh = rho.hat[mask].astype(np.clongdouble)
        self.jh = rho.jy_rho_hat[:, mask].astype(np.clongdouble)
        self.P = record.P.astype(np.longdouble)
        self.M = np.longdouble(record.M)
        self.particle = record.particle
        self.v = record.params.v_array

    def take(self, hat):
        return hat[:, self.mask].astype(np.clongdouble)

    def inner(self, f, g):
        return (f * np.conj(g)).real.sum() / self.L2

    def couplings(self, A, Pi):
        cross = (Pi * np.conj(A)).imag.sum(axis=0)
        pgA = np.array([(self.kx * cross).sum(), (self.ky * cross).sum()]) / self.L2
        A_rho = np.array([(A[0] * np.conj(self.rh)).real.sum(),
                          (A[1] * np.conj(self.rh)).real.sum()]) / self.L2
        jy_A = (A * np.conj(self.jh)).real.sum() / self.L2
        return pgA, A_rho, jy_A

    def hamiltonian(self, A, Pi):
        pgA, A_rho, jy_A = self.couplings(A, Pi)
        pvec = self.P + pgA - A_rho
        Mkin = self.M + jy_A
        quad = ((Pi.real**2 + Pi.imag**2).sum()
                + (self.k2 * (A.real**2 + A.imag**2)).sum()) / self.L2
        p = self.particle
        if p.relativistic:
            kinetic = np.sqrt(np.longdouble(p.m) ** 2 + pvec @ pvec)
        else:
            kinetic = (pvec @ pvec) / (2 * p.m)
        return 0.5 * quad + kinetic + Mkin**2 / (2 * p.I)


def lower_bound_check(record, pert, rho, workspace=None):
    """Check delta_H >= (1 - |v|)/2 * (|dA|_H1dot^2 + |dPi|_L2^2) at a soliton.

    delta_H is the difference of two full Hamiltonian evaluations at the
    soliton's own (P, M), accumulated in extended precision so that the
    comparison against the independently assembled quadratic rearrangement

        delta_H - [field quadratic + <pi, (v.grad) a>]
            = (delta_p)^2/(2m) + (delta_M)^2/(2I)            (Newtonian)
            = sqrt(m^2+(p_v+delta_p)^2) - sqrt(m^2+p_v^2) - v.delta_p
              + (delta_M)^2/(2I)                             (relativistic)

    stays meaningful down to amplitudes ~1e-3.  A _PreciseWorkspace may be
    passed to amortise the casts over a Monte-Carlo batch.
    """
    ws = workspace if workspace is not None else _PreciseWorkspace(record, rho, pert.sigma_p)
    particle = record.particle
    v = record.params.v_array

    a = ws.take(pert.dA.hat)
    pi = ws.take(pert.dPi.hat)
    A1 = ws.A0 + a
    Pi1 = ws.Pi0 + pi
    H0 = ws.hamiltonian(ws.A0, ws.Pi0)
    H1 = ws.hamiltonian(A1, Pi1)
    delta_H = H1 - H0

    nA = norms(pert.dA)["h1dot"]
    nPi = norms(pert.dPi)["l2"]
    speed = float(np.linalg.norm(v))
    bound = 0.5 * (1.0 - speed) * (nA**2 + nPi**2)
    scale = 1.0 + abs(float(H0)) + bound
    passed = bool(float(delta_H) >= bound - 1e-10 * scale)

    # rearrangement identity, both sides in extended precision
    quad = ((pi.real**2 + pi.imag**2).sum() + (ws.k2 * (a.real**2 + a.imag**2)).sum()) / ws.L2
    v_grad_a = 1j * (v[0] * ws.kx + v[1] * ws.ky) * a
    cross = ws.inner(pi, v_grad_a)
    lhs = delta_H - (0.5 * quad + cross)

    # delta of the momentum functionals, from their own expansion
    pgA0, _, _ = ws.couplings(ws.A0, ws.Pi0)
    pgA1, _, _ = ws.couplings(A1, Pi1)
    a_rho = np.array([(a[0] * np.conj(ws.rh)).real.sum(),
                      (a[1] * np.conj(ws.rh)).real.sum()]) / ws.L2
    delta_p = (pgA1 - pgA0) - a_rho
    delta_M = (a * np.conj(ws.jh)).real.sum() / ws.L2

    m, I = particle.m, particle.I
    if particle.relativistic:
        p_v = kinetic_momentum(v, m, True).astype(np.longdouble)
        e0 = np.sqrt(m**2 + p_v @ p_v)
        e1 = np.sqrt(m**2 + (p_v + delta_p) @ (p_v + delta_p))
        convexity_gap = float(e1 - e0 - v.astype(np.longdouble) @ delta_p)
        rhs = (e1 - e0 - v.astype(np.longdouble) @ delta_p) + delta_M**2 / (2 * I)
    else:
        convexity_gap = 0.0
        rhs = (delta_p @ delta_p) / (2 * m) + delta_M**2 / (2 * I)

    denom = max(abs(float(lhs)), abs(float(rhs)), 1e-300)
    eps_ld = float(np.finfo(np.longdouble).eps)
    noise = 64.0 * eps_ld * (1.0 + abs(float(H0)))
    return LowerBoundResult(
        delta_H=float(delta_H), bound=bound, passed=passed,
        identity_lhs=float(lhs), identity_rhs=float(rhs),
        identity_rel_err=float(abs(lhs - rhs)) / denom,
        identity_abs_err=float(abs(lhs - rhs)),
        identity_noise_floor=noise,
        convexity_gap=convexity_gap)


def relativistic_convexity_check(m, seed, n_samples, p_scale=3.0):
    """Sample pairs (p_v, delta_p) and verify the kinetic convexity inequality
    sqrt(m^2 + (p_v + dp)^2) - sqrt(m^2 + p_v^2) - v . dp >= 0 with
    v = p_v / sqrt(m^2 + p_v^2).  Returns the minimum gap over the samples."""
    rng = np.random.default_rng(seed)
    pv = p_scale * rng.standard_normal((n_samples, 2))
    dp = p_scale * rng.standard_normal((n_samples, 2))
    e0 = np.sqrt(m**2 + np.sum(pv**2, axis=1))
    v = pv / e0[:, None]
    e1 = np.sqrt(m**2 + np.sum((pv + dp) ** 2, axis=1))
    gap = e1 - e0 - np.sum(v * dp, axis=1)
    return float(gap.min())


# ---------------------------------------------------------------------------
# Jacobian of the momentum map
# ---------------------------------------------------------------------------

@dataclass
class JacobianTable:
    """The nine partials of (P1, P2, M) with respect to (v1, v2, omega) at
    v = (speed, 0), their determinant, and the positivity flag."""

    v: float
    omega: float
    dP1_dv1: float
    dP1_dv2: float
    dP1_domega: float
    dP2_dv1: float
    dP2_dv2: float
    dP2_domega: float
    dM_dv1: float
    dM_dv2: float
    dM_domega: float
    det: float
    positive: bool
    mode: str

    COLUMNS = ("v", "omega",
               "dP1_dv1", "dP1_dv2", "dP1_domega",
               "dP2_dv1", "dP2_dv2", "dP2_domega",
               "dM_dv1", "dM_dv2", "dM_domega",
               "det", "positive")

    def matrix(self):
        """Rows (P1, P2, M) x columns (v1, v2, omega)."""
        return np.array([
            [self.dP1_dv1, self.dP1_dv2, self.dP1_domega],
            [self.dP2_dv1, self.dP2_dv2, self.dP2_domega],
            [self.dM_dv1, self.dM_dv2, self.dM_domega],
        ])

    def structural_zeros(self):
        """Entries forced to vanish by parity when v is along axis 1."""
        return {"dP1_dv2": self.dP1_dv2, "dP2_dv1": self.dP2_dv1,
                "dP2_domega": self.dP2_domega, "dM_dv2": self.dM_dv2}


def jacobian_entries(v, omega, rho, m=1.0, I=1.0, kind="nonrelativistic",
                     mode="box", integrals=None):
    """Closed-form Jacobian of the momentum map at speed v >= 0 along axis 1.

    The determinant is assembled through the axis-aligned factorisation
    det = dP2/dv2 * (dP1/dv1 * dM/domega - dM/dv1 * dP1/domega), which the
    structural zeros make exact.
    """
    if not 0.0 <= v < 1.0:
        raise DomainError(f"need 0 <= v < 1, got {v}")
    particle = kind if isinstance(kind, ParticleKind) else ParticleKind(kind, m=m, I=I)
    ks = integrals if integrals is not None else KSpaceIntegrals(rho, mode=mode)
    J = ks.momentum_jacobian(np.array([v, 0.0]), omega, particle.m, particle.I,
                             particle.relativistic)
    det = J[1, 1] * (J[0, 0] * J[2, 2] - J[2, 0] * J[0, 2])
    return JacobianTable(
        v=v, omega=omega,
        dP1_dv1=J[0, 0], dP1_dv2=J[0, 1], dP1_domega=J[0, 2],
        dP2_dv1=J[1, 0], dP2_dv2=J[1, 1], dP2_domega=J[1, 2],
        dM_dv1=J[2, 0], dM_dv2=J[2, 1], dM_domega=J[2, 2],
        det=float(det), positive=bool(det > 0), mode=ks.mode)


def jacobian_vs_finite_difference(v, omega, rho, m=1.0, I=1.0, h=1e-4,
                                  kind="nonrelativistic", mode="box"):
    """Max relative error between the closed-form partials and central
    finite differences of the field-built momentum map.

    Entries are compared relative to max(|analytic|, |fd|, 1e-2 * largest
    entry) so the structural zeros are judged on the table's scale.
    """
    particle = kind if isinstance(kind, ParticleKind) else ParticleKind(kind, m=m, I=I)
    table = jacobian_entries(v, omega, rho, kind=particle, mode=mode)
    analytic = table.matrix()

    def momenta(vv, om):
        rec = build_soliton(SolitonParams((vv[0], vv[1]), om), rho, kind=particle)
        return np.array([rec.P[0], rec.P[1], rec.M])

    v0 = np.array([v, 0.0])
    fd = np.zeros((3, 3))
    for col, dx in enumerate([np.array([h, 0.0]), np.array([0.0, h])]):
        fd[:, col] = (momenta(v0 + dx, omega) - momenta(v0 - dx, omega)) / (2 * h)
    fd[:, 2] = (momenta(v0, omega + h) - momenta(v0, omega - h)) / (2 * h)

    floor = 1e-2 * np.max(np.abs(analytic))
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), floor)
    rel = np.abs(analytic - fd) / denom
    return float(rel.max()), analytic, fd


def cauchy_schwarz_check(v, rho, mode="box"):
    """The inequality A^2 <= B*C used in factorising the Jacobian determinant.

    Returns (lhs, rhs, ok); omega does not enter the three integrals.
    """
    ks = KSpaceIntegrals(rho, mode=mode)
    A, B, C = ks.cauchy_schwarz_triple(v)
    return A**2, B * C, bool(A**2 <= B * C * (1 + 1e-12))


# ---------------------------------------------------------------------------
# Orbital-stability experiment
# ---------------------------------------------------------------------------

@dataclass
class StabilityReport:
    params: SolitonParams
    delta: float
    seed: int
    matched_params: SolitonParams
    times: np.ndarray
    d_original: np.ndarray
    d_rematched: np.ndarray
    sup_original: float
    sup_rematched: float
    stability_constant: float   # sup_rematched / delta (nan when delta = 0)
    scheme: str = "rk4"
    extras: dict = field(default_factory=dict)


def stability_experiment(v, omega, delta, T, dt, seed, rho,
                         m=1.0, I=1.0, kind="nonrelativistic",
                         scheme="rk4", stride=1, sigma_p=1.0):
    """Perturb a soliton by distance delta, evolve, and track two distances.

    The perturbation is applied to the fields with the particle velocities
    held at (v, omega), so the perturbed solution carries shifted parameters
    (P*, M*); the second distance series is measured to the soliton whose
    momenta equal (P*, M*), found by Newton inversion.
    """
    grid = rho.grid
    if T > grid.L / 2:
        raise ConfigError(f"horizon T = {T} exceeds one light-crossing L/2 = {grid.L / 2}")
    if delta < 0:
        raise ConfigError("delta must be >= 0")
    particle = kind if isinstance(kind, ParticleKind) else ParticleKind(kind, m=m, I=I)
    params = SolitonParams(tuple(np.atleast_1d(v).astype(float)) if np.ndim(v) else (float(v), 0.0),
                           float(omega))
    record = build_soliton(params, rho, kind=particle)
    s_orig = record.to_state()

    pert = solenoidal_perturbation(grid, seed, amplitude=delta, sigma_p=sigma_p)
    Ah = record.A.hat + pert.dA.hat
    Pih = record.Pi.hat + pert.dPi.hat
    A = VectorField(grid, hat=Ah, solenoidal=True)
    Pi = VectorField(grid, hat=Pih, solenoidal=True)

    # parameters of the perturbed solution, velocities preserved at t = 0
    pi_gradA, A_rho, jy_A = field_couplings(grid, rho, Ah, Pih)
    pkin = kinetic_momentum(params.v_array, particle.m, particle.relativistic)
    P_star = pkin - pi_gradA + A_rho
    M_star = particle.I * params.omega - jy_A

    if delta > 0:
        matched = solve_soliton_params(P_star, M_star, rho, kind=particle)
    else:
        matched = params
    rec_matched = build_soliton(matched, rho, kind=particle)
    s_matched = rec_matched.to_state()

    s = ReducedState(A=A, Pi=Pi, P=P_star, M=float(M_star),
                     q=np.zeros(2), phi=0.0, t=0.0)

    times, d_orig, d_match = [], [], []

    def observe(state):
        times.append(state.t)
        d_orig.append(distance(state, s_orig, rho, particle))
        d_match.append(distance(state, s_matched, rho, particle))

    n_steps = int(round(T / dt))
    dynamics.evolve_reduced(s, rho, particle, dt, n_steps, scheme=scheme,
                            stride=stride, observer=observe)

    times = np.asarray(times)
    d_orig = np.asarray(d_orig)
    d_match = np.asarray(d_match)
    sup_o = float(d_orig.max())
    sup_m = float(d_match.max())
    return StabilityReport(
        params=params, delta=delta, seed=seed, matched_params=matched,
        times=times, d_original=d_orig, d_rematched=d_match,
        sup_original=sup_o, sup_rematched=sup_m,
        stability_constant=(sup_m / delta if delta > 0 else float("nan")),
        scheme=scheme,
        extras={"P_star": P_star.tolist(), "M_star": float(M_star)})


# ---------------------------------------------------------------------------
# Conservation monitoring
# ---------------------------------------------------------------------------

def _drift(values, scale_floor=1.0):
    values = np.asarray(values, dtype=float)
    return float(np.abs(values - values[0]).max() / max(abs(values[0]), scale_floor))


def conservation_monitor(samples, rho, particle):
    """Relative drifts of the conserved quantities along a sampled trajectory.

    Works for reduced and lab trajectories.  Vector momenta are monitored
    through the norm of the deviation from the initial vector.  Quantities
    starting near zero are judged relative to a unit scale.
    """
    if not samples:
        raise ConfigError("conservation_monitor needs at least one sample")
    lab = isinstance(samples[0], LabState)
    energies, hams, Ps, Ms = [], [], [], []
    if lab:
        red0 = dynamics.comoving_transform(samples[0], rho, particle)
        P0, M0 = red0.P, red0.M
        for s in samples:
            energies.append(dynamics.lab_energy(s, rho, particle))
            Ps.append(dynamics.lab_momentum(s, rho, particle))
            Ms.append(dynamics.lab_angular_momentum(s, rho, particle))
            red = dynamics.comoving_transform(s, rho, particle)
            hams.append(reduced_hamiltonian(
                ReducedState(A=red.A, Pi=red.Pi, P=P0, M=M0, q=red.q, phi=red.phi),
                rho, particle))
    else:
        for s in samples:
            qdot, phidot = dynamics.particle_velocities(s, rho, particle)
            pi2, a2 = dynamics._field_quadratics(s.grid, s.A.hat, s.Pi.hat)
            pkin = kinetic_momentum(qdot, particle.m, particle.relativistic)
            energies.append(0.5 * (pi2 + a2) + particle.kinetic_energy(pkin)
                            + 0.5 * particle.I * phidot**2)
            hams.append(reduced_hamiltonian(s, rho, particle))
            Ps.append(s.P)
            Ms.append(s.M)
    Ps = np.asarray(Ps, dtype=float)
    P_dev = np.linalg.norm(Ps - Ps[0], axis=1)
    P_drift = float(P_dev.max() / max(np.linalg.norm(Ps[0]), 1.0))
    return {
        "energy": _drift(energies),
        "momentum": P_drift,
        "angular_momentum": _drift(Ms),
        "reduced_hamiltonian": _drift(hams),
    }


# ---------------------------------------------------------------------------
# Variational-derivative check
# ---------------------------------------------------------------------------

def gradient_check(state, rho, particle, seed, n_directions=20, eps=1e-6):
    """Directional derivatives of the reduced Hamiltonian vs central differences.

    The analytic value pairs the right-hand side with the direction,
    <dA_rhs, dPi_dir> - <dPi_rhs, dA_dir>, which certifies that the evolution
    equations are the Hamiltonian vector field of the evaluated energy.
    Returns the max relative error over the sampled directions.
    """
    grid = state.grid
    dA_rhs, dPi_rhs = dynamics.reduced_rhs(state, rho, particle)
    worst = 0.0
    for i in range(n_directions):
        pert = solenoidal_perturbation(grid, seed + i, amplitude=1.0)
        analytic = (-_precise_inner(grid, dPi_rhs.hat, pert.dA.hat)
                    + _precise_inner(grid, dA_rhs.hat, pert.dPi.hat))

        def shifted(sign):
            return ReducedState(
                A=VectorField(grid, hat=state.A.hat + sign * eps * pert.dA.hat, solenoidal=True),
                Pi=VectorField(grid, hat=state.Pi.hat + sign * eps * pert.dPi.hat, solenoidal=True),
                P=state.P, M=state.M, q=state.q, phi=state.phi)

        Hp = reduced_hamiltonian(shifted(+1), rho, particle, precise=True)
        Hm = reduced_hamiltonian(shifted(-1), rho, particle, precise=True)
        fd = float((Hp - Hm) / (2 * np.longdouble(eps)))
        rel = abs(float(analytic) - fd) / max(abs(fd), abs(float(analytic)), 1e-300)
        worst = max(worst, rel)
    return worst
