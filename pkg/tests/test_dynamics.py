"""Reduced and lab-frame evolution, transforms, and physical-field recovery."""

import numpy as np
import pytest

from mlsim import analysis, dynamics
from mlsim.dynamics import (ReducedState, comoving_transform,
                            lab_from_reduced, particle_velocities,
                            reconstruct_EB, reduced_hamiltonian, reduced_rhs,
                            step_lab, step_reduced, time_reversal)
from mlsim.errors import ConfigError
from mlsim.soliton import SolitonParams, build_soliton
from mlsim.spectral import (ScalarField, VectorField, divergence_max,
                            make_charge_density, norms, shift_density)


def vacuum_state(grid, P=(0.0, 0.0), M=0.0):
    return ReducedState(A=VectorField.zero(grid), Pi=VectorField.zero(grid),
                        P=np.asarray(P, dtype=float), M=M, q=np.zeros(2), phi=0.0)


def perturbed_soliton(rho, particle, v=(0.3, 0.0), omega=1.0, delta=1e-2, seed=5):
    """Soliton plus a field perturbation, with parameters keeping the t = 0
    velocities at (v, omega)."""
    from mlsim.cli import _perturbed_initial

    class Cfg(dict):
        def __getitem__(self, k):
            return dict.__getitem__(self, k)

    cfg = Cfg({"perturbation.delta": delta, "perturbation.sigma_p": 1.0,
               "experiment.seed": seed})
    record = build_soliton(SolitonParams(v, omega), rho, kind=particle)
    return _perturbed_initial(cfg, rho, particle, record), record


class TestHamiltonianAndVelocities:
    def test_vacuum_values(self, grid_small, rho_small, particle, particle_rel):
        s = vacuum_state(grid_small, P=(0.7, -0.4), M=2.0)
        H_n = reduced_hamiltonian(s, rho_small, particle)
        assert H_n == pytest.approx((0.49 + 0.16) / 2 + 4.0 / 2, rel=1e-14)
        H_r = reduced_hamiltonian(s, rho_small, particle_rel)
        assert H_r == pytest.approx(np.sqrt(1 + 0.49 + 0.16) + 2.0, rel=1e-14)

    def test_vacuum_velocities(self, grid_small, rho_small, particle, particle_rel):
        s = vacuum_state(grid_small, P=(3.0, 0.0), M=5.0)
        qdot, phidot = particle_velocities(s, rho_small, particle)
        assert np.allclose(qdot, [3.0, 0.0]) and phidot == pytest.approx(5.0)
        qdot_r, _ = particle_velocities(s, rho_small, particle_rel)
        assert np.linalg.norm(qdot_r) < 1.0
        assert qdot_r[0] == pytest.approx(3.0 / np.sqrt(10.0), rel=1e-14)

    def test_precise_path_agrees(self, rho_small, particle):
        s, _ = perturbed_soliton(rho_small, particle)
        a = reduced_hamiltonian(s, rho_small, particle)
        b = float(reduced_hamiltonian(s, rho_small, particle, precise=True))
        assert a == pytest.approx(b, rel=1e-12)


class TestReducedRHS:
    def test_vacuum_is_stationary(self, grid_small, rho_small, particle):
        dA, dPi = reduced_rhs(vacuum_state(grid_small), rho_small, particle)
        assert np.max(np.abs(dA.hat)) == 0.0
        assert np.max(np.abs(dPi.hat)) == 0.0

    def test_reduced_energy_matches_lab_energy(self, rho_small, particle, particle_rel):
        # cross-formula evaluation: the reduced energy of a soliton equals
        # the lab energy of the same configuration
        for kind in (particle, particle_rel):
            rec = build_soliton(SolitonParams((0.4, 0.1), 1.5), rho_small, kind=kind)
            s = rec.to_state()
            H_red = reduced_hamiltonian(s, rho_small, kind)
            E_lab = dynamics.lab_energy(
                lab_from_reduced(s, rho_small, kind), rho_small, kind)
            assert H_red == pytest.approx(E_lab, rel=1e-8)

    def test_bare_particle_radiates_unit_current(self, grid_small, rho_small, particle):
        # zero fields with P = m v: dA = 0 and dPi is the projected current
        s = vacuum_state(grid_small, P=(0.2, 0.0))
        dA, dPi = reduced_rhs(s, rho_small, particle)
        assert np.max(np.abs(dA.hat)) == 0.0
        expected = 0.2 * rho_small.unit_current_hat[0]
        assert np.max(np.abs(dPi.hat - expected)) < 1e-14 * np.max(np.abs(expected))

    def test_soliton_is_critical(self, rho_small, particle):
        rec = build_soliton(SolitonParams((0.5, 0.0), 1.0), rho_small, kind=particle)
        dA, dPi = reduced_rhs(rec.to_state(), rho_small, particle)
        scale = norms(rec.A)["h1dot"] + norms(rec.Pi)["l2"] + 1.0
        assert norms(dA)["h1dot"] + norms(dPi)["l2"] < 1e-8 * scale

    def test_outputs_solenoidal(self, rho_small, particle):
        s, _ = perturbed_soliton(rho_small, particle, delta=0.3)
        dA, dPi = reduced_rhs(s, rho_small, particle)
        assert divergence_max(dA) < 1e-10
        assert divergence_max(dPi) < 1e-10


class TestStepReduced:
    def test_cfl_guard(self, rho_small, particle):
        s = vacuum_state(rho_small.grid)
        with pytest.raises(ConfigError):
            step_reduced(s, 0.6 * rho_small.grid.dx, rho_small, particle)

    def test_soliton_stays_put(self, rho_small, particle):
        rec = build_soliton(SolitonParams((0.4, 0.0), 1.0), rho_small, kind=particle)
        s = rec.to_state()
        dt = 0.1 * rho_small.grid.dx
        for _ in range(100):
            s = step_reduced(s, dt, rho_small, particle)
        d = analysis.distance(s, rec.to_state(), rho_small, particle)
        assert d < 1e-8
        # the carried position integrates the constant velocity
        assert np.max(np.abs(s.q - [0.4 * s.t, 0.0])) < 1e-10

    def test_free_particle_limit(self, grid_small, particle):
        # weak coupling: the self-force is second order in the charge
        weak = make_charge_density("laplacian-gaussian", 1.0, 0.01, grid_small)
        s = vacuum_state(grid_small, P=(0.2, 0.0))
        dt = 0.1 * grid_small.dx
        n = int(round(0.25 / dt))
        for _ in range(n):
            s = step_reduced(s, dt, weak, particle)
        assert np.max(np.abs(s.q - [0.2 * s.t, 0.0])) < 1e-6

    def test_time_reversal_round_trip(self, rho_small, particle):
        s0, _ = perturbed_soliton(rho_small, particle, delta=0.1)
        dt = 0.1 * rho_small.grid.dx
        s = step_reduced(s0, dt, rho_small, particle)
        s = time_reversal(s)
        s = step_reduced(s, dt, rho_small, particle)
        s = time_reversal(s)
        d = analysis.distance(s, s0, rho_small, particle)
        assert d < 1e-9

    def test_rk4_fourth_order_drift(self, rho_small, particle):
        # on a strongly perturbed state the energy drift shrinks ~16x per
        # halving of dt
        s0, _ = perturbed_soliton(rho_small, particle, delta=0.5)
        drifts = []
        for dt in (0.4 * rho_small.grid.dx, 0.2 * rho_small.grid.dx):
            s = s0
            n = int(round(2.0 / dt))
            H0 = reduced_hamiltonian(s0, rho_small, particle)
            for _ in range(n):
                s = step_reduced(s, dt, rho_small, particle)
            drifts.append(abs(reduced_hamiltonian(s, rho_small, particle) - H0) / abs(H0))
        assert drifts[0] / drifts[1] > 8.0

    def test_splitstep_exact_without_charge(self, grid_small, particle):
        # with no charge the splitting is two exact flows composed exactly
        free = make_charge_density("laplacian-gaussian", 1.0, 0.0, grid_small)
        pert = analysis.solenoidal_perturbation(grid_small, 3, amplitude=1.0)
        s = ReducedState(A=pert.dA, Pi=pert.dPi, P=np.array([0.5, 0.0]), M=1.0,
                         q=np.zeros(2), phi=0.0)
        H0 = reduced_hamiltonian(s, free, particle)
        dt = 0.25 * grid_small.dx
        for _ in range(200):
            s = step_reduced(s, dt, free, particle, scheme="splitstep")
        H1 = reduced_hamiltonian(s, free, particle)
        assert abs(H1 - H0) / abs(H0) < 1e-12

    def test_splitstep_consistent_with_rk4(self, rho_small, particle):
        s0, _ = perturbed_soliton(rho_small, particle, delta=0.2)
        dt = 0.1 * rho_small.grid.dx
        s_a, s_b = s0, s0
        for _ in range(40):
            s_a = step_reduced(s_a, dt, rho_small, particle, scheme="rk4")
            s_b = step_reduced(s_b, dt, rho_small, particle, scheme="splitstep")
        d = analysis.distance(s_a, s_b, rho_small, particle)
        scale = norms(s0.A)["h1dot"] + norms(s0.Pi)["l2"]
        assert d < 1e-3 * scale

    def test_splitstep_second_order(self, rho_small, particle):
        s0, _ = perturbed_soliton(rho_small, particle, delta=0.2)
        T = 0.8
        errs = []
        for dt in (0.4 * rho_small.grid.dx, 0.2 * rho_small.grid.dx):
            s_ref, s = s0, s0
            for _ in range(int(round(T / dt))):
                s = step_reduced(s, dt, rho_small, particle, scheme="splitstep")
            fine = dt / 8
            for _ in range(int(round(T / fine))):
                s_ref = step_reduced(s_ref, fine, rho_small, particle, scheme="rk4")
            errs.append(analysis.distance(s, s_ref, rho_small, particle))
        assert errs[0] / errs[1] > 3.0   # ~4x for a second-order scheme


class TestLabSystem:
    def test_static_vacuum_rhs(self, rho_small, particle):
        # zero fields, resting and non-spinning particle: nothing moves
        lab = dynamics.lab_from_reduced(vacuum_state(rho_small.grid),
                                        rho_small, particle)
        dA, dPi, dq, dp, dphi, dM = dynamics.lab_rhs(lab, rho_small, particle)
        assert np.max(np.abs(dA.hat)) == 0.0
        assert np.max(np.abs(dPi.hat)) == 0.0
        assert np.max(np.abs(dq)) == 0.0
        assert np.max(np.abs(dp)) < 1e-15
        assert dphi == 0.0 and dM == 0.0

    def test_travelling_profile(self, rho_small, particle):
        # the lab solution built from a soliton advances as a rigid profile
        rec = build_soliton(SolitonParams((0.4, 0.0), 1.0), rho_small, kind=particle)
        lab = lab_from_reduced(rec.to_state(), rho_small, particle)
        g = rho_small.grid
        dt = 0.1 * g.dx
        n = int(round(1.0 / dt))
        for _ in range(n):
            lab = step_lab(lab, dt, rho_small, particle)
        expect_hat = g.phase(lab.q) * rec.A.hat
        err = norms(VectorField(g, hat=lab.A.hat - expect_hat))["h1dot"]
        assert err < 1e-5
        assert np.max(np.abs(lab.q - [0.4 * lab.t, 0.0])) < 1e-6

    def test_conserved_quantities_flat(self, rho_small, particle):
        s0, _ = perturbed_soliton(rho_small, particle, delta=1e-2)
        lab = lab_from_reduced(s0, rho_small, particle)
        g = rho_small.grid
        dt = 0.1 * g.dx
        E0 = dynamics.lab_energy(lab, rho_small, particle)
        P0 = dynamics.lab_momentum(lab, rho_small, particle)
        M0 = dynamics.lab_angular_momentum(lab, rho_small, particle)
        for _ in range(int(round(2.0 / dt))):
            lab = step_lab(lab, dt, rho_small, particle)
        assert abs(dynamics.lab_energy(lab, rho_small, particle) - E0) / abs(E0) < 1e-8
        assert np.max(np.abs(dynamics.lab_momentum(lab, rho_small, particle) - P0)) < 1e-8
        assert abs(dynamics.lab_angular_momentum(lab, rho_small, particle) - M0) < 1e-12

    def test_force_matches_field_expression(self, rho_small, particle):
        # acceleration from the canonical flow equals the field force
        # <E + [J qdot + phidot (x - q)] B, rho(x - q)> / m
        s0, _ = perturbed_soliton(rho_small, particle, delta=0.05, seed=9)
        lab = lab_from_reduced(s0, rho_small, particle)
        g = rho_small.grid
        h = 0.02 * g.dx
        labs = [lab]
        for _ in range(2):
            labs.append(step_lab(labs[-1], h, rho_small, particle))
        qdots = [dynamics.lab_velocities(s, rho_small, particle)[0] for s in labs]
        accel_fd = (qdots[2] - qdots[0]) / (2 * h)

        mid = labs[1]
        E, B = reconstruct_EB(mid, rho_small)
        qdot, phidot = dynamics.lab_velocities(mid, rho_small, particle)
        rho_q = shift_density(rho_small, mid.q).values
        x, y = g.xx

        def wrap(dx_):
            return (dx_ + g.L / 2) % g.L - g.L / 2
        relx, rely = wrap(x - mid.q[0]), wrap(y - mid.q[1])
        Ev, Bv = E.values, B.values
        force = np.array([
            np.sum((Ev[0] + (qdot[1] + phidot * relx) * Bv) * rho_q),
            np.sum((Ev[1] + (-qdot[0] + phidot * rely) * Bv) * rho_q),
        ]) * g.dx**2
        assert np.max(np.abs(accel_fd - force / particle.m)) < 1e-5

    def test_relativistic_speed_limit(self, rho_small, particle_rel):
        lab = lab_from_reduced(vacuum_state(rho_small.grid, P=(30.0, 0.0)),
                               rho_small, particle_rel)
        dt = 0.1 * rho_small.grid.dx
        for _ in range(100):
            lab = step_lab(lab, dt, rho_small, particle_rel)
            qdot, _ = dynamics.lab_velocities(lab, rho_small, particle_rel)
            assert np.linalg.norm(qdot) < 1.0


class TestTransforms:
    def test_round_trip(self, rho_small, particle):
        s0, _ = perturbed_soliton(rho_small, particle, delta=0.2)
        s0.q = np.array([1.3, -0.7])
        lab = lab_from_reduced(s0, rho_small, particle)
        back = comoving_transform(lab, rho_small, particle)
        assert np.max(np.abs(back.A.hat - s0.A.hat)) < 1e-12 * np.max(np.abs(s0.A.hat))
        assert np.max(np.abs(back.Pi.hat - s0.Pi.hat)) < 1e-12 * np.max(np.abs(s0.Pi.hat))
        assert np.max(np.abs(back.P - s0.P)) < 1e-12
        assert abs(back.M - s0.M) < 1e-12

    def test_zero_recentering_keeps_fields(self, rho_small, particle):
        s0, _ = perturbed_soliton(rho_small, particle, delta=0.2)
        lab = lab_from_reduced(s0, rho_small, particle)   # q = 0
        red = comoving_transform(lab, rho_small, particle)
        assert np.max(np.abs(red.A.hat - lab.A.hat)) == 0.0

    def test_legendre_velocity_consistency(self, rho_small, particle):
        s0, _ = perturbed_soliton(rho_small, particle, delta=0.1)
        s0.q = np.array([0.9, 0.4])
        lab = lab_from_reduced(s0, rho_small, particle)
        qdot_lab, phidot_lab = dynamics.lab_velocities(lab, rho_small, particle)
        qdot_red, phidot_red = particle_velocities(
            comoving_transform(lab, rho_small, particle), rho_small, particle)
        assert np.max(np.abs(qdot_lab - qdot_red)) < 1e-10
        assert abs(phidot_lab - phidot_red) < 1e-10

    def test_evolution_commutes_with_transform(self, rho_small, particle):
        # evolve in the lab then recentre = recentre then evolve reduced
        s0, _ = perturbed_soliton(rho_small, particle, delta=1e-2)
        lab = lab_from_reduced(s0, rho_small, particle)
        dt = 0.1 * rho_small.grid.dx
        n = int(round(0.5 / dt))
        lab_t = lab
        for _ in range(n):
            lab_t = step_lab(lab_t, dt, rho_small, particle)
        red_a = comoving_transform(lab_t, rho_small, particle)
        red_b = s0
        for _ in range(n):
            red_b = step_reduced(red_b, dt, rho_small, particle)
        d = analysis.distance(red_a, red_b, rho_small, particle)
        assert d < 1e-5


class TestPhysicalFields:
    def test_vacuum_potential_field(self, rho_small, particle):
        lab = lab_from_reduced(vacuum_state(rho_small.grid), rho_small, particle)
        E, B = reconstruct_EB(lab, rho_small)
        g = rho_small.grid
        kx, ky = g.kk
        expected = np.stack([-1j * kx * rho_small.phi0_hat,
                             -1j * ky * rho_small.phi0_hat])
        assert np.max(np.abs(E.hat - expected)) < 1e-13 * np.max(np.abs(expected))
        assert np.max(np.abs(B.hat)) == 0.0

    def test_gauss_constraint(self, rho_small, particle):
        s0, _ = perturbed_soliton(rho_small, particle, delta=0.3)
        s0.q = np.array([2.2, -1.1])
        lab = lab_from_reduced(s0, rho_small, particle)
        E, _ = reconstruct_EB(lab, rho_small)
        g = rho_small.grid
        kx, ky = g.kk
        divE = 1j * (kx * E.hat[0] + ky * E.hat[1])
        res_hat = divE - g.phase(lab.q) * rho_small.hat
        res = norms(ScalarField(g, hat=res_hat))["l2"]
        rho_l2 = norms(ScalarField(g, values=rho_small.values))["l2"]
        assert res < 1e-8 * rho_l2

    def test_soliton_fields_static_in_comoving_frame(self, rho_small, particle):
        rec = build_soliton(SolitonParams((0.4, 0.0), 1.0), rho_small, kind=particle)
        lab = lab_from_reduced(rec.to_state(), rho_small, particle)
        g = rho_small.grid
        E0, B0 = reconstruct_EB(lab, rho_small)
        E0_hat = np.conj(g.phase(lab.q)) * E0.hat
        B0_hat = np.conj(g.phase(lab.q)) * B0.hat
        dt = 0.1 * g.dx
        for _ in range(int(round(1.0 / dt))):
            lab = step_lab(lab, dt, rho_small, particle)
        E1, B1 = reconstruct_EB(lab, rho_small)
        dE = np.conj(g.phase(lab.q)) * E1.hat - E0_hat
        dB = np.conj(g.phase(lab.q)) * B1.hat - B0_hat
        scale = norms(VectorField(g, hat=E0_hat))["l2"] + norms(ScalarField(g, hat=B0_hat))["l2"]
        err = norms(VectorField(g, hat=dE))["l2"] + norms(ScalarField(g, hat=dB))["l2"]
        assert err < 1e-5 * scale


class TestSpectralHygiene:
    def test_no_energy_piles_at_high_k(self, rho_small, particle):
        # no dealiasing filter is used; verify the top third of the band
        # stays empty along a generic trajectory
        s, _ = perturbed_soliton(rho_small, particle, delta=0.3)
        dt = 0.1 * rho_small.grid.dx
        for _ in range(80):
            s = step_reduced(s, dt, rho_small, particle)
        assert dynamics.spectrum_top_fraction(s.A) < 1e-10
        assert dynamics.spectrum_top_fraction(s.Pi) < 1e-10
        assert divergence_max(s.A) < 1e-10
        assert divergence_max(s.Pi) < 1e-10
