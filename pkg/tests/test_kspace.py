"""Closed-form k-space integrals: evaluation modes, hand-derived oracles,
and the box zero-mode correction."""

import numpy as np
import pytest

from mlsim.errors import DomainError
from mlsim.kspace import (KSpaceIntegrals, kinetic_momentum,
                          kinetic_momentum_jacobian)


@pytest.fixture(scope="module")
def lattice(rho):
    return KSpaceIntegrals(rho, mode="lattice")


@pytest.fixture(scope="module")
def box(rho):
    return KSpaceIntegrals(rho, mode="box")


@pytest.fixture(scope="module")
def continuum(rho):
    return KSpaceIntegrals(rho, mode="continuum")


class TestKineticMomentum:
    def test_newtonian(self):
        assert np.allclose(kinetic_momentum([0.3, -0.1], 2.0, False), [0.6, -0.2])

    def test_relativistic_gamma(self):
        v = np.array([0.6, 0.0])
        p = kinetic_momentum(v, 1.0, True)
        assert p[0] == pytest.approx(0.6 / 0.8, rel=1e-14)
        with pytest.raises(DomainError):
            kinetic_momentum([1.0, 0.0], 1.0, True)

    def test_jacobian_matches_finite_difference(self):
        v = np.array([0.4, -0.2])
        h = 1e-6
        J = kinetic_momentum_jacobian(v, 1.3, True)
        for l in range(2):
            dv = np.zeros(2)
            dv[l] = h
            fd = (kinetic_momentum(v + dv, 1.3, True)
                  - kinetic_momentum(v - dv, 1.3, True)) / (2 * h)
            assert np.max(np.abs(J[:, l] - fd)) < 1e-8


class TestContinuumOracles:
    """The rest-frame inertia corrections have hand-computable plane integrals
    for the Gaussian family: iota_f = 2 pi sigma^2 a^2 and mu_f = pi a^2 / 2.
    These pin down the Fourier measure convention end to end."""

    def test_field_inertia_closed_forms(self, continuum):
        mu_f, iota_f = continuum.field_mass_corrections()
        assert iota_f == pytest.approx(2 * np.pi, rel=1e-8)
        assert mu_f == pytest.approx(np.pi / 2, rel=1e-8)

    def test_box_deficit_is_zero_mode_term(self, lattice, continuum, rho):
        # at v = 0 the spin-inertia integrand tends to 4 ghat(0)^2 at k -> 0,
        # and the box (which pins that mode) loses exactly that cell
        _, iota_lat = lattice.field_mass_corrections()
        _, iota_cont = continuum.field_mass_corrections()
        ghat0 = rho.profile.g_hat(0.0)
        deficit = 4 * ghat0**2 / rho.grid.L**2
        assert iota_cont - iota_lat == pytest.approx(deficit, rel=1e-6)


class TestModesAgree:
    @pytest.mark.parametrize("v,omega", [(0.0, 0.0), (0.0, 1.0), (0.5, 1.0),
                                         (0.9, 5.0), (0.3, 0.0)])
    def test_box_oracle_matches_lattice(self, lattice, box, v, omega):
        vv = np.array([v, 0.0])
        P_l, M_l = lattice.momentum_map(vv, omega, 1.0, 1.0)
        P_b, M_b = box.momentum_map(vv, omega, 1.0, 1.0)
        scale = max(np.linalg.norm(P_l), abs(M_l), 1e-3)
        assert np.max(np.abs(P_b - P_l)) < 1e-9 * scale
        assert abs(M_b - M_l) < 1e-9 * scale

    def test_jacobian_box_matches_lattice(self, lattice, box):
        v = np.array([0.7, 0.0])
        J_l = lattice.momentum_jacobian(v, 2.0, 1.0, 1.0)
        J_b = box.momentum_jacobian(v, 2.0, 1.0, 1.0)
        assert np.max(np.abs(J_b - J_l)) < 1e-9 * np.max(np.abs(J_l))

    def test_off_axis_velocity(self, lattice, box):
        v = np.array([0.3, -0.4])
        P_l, M_l = lattice.momentum_map(v, 1.5, 1.0, 1.0)
        P_b, M_b = box.momentum_map(v, 1.5, 1.0, 1.0)
        assert np.max(np.abs(P_b - P_l)) < 1e-9 * np.linalg.norm(P_l)
        assert abs(M_b - M_l) < 1e-9 * abs(M_l)


class TestPartials:
    def test_axis_simplification_matches_general_form(self, lattice):
        # the factored axis-aligned expressions are an independent algebraic
        # route to the diagonal velocity partials
        for speed, omega in [(0.0, 0.0), (0.3, 1.0), (0.7, 5.0), (0.9, 2.0)]:
            J = lattice.momentum_jacobian(np.array([speed, 0.0]), omega, 1.0, 1.0)
            s1, s2 = lattice.axis_partials_simplified(speed, omega, 1.0)
            assert J[0, 0] == pytest.approx(s1, rel=1e-12)
            assert J[1, 1] == pytest.approx(s2, rel=1e-12)

    def test_structural_zeros_on_axis(self, lattice):
        J = lattice.momentum_jacobian(np.array([0.6, 0.0]), 3.0, 1.0, 1.0)
        scale = np.max(np.abs(J))
        for entry in (J[0, 1], J[1, 0], J[1, 2], J[2, 1]):
            assert abs(entry) < 1e-12 * scale

    def test_mixed_partials_symmetric(self, lattice):
        # dP1/domega and dM/dv1 coincide (same field integral)
        J = lattice.momentum_jacobian(np.array([0.5, 0.0]), 2.0, 1.0, 1.0)
        assert J[0, 2] == pytest.approx(J[2, 0], rel=1e-13)

    def test_rest_frame_block_structure(self, lattice):
        # at v = 0: isotropic dP/dv, vanishing mixed partials, dM/domega > I
        J = lattice.momentum_jacobian(np.zeros(2), 2.0, 1.0, 1.0)
        assert J[0, 0] == pytest.approx(J[1, 1], rel=1e-12)
        assert abs(J[0, 2]) < 1e-14 and abs(J[2, 0]) < 1e-14
        assert J[2, 2] > 1.0

    def test_rest_frame_inertia_corrections(self, lattice):
        # at v = 0 and omega = 0 the velocity/spin partials are the bare
        # inertia plus the field corrections
        J = lattice.momentum_jacobian(np.zeros(2), 0.0, 1.0, 1.0)
        mu_f, iota_f = lattice.field_mass_corrections()
        assert J[0, 0] == pytest.approx(1.0 + mu_f, rel=1e-12)
        assert J[1, 1] == pytest.approx(1.0 + mu_f, rel=1e-12)
        assert J[2, 2] == pytest.approx(1.0 + iota_f, rel=1e-12)

    def test_domain_guard(self, lattice):
        with pytest.raises(DomainError):
            lattice.momentum_map(np.array([1.0, 0.0]), 0.0, 1.0, 1.0)
