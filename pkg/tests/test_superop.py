import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfgr.core import (
    CoarseGrainingParams,
    CouplingOperator,
    EnergyBasis,
    ParameterError,
    ValidationError,
    anticommutator,
    random_hermitian,
)
from gfgr.superop import (
    SemiclassicalRates,
    boltzmann_rhs,
    build_coarse_grained_L,
    completed_collision_kernel,
    conventional_apply,
    conventional_kernel,
    conventional_rate_tensor,
    fgr_rates,
    gaussian_delta,
    gfgr_apply,
    gfgr_rate_tensor,
    smoothed_fgr_rates,
)
from gfgr.diagnostics import generator_distance
from gfgr.generators import conventional_generator, gfgr_generator

from conftest import random_instance
from oracles import coarse_grained_entry_quadrature, double_commutator_2x2_loop, kernel_entry_quadrature

TWO_LEVEL = EnergyBasis((0.0, 1.0))
H_OFF = np.array([[0.0, 0.1], [0.1, 0.0]], dtype=complex)
# (8 pi)^(1/4) * 0.1 * e^-1, frozen from the quadrature oracle
L01_FROZEN = 0.08236932044348652


def seeds(n):
    return st.integers(0, 2**31 - 1)


class TestCoarseGrainedL:
    def test_zero_coupling(self):
        for t in (0.3, 1.0, 9.0):
            L = build_coarse_grained_L(np.zeros((2, 2)), TWO_LEVEL, CoarseGrainingParams(t))
            assert not np.any(L.matrix)

    def test_degenerate_pair_has_unit_weight(self):
        basis = EnergyBasis((0.5, 0.5))
        t = 3.0
        L = build_coarse_grained_L(H_OFF, basis, CoarseGrainingParams(t))
        assert L.matrix[0, 1] == pytest.approx((2 * math.pi * t**2) ** 0.25 * 0.1, rel=1e-15)

    def test_two_level_example_against_quadrature(self):
        oracle = coarse_grained_entry_quadrature(0.1, -1.0, 2.0)
        assert abs(oracle - L01_FROZEN) / L01_FROZEN <= 1e-12
        L = build_coarse_grained_L(H_OFF, TWO_LEVEL, CoarseGrainingParams(2.0))
        assert abs(L.matrix[0, 1] - L01_FROZEN) / L01_FROZEN <= 1e-8
        assert L01_FROZEN == pytest.approx((8 * math.pi) ** 0.25 * 0.1 * math.exp(-1), rel=1e-14)

    def test_hermitian_and_linear_in_g(self, rng):
        basis, h, _ = random_instance(rng, 4)
        p = CoarseGrainingParams(1.7)
        L1 = build_coarse_grained_L(CouplingOperator(h, basis, 1.0), basis, p).matrix
        L3 = build_coarse_grained_L(CouplingOperator(h, basis, 3.0), basis, p).matrix
        np.testing.assert_allclose(L1, L1.conj().T, atol=1e-12)
        np.testing.assert_allclose(L3, 3.0 * L1, rtol=1e-14)

    def test_hbar_carried(self, rng):
        basis, h, _ = random_instance(rng, 3)
        L = build_coarse_grained_L(h, basis, CoarseGrainingParams(2.0, hbar=0.5)).matrix
        gauss = np.exp(-(basis.gaps() * 2.0 / 0.5) ** 2 / 4)
        np.testing.assert_allclose(L, (2 * math.pi * 4.0) ** 0.25 * h / 0.5 * gauss, rtol=1e-13)


class TestGFGRApply:
    def test_unital(self, rng):
        basis, h, _ = random_instance(rng, 5)
        L = build_coarse_grained_L(h, basis, CoarseGrainingParams(1.0))
        assert not np.any(gfgr_apply(L, np.eye(5) / 5))

    def test_commuting_state_is_fixed(self):
        L = np.diag([0.3, -0.1, 0.7])
        assert not np.any(gfgr_apply(L, np.diag([0.2, 0.5, 0.3])))

    def test_two_level_population_transfer(self):
        L = build_coarse_grained_L(H_OFF, TWO_LEVEL, CoarseGrainingParams(2.0))
        rho = np.diag([1.0, 0.0]).astype(complex)
        out = gfgr_apply(L, rho)
        np.testing.assert_allclose(out, double_commutator_2x2_loop(L.matrix, L.matrix, rho), atol=1e-16)
        l2 = abs(L.matrix[0, 1]) ** 2
        np.testing.assert_allclose(np.diag(out).real, [-l2, l2], rtol=1e-14)

    @given(seeds(1), st.integers(2, 6))
    @settings(max_examples=50, deadline=None)
    def test_lindblad_expansion_trace_hermiticity(self, seed, dim):
        rng = np.random.default_rng(seed)
        basis, h, rho = random_instance(rng, dim)
        L = build_coarse_grained_L(h, basis, CoarseGrainingParams(rng.uniform(0.5, 8)))
        lm = L.matrix
        out = gfgr_apply(L, rho)
        expanded = lm @ rho @ lm - 0.5 * anticommutator(lm @ lm, rho)
        assert np.max(np.abs(out - expanded)) <= 1e-14
        assert abs(np.trace(out)) <= 1e-13
        assert np.max(np.abs(out - out.conj().T)) <= 1e-13

    def test_trace_and_hermiticity_many(self, rng):
        for _ in range(1000):
            basis, h, rho = random_instance(rng, int(rng.integers(2, 7)))
            out = gfgr_apply(build_coarse_grained_L(h, basis, CoarseGrainingParams(2.0)), rho)
            assert abs(np.trace(out)) <= 1e-13
            assert np.max(np.abs(out - out.conj().T)) <= 1e-13


class TestRateTensors:
    def test_diagonal_selection_is_smoothed_fgr(self, rng):
        basis, h, _ = random_instance(rng, 5)
        p = CoarseGrainingParams(1.3)
        tensor = gfgr_rate_tensor(build_coarse_grained_L(h, basis, p))
        np.testing.assert_allclose(tensor.diagonal(), smoothed_fgr_rates(h, basis, p).matrix, rtol=1e-14, atol=1e-16)

    def test_zero_coupling(self):
        t = gfgr_rate_tensor(build_coarse_grained_L(np.zeros((3, 3)), EnergyBasis((0, 1, 2)), CoarseGrainingParams(1)))
        assert not np.any(t.entries)

    def test_factorisation(self, rng):
        for dim in range(2, 9):
            basis, h, _ = random_instance(rng, dim)
            L = build_coarse_grained_L(h, basis, CoarseGrainingParams(rng.uniform(0.5, 4)))
            outer = np.einsum("ac,bd->abcd", L.matrix, L.matrix.conj())
            assert np.max(np.abs(gfgr_rate_tensor(L).entries - outer)) <= 1e-12

    def test_equation_of_motion_matches_double_commutator(self, rng):
        basis, h, rho = random_instance(rng, 3)
        L = build_coarse_grained_L(h, basis, CoarseGrainingParams(1.1))
        assert np.max(np.abs(gfgr_rate_tensor(L).rhs(rho) - gfgr_apply(L, rho))) <= 1e-12

    def test_hermitian_pairing_gfgr(self, rng):
        basis, h, _ = random_instance(rng, 4)
        t = gfgr_rate_tensor(build_coarse_grained_L(h, basis, CoarseGrainingParams(1.0)))
        swapped = np.transpose(t.entries, (1, 0, 3, 2)).conj()
        assert np.max(np.abs(t.entries - swapped)) <= 1e-12

    def test_conventional_pairing_broken_by_single_delta(self, rng):
        # swapping the pairs moves the delta from (l2, l2p) to (l1, l1p)
        basis, h, _ = random_instance(rng, 4)
        t = conventional_rate_tensor(h, basis, 0.4)
        swapped = np.transpose(t.entries, (1, 0, 3, 2)).conj()
        assert np.max(np.abs(t.entries - swapped)) > 1e-3
        degenerate = conventional_rate_tensor(h, EnergyBasis((0.2,) * 4), 0.4)
        sw = np.transpose(degenerate.entries, (1, 0, 3, 2)).conj()
        assert np.max(np.abs(degenerate.entries - sw)) <= 1e-12

    def test_conventional_diagonal_is_fgr(self, rng):
        basis, h, _ = random_instance(rng, 4)
        t = conventional_rate_tensor(h, basis, 0.3)
        np.testing.assert_allclose(t.diagonal(), fgr_rates(h, basis, 0.3).matrix, rtol=1e-14, atol=1e-300)

    def test_degenerate_spectrum_tensors_coincide(self, rng):
        basis = EnergyBasis((0.7,) * 4)
        h = random_hermitian(4, rng, 0.3)
        p = CoarseGrainingParams(2.5)
        a = gfgr_rate_tensor(build_coarse_grained_L(h, basis, p)).entries
        b = conventional_rate_tensor(h, basis, p.eps_bar).entries
        assert np.max(np.abs(a - b)) <= 1e-14

    def test_asymmetry_witness(self, rng):
        basis = EnergyBasis((0.0, 0.4, 1.5))
        h = random_hermitian(3, rng, 0.3)
        p = CoarseGrainingParams(1.0)
        L = build_coarse_grained_L(h, basis, p)
        conv = conventional_rate_tensor(h, basis, p.eps_bar).entries
        factorised = np.einsum("ac,bd->abcd", L.matrix, L.matrix.conj())
        # l1 -> l1' crosses the 0 <-> 2 gap, l2 = l2' sits on the diagonal
        idx = (0, 1, 2, 1)
        assert abs(conv[idx] - factorised[idx]) > 1e-3 * abs(conv[idx])
        # the single delta sits on the second pair only
        assert abs(conv[0, 1, 2, 1]) != pytest.approx(abs(conv[1, 0, 1, 2]))

    def test_size_cap(self):
        basis = EnergyBasis(tuple(range(17)))
        with pytest.raises(Exception, match="dim <= 16"):
            conventional_rate_tensor(np.zeros((17, 17)), basis, 1.0)

    def test_rows_schema(self, rng):
        basis, h, _ = random_instance(rng, 2)
        rows = list(conventional_rate_tensor(h, basis, 1.0).rows())
        assert len(rows) == 16 and len(rows[0]) == 6


class TestSemiclassicalRates:
    @pytest.mark.parametrize("eps", [1.0, 0.5, 0.25])
    def test_zero_gap_scaling(self, eps):
        basis = EnergyBasis((0.0, 0.0))
        p = smoothed_fgr_rates(H_OFF, basis, CoarseGrainingParams.from_eps_bar(eps)).matrix
        assert p[0, 1] == pytest.approx(2 * math.pi * 0.01 / (math.sqrt(2 * math.pi) * eps), rel=1e-14)

    def test_symmetry_and_nonnegativity(self, rng):
        basis, h, _ = random_instance(rng, 6)
        p = smoothed_fgr_rates(h, basis, CoarseGrainingParams(0.8)).matrix
        assert np.all(p >= 0)
        np.testing.assert_allclose(p, p.T, rtol=1e-15)

    def test_equals_abs_L_squared(self, rng):
        basis, h, _ = random_instance(rng, 4)
        params = CoarseGrainingParams(1.9)
        L = build_coarse_grained_L(h, basis, params).matrix
        np.testing.assert_allclose(smoothed_fgr_rates(h, basis, params).matrix, np.abs(L) ** 2, rtol=1e-13)

    def test_fgr_peak(self):
        p = fgr_rates(H_OFF, EnergyBasis((0.0, 0.0)), 0.2).matrix
        assert p[0, 1] == pytest.approx(2 * math.pi * 0.01 / (math.sqrt(2 * math.pi) * 0.2), rel=1e-14)

    def test_fgr_tail_negligible(self):
        p = fgr_rates(H_OFF, EnergyBasis((0.0, 41.0)), 1.0).matrix
        assert p[0, 1] < 1e-300

    def test_smoothed_equals_fgr_at_matched_width(self, rng):
        basis, h, _ = random_instance(rng, 5)
        eps = 0.37
        a = smoothed_fgr_rates(h, basis, CoarseGrainingParams.from_eps_bar(eps)).matrix
        b = fgr_rates(h, basis, eps).matrix
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=0)

    def test_rejects_bad_width_and_negative_rates(self):
        with pytest.raises(ParameterError):
            fgr_rates(H_OFF, TWO_LEVEL, 0.0)
        with pytest.raises(ParameterError):
            conventional_rate_tensor(H_OFF, TWO_LEVEL, -1.0)
        with pytest.raises(ValidationError):
            SemiclassicalRates(np.array([[0.0, -1.0], [1.0, 0.0]]), "delta", 1.0)


class TestConventionalKernel:
    def test_diagonal_entry(self):
        h = np.diag([0.3, -0.2]).astype(complex)
        k = conventional_kernel(h, TWO_LEVEL, 4.0)
        np.testing.assert_allclose(np.diag(k.matrix), 2 * np.diag(h) * 4.0, rtol=1e-15)

    @pytest.mark.parametrize("elapsed", [0.3, 2.0, 17.5])
    def test_against_quadrature(self, elapsed):
        basis = EnergyBasis((0.0, 1.3))
        k = conventional_kernel(H_OFF, basis, elapsed)
        oracle = kernel_entry_quadrature(0.1, -1.3, elapsed)
        assert abs(k.matrix[0, 1] - oracle) <= 1e-10
        expected_mag = 2 * 0.1 * abs(2 * math.sin(1.3 * elapsed / 2) / 1.3)
        assert abs(k.matrix[0, 1]) == pytest.approx(expected_mag, rel=1e-12)

    def test_bounded_off_shell(self):
        k = conventional_kernel(H_OFF, EnergyBasis((0.0, 0.7)), 1e6)
        assert abs(k.matrix[0, 1]) <= 4 * 0.1 / 0.7 + 1e-12

    def test_hermitian(self, rng):
        basis, h, _ = random_instance(rng, 5)
        k = conventional_kernel(h, basis, 3.3).matrix
        assert np.max(np.abs(k - k.conj().T)) <= 1e-10

    def test_rejects_nonpositive_elapsed(self):
        with pytest.raises(ParameterError):
            conventional_kernel(H_OFF, TWO_LEVEL, 0.0)


class TestConventionalApply:
    def test_identity_and_zero_coupling(self, rng):
        basis, h, rho = random_instance(rng, 3)
        k = completed_collision_kernel(h, basis, 0.5)
        assert not np.any(conventional_apply(h, k, np.eye(3) / 3))
        z = np.zeros((3, 3))
        assert not np.any(conventional_apply(z, completed_collision_kernel(z, basis, 0.5), rho))

    def test_completed_form_matches_rate_tensor(self, rng):
        basis, h, rho = random_instance(rng, 4)
        k = completed_collision_kernel(h, basis, 0.3)
        t = conventional_rate_tensor(h, basis, 0.3)
        np.testing.assert_allclose(conventional_apply(h, k, rho), t.rhs(rho), atol=1e-13)

    def test_trace_and_hermiticity(self, rng):
        for _ in range(1000):
            basis, h, rho = random_instance(rng, int(rng.integers(2, 6)))
            if rng.random() < 0.5:
                k = completed_collision_kernel(h, basis, rng.uniform(0.05, 1.0))
            else:
                k = conventional_kernel(h, basis, rng.uniform(0.1, 10.0))
            out = conventional_apply(h, k, rho)
            assert abs(np.trace(out)) <= 1e-13
            assert np.max(np.abs(out - out.conj().T)) <= 1e-13

    def test_differs_from_gfgr_in_population_coherence_block(self):
        h = np.array([[0.3, 0.1], [0.1, -0.2]], dtype=complex)
        p = CoarseGrainingParams(2.0)
        audit = generator_distance(
            conventional_generator(h, TWO_LEVEL, eta=p.eps_bar), gfgr_generator(h, TWO_LEVEL, p)
        )
        assert audit.spectral > 1e-3
        assert audit.blocks["pop<-coh"] + audit.blocks["coh<-pop"] > 1e-3


class TestBoltzmann:
    def test_equipartition_fixed(self, rng):
        m = rng.uniform(0, 1, (4, 4))
        rates = SemiclassicalRates(m + m.T, "gaussian", 1.0)
        np.testing.assert_allclose(boltzmann_rhs(rates, np.full(4, 0.25)), 0.0, atol=1e-15)

    def test_single_channel(self):
        rates = SemiclassicalRates(np.array([[0.0, 0.7], [0.7, 0.0]]), "delta", 1.0)
        np.testing.assert_allclose(boltzmann_rhs(rates, [1.0, 0.0]), [-0.7, 0.7])

    def test_rejects_negative_population(self):
        rates = SemiclassicalRates(np.ones((2, 2)), "delta", 1.0)
        with pytest.raises(ValidationError):
            boltzmann_rhs(rates, [1.1, -0.1])

    def test_matches_gfgr_diagonal(self, rng):
        for _ in range(100):
            basis, h, _ = random_instance(rng, int(rng.integers(2, 7)))
            params = CoarseGrainingParams(rng.uniform(0.5, 5))
            f = rng.dirichlet(np.ones(basis.dim))
            lindblad = gfgr_apply(build_coarse_grained_L(h, basis, params), np.diag(f))
            boltz = boltzmann_rhs(smoothed_fgr_rates(h, basis, params), f)
            assert np.max(np.abs(np.diag(lindblad).real - boltz)) <= 1e-12
            assert abs(boltz.sum()) <= 1e-13

    def test_propagation_stays_normalised(self, rng):
        m = rng.uniform(0, 1, (5, 5))
        rates = SemiclassicalRates(m, "gaussian", 1.0)
        f = rng.dirichlet(np.ones(5))
        dt = 0.01
        for _ in range(10_000):
            k1 = boltzmann_rhs(rates, f, sum_tol=1e-9)
            f = f + dt * k1
            assert np.all(f >= -1e-12)
        assert abs(f.sum() - 1) <= 1e-10


def test_gaussian_delta_normalised():
    x = np.linspace(-20, 20, 40001)
    assert np.trapezoid(gaussian_delta(x, 0.7), x) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ParameterError):
        gaussian_delta(0.0, 0.0)
