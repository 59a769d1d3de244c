from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polydecay.geometry import GAMMA1, GAMMA2, UPSILON, DampingField, make_domain
from polydecay.spectral import (
    AccuracyWarning,
    DampedPropagator,
    ModalState,
    SpectralError,
    build_basis,
    conservative_evolve,
    damping_matrix,
    energy_G,
    evolve_damped,
    lambda_quotient,
    normal_trace_energy,
    sine_product_integral,
    spectral_tail,
    synthesize_u,
)

CUBE = make_domain(3, 1, 1, 1, 0.2, 0.2)
SQUARE = make_domain(2, 1, None, 1, 0.45, 0.4)


def test_cube_ground_state():
    b = build_basis(CUBE, 1)
    assert b.eigenvalues[0] == pytest.approx(3 * math.pi**2 / 4, rel=1e-14)
    assert b.eigenvalues[0] == pytest.approx(7.402203, abs=1e-6)


def test_square_second_level_is_double():
    b = build_basis(SQUARE, 3)
    assert b.eigenvalues[1] == pytest.approx(5 * math.pi**2 / 4)
    assert b.eigenvalues[2] == pytest.approx(5 * math.pi**2 / 4)
    assert b.indices[1].tolist() == [1, 2]
    assert b.indices[2].tolist() == [2, 1]


def test_empty_basis_rejected():
    with pytest.raises(SpectralError):
        build_basis(SQUARE, 0)


def test_basis_matches_brute_force_enumeration():
    spec = make_domain(3, 1.0, 1.3, 0.7, 0.2)
    b = build_basis(spec, 300)
    ks = np.arange(1, 40)
    mu = sorted(((k1 * math.pi / 2.0) ** 2 + (k2 * math.pi / 2.6) ** 2 + (k3 * math.pi / 1.4) ** 2)
                for k1 in ks for k2 in ks for k3 in ks)
    assert np.allclose(b.eigenvalues, mu[:300], rtol=1e-13)
    assert np.all(np.diff(b.eigenvalues) >= 0)


def test_eigenfunctions_orthonormal():
    b = build_basis(SQUARE, 40)
    mass = b.box_mass(((-1, 1), (-1, 1)))
    assert np.allclose(mass, np.eye(40), atol=1e-13)


def test_sine_product_integral_against_quadrature():
    xs, ws = np.polynomial.legendre.leggauss(80)
    a, b, m = -0.3, 0.9, 1.2
    x = 0.5 * (b - a) * xs + 0.5 * (b + a)
    for k1, k2 in [(1, 1), (2, 5), (7, 7), (3, 8)]:
        f = np.sin(k1 * np.pi * (x + m) / (2 * m)) * np.sin(k2 * np.pi * (x + m) / (2 * m)) / m
        assert sine_product_integral(m, k1, k2, a, b) == pytest.approx(0.5 * (b - a) * ws @ f, abs=1e-14)


def test_synthesize_initial_and_period():
    b = build_basis(SQUARE, 5)
    x = np.array([[0.1, -0.3], [0.7, 0.2]])
    st0 = ModalState.unit(b, 0)
    u, v = synthesize_u(st0, x, 0.0)
    assert np.allclose(u, b.evaluate(x)[:, 0]) and np.allclose(v, 0)
    u, v = synthesize_u(st0, x, 2 * math.pi / b.frequencies[0])
    assert np.allclose(u, b.evaluate(x)[:, 0], atol=1e-13) and np.allclose(v, 0, atol=1e-12)
    u, v = synthesize_u(ModalState.unit(b, 0, velocity=True), x, 0.0)
    assert np.allclose(u, 0) and np.allclose(v, b.evaluate(x)[:, 0])


def test_energy_examples():
    b = build_basis(SQUARE, 4)
    assert energy_G(ModalState.unit(b, 0)) == pytest.approx(b.eigenvalues[0])
    assert energy_G(ModalState.unit(b, 0, velocity=True)) == 1.0
    assert energy_G(ModalState.zeros(b)) == 0.0


def test_lambda_quotient():
    b = build_basis(SQUARE, 10)
    for j in (0, 4, 9):
        assert lambda_quotient(ModalState.unit(b, j)) == pytest.approx(b.eigenvalues[j])
    b0 = np.zeros(10)
    b0[0], b0[6] = 1 / math.sqrt(b.eigenvalues[0]), 1 / math.sqrt(b.eigenvalues[6])
    lam = lambda_quotient(ModalState(b, b0, np.zeros(10)))
    assert b.eigenvalues[0] < lam < b.eigenvalues[6]
    with pytest.raises(SpectralError):
        lambda_quotient(ModalState.zeros(b))


def test_damping_matrix_zero_and_constant():
    b = build_basis(SQUARE, 30)
    assert np.all(damping_matrix(b, DampingField("indicator", 0.0)).matrix == 0)
    D = damping_matrix(b, DampingField("indicator", 0.7, "everywhere")).matrix
    assert np.allclose(D, 0.7 * np.eye(30))


def test_indicator_diagonal_matches_closed_form():
    b = build_basis(SQUARE, 30)
    D = damping_matrix(b, DampingField("indicator", 2.0)).matrix
    # omega in 2-D: |x1| > 0.6, so D_jj = 2 * int_collar s_k1^2 dx1
    for j in range(30):
        k1 = b.indices[j, 0]
        inner = sine_product_integral(1.0, k1, k1, -0.6, 0.6)
        assert D[j, j] == pytest.approx(2.0 * (1 - inner), abs=1e-12)
        assert 0 < D[j, j] < 2.0


def test_damping_matrix_symmetric_psd():
    b = build_basis(SQUARE, 80)
    for fld in (DampingField("indicator", 3.0), DampingField("smooth-bump", 3.0, "boundary")):
        D = damping_matrix(b, fld).matrix
        assert np.allclose(D, D.T)
        assert np.linalg.eigvalsh(D).min() > -1e-12


def test_damping_quadrature_warning():
    b = build_basis(SQUARE, 30)
    with pytest.warns(AccuracyWarning):
        damping_matrix(b, DampingField("indicator", 1.0), quadrature_order=1, tol=1e-14)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        damping_matrix(b, DampingField("indicator", 1.0))


def test_damped_scalar_oscillator_closed_form():
    b = build_basis(SQUARE, 6)
    c = 0.8
    D = c * np.eye(6)
    state = ModalState.unit(b, 0)
    nu = math.sqrt(b.eigenvalues[0] - c * c / 4)
    for t in (0.3, 1.7, 5.0):
        got = evolve_damped(state, D, t).b0[0]
        want = math.exp(-c * t / 2) * (math.cos(nu * t) + c / (2 * nu) * math.sin(nu * t))
        assert got == pytest.approx(want, abs=1e-8)


def test_undamped_period_and_identity():
    b = build_basis(SQUARE, 6)
    state = ModalState.unit(b, 0)
    back = evolve_damped(state, np.zeros((6, 6)), 2 * math.pi / b.frequencies[0])
    assert np.allclose(back.b0, state.b0, atol=1e-10) and np.allclose(back.b1, state.b1, atol=1e-10)
    same = evolve_damped(state, np.eye(6), 0.0)
    assert np.array_equal(same.b0, state.b0)


def test_conservation_over_many_periods():
    b = build_basis(SQUARE, 50)
    rng = np.random.default_rng(1)
    state = ModalState(b, rng.normal(size=50), rng.normal(size=50))
    e0 = energy_G(state)
    prop = DampedPropagator(b, np.zeros((50, 50)))
    T = 100 * 2 * math.pi / b.frequencies[0]
    assert abs(energy_G(prop.evolve(state, T)) - e0) <= 1e-10 * e0
    assert abs(energy_G(conservative_evolve(state, T)) - e0) <= 1e-10 * e0


@pytest.mark.parametrize("fld", [
    DampingField("indicator", 5.0),
    DampingField("smooth-bump", 2.0, "boundary"),
])
def test_energy_monotone_and_balanced(fld):
    b = build_basis(SQUARE, 120)
    D = damping_matrix(b, fld).matrix
    rng = np.random.default_rng(2)
    state = ModalState(b, rng.normal(size=120) / b.eigenvalues, rng.normal(size=120) / b.frequencies)
    times, E, lost, _ = DampedPropagator(b, D).trace(state, 10.0, 0.25)
    assert np.all(np.diff(E) <= 1e-12 * E[0])
    assert np.max(np.abs(E + lost - E[0])) <= 1e-10 * E[0]


def test_trace_requires_whole_steps():
    b = build_basis(SQUARE, 5)
    with pytest.raises(SpectralError):
        DampedPropagator(b, np.eye(5)).trace(ModalState.unit(b, 0), 1.0, 0.3)


def test_normal_trace_energy_cube_ground_mode():
    # sum over faces of |d_nu l|^2 is 2 mu for the unit-half-width cube, so
    # one period gives mu_1 * T
    b = build_basis(CUBE, 4)
    state = ModalState.unit(b, 0)
    T = 2 * math.pi / b.frequencies[0]
    val = normal_trace_energy(state, [GAMMA1, GAMMA2, UPSILON], T)
    assert val == pytest.approx(b.eigenvalues[0] * T, rel=1e-12)
    assert normal_trace_energy(state, [GAMMA1, GAMMA2, UPSILON], 2 * T) == pytest.approx(2 * val, rel=1e-12)
    assert normal_trace_energy(ModalState.zeros(b), [UPSILON], T) == 0.0


def test_rellich_identity_on_a_rectangular_box():
    spec = make_domain(3, 1.0, 1.4, 0.8, 0.3)
    b = build_basis(spec, 30)
    for j in (0, 7, 29):
        state = ModalState.unit(b, j)
        T = 2 * math.pi / b.frequencies[j]
        total = 0.0
        for axis, m in enumerate(spec.half_sizes):
            # per-axis faces weighted by the half-width
            faces = [GAMMA1, GAMMA2] if axis == 2 else None
            if faces is None:
                continue
            total += m * normal_trace_energy(state, faces, T)
        lateral = normal_trace_energy(state, [UPSILON], T)
        k = b.indices[j]
        # lateral faces of axis d contribute (k_d pi / 2 m_d)^2 * 2 / m_d * T/2
        lat_weighted = sum(m * (k[a] * math.pi / (2 * m)) ** 2 * 2 / m * T / 2
                           for a, m in enumerate(spec.half_sizes[:2]))
        lat_plain = sum((k[a] * math.pi / (2 * m)) ** 2 * 2 / m * T / 2
                        for a, m in enumerate(spec.half_sizes[:2]))
        assert lateral == pytest.approx(lat_plain, rel=1e-12)
        assert total + lat_weighted == pytest.approx(2 * b.eigenvalues[j] * T / 2, rel=1e-12)


def test_spectral_tail():
    b = build_basis(SQUARE, 10)

    def coefficients(big):
        return 1.0 / big.eigenvalues, np.zeros(big.count)

    big = build_basis(SQUARE, 15)
    assert spectral_tail(coefficients, b, 5) == pytest.approx(np.sum(1.0 / big.eigenvalues[10:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(0.5, 2.0))
def test_weyl_box_formula(N, m1, m2, rho):
    spec = make_domain(3, m1, m2, rho, min(m1, m2, rho) / 4)
    b = build_basis(spec, N)
    sides = np.array(spec.sides)
    assert np.allclose(b.eigenvalues, ((b.indices * np.pi / sides) ** 2).sum(axis=1))
    assert np.all(np.diff(b.eigenvalues) >= -1e-12 * b.eigenvalues[-1])
