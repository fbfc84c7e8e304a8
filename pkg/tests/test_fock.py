import itertools
import math

import numpy as np
import pytest

from sseqmc import fock
from sseqmc.noise import ConfigurationError


def test_ladder_entries():
    a, ad = fock.ladder_operators(2)
    assert a[0, 1] == 1
    assert a[1, 2] == pytest.approx(math.sqrt(2))
    np.testing.assert_array_equal(ad, a.conj().T)
    np.testing.assert_allclose(np.diag(ad @ a), np.arange(3))
    np.testing.assert_allclose(ad @ a - np.diag(np.diag(ad @ a)), 0)


def test_commutator_is_identity_below_cutoff():
    a, ad = fock.ladder_operators(6)
    c = a @ ad - ad @ a
    np.testing.assert_allclose(c[:-1, :-1], np.eye(6), atol=1e-14)
    assert c[-1, -1] == pytest.approx(-6)


def test_truncation_validation():
    with pytest.raises(ConfigurationError):
        fock.FockTruncation(0)


def test_normal_ordered_is_exact_block():
    big = fock.normal_ordered(2, 3, 20)
    small = fock.normal_ordered(2, 3, 8)
    np.testing.assert_allclose(big[:9, :9], small, atol=1e-12)


def test_kerr_diagonal():
    H = fock.build_hamiltonian("kerr", omega=1.0, kerr_k=0.1, hbar=1.0, n_max=10)
    assert H[0, 0] == 0
    assert H[1, 1] == pytest.approx(1.0)
    assert H[3, 3] == pytest.approx(3.3)
    np.testing.assert_allclose(H, np.diag(np.diag(H)))


def test_genkerr_adds_three_body_term():
    Hk = fock.build_hamiltonian("kerr", omega=1.0, kerr_k=0.2, n_max=6)
    Hg = fock.build_hamiltonian("genkerr", omega=1.0, k1=0.2, k2=0.06, n_max=6)
    n = np.arange(7)
    np.testing.assert_allclose(np.diag(Hg - Hk).real, 0.06 * n * (n - 1) * (n - 2) / 6)


def test_two_mode_hamiltonian():
    H = fock.build_hamiltonian("two_mode", n_particles=17, omega_rabi=1.0, kerr_k=0.1)
    assert H.shape == (18, 18)
    assert np.abs(H - H.conj().T).max() < 1e-12
    N = 17
    assert H[1, 0] == pytest.approx(0.5 * math.sqrt(1 * 17))
    assert H[0, 0] == pytest.approx(0.1 * N * (N - 1))


def test_two_mode_hamiltonian_matches_second_quantised_form():
    sp = fock.TwoModeBosons(5)
    T = 0.5 * 0.8 * np.array([[0, 1], [1, 0]])
    g = math.sqrt(2 * 0.3)
    H = sp.hamiltonian(T, [g * np.diag([1.0, 0]), g * np.diag([0, 1.0])])
    np.testing.assert_allclose(H, fock.two_mode_hamiltonian(5, 0.8, 0.3), atol=1e-12)


def test_free_hamiltonian_matches_p2_over_2m():
    eta, m, hbar, n = 1.3, 0.7, 1.1, 12
    H = fock.build_hamiltonian("free", eta=eta, mass=m, hbar=hbar, n_max=n)
    p = fock.momentum_operator(eta, hbar, n + 4)
    np.testing.assert_allclose(H, (p @ p)[: n + 1, : n + 1] / (2 * m), atol=1e-12)


def test_unknown_model():
    with pytest.raises(ConfigurationError):
        fock.build_hamiltonian("nope")
    with pytest.raises(ConfigurationError):
        fock.build_hamiltonian("kerr", omega=1.0, kerr_k=0.1, bogus=2)


def test_propagate_trivial_cases():
    H = fock.build_hamiltonian("kerr", omega=1.0, kerr_k=0.1, n_max=5)
    psi = np.zeros(6, complex)
    psi[3] = 1
    np.testing.assert_allclose(fock.propagate_exact(H, psi, 0.0), psi, atol=1e-14)
    out = fock.propagate_exact(H, psi, 0.7)
    np.testing.assert_allclose(out[3], np.exp(-1j * 3.3 * 0.7), atol=1e-13)
    np.testing.assert_allclose(np.delete(out, 3), 0, atol=1e-14)


def test_propagate_conserves_norm_and_energy():
    H = fock.two_mode_hamiltonian(17, 1.0, 0.1)
    psi = np.random.default_rng(0).standard_normal(18) + 0j
    psi /= np.linalg.norm(psi)
    e0 = np.vdot(psi, H @ psi).real
    for t in (0.5, 3.0, 6.0):
        out = fock.propagate_exact(H, psi, t)
        assert abs(np.linalg.norm(out) - 1) < 1e-10
        assert abs(np.vdot(out, H @ out).real - e0) < 1e-10


def test_propagate_many_times_matches_single():
    H = fock.two_mode_hamiltonian(4, 1.0, 0.3)
    psi = np.eye(5)[0].astype(complex)
    ts = np.array([0.1, 0.4])
    out = fock.propagate_exact(H, psi, ts)
    for k, t in enumerate(ts):
        np.testing.assert_allclose(out[k], fock.propagate_exact(H, psi, t), atol=1e-13)


def test_propagate_rejects_non_hermitian():
    with pytest.raises(ConfigurationError):
        fock.propagate_exact(np.array([[0, 1], [0, 0]]), np.array([1, 0]), 1.0)


def test_bargmann_vacuum():
    D = fock.bargmann_density(0, 0, 5)
    expected = np.zeros((6, 6))
    expected[0, 0] = 1
    np.testing.assert_allclose(D, expected)


def test_bargmann_trace_and_eigen_relations():
    alpha, beta = 0.7 - 0.3j, 0.4 + 0.6j
    D = fock.bargmann_density(1.0, 1.0, 30)
    assert abs(np.trace(D) - 1) < 1e-12
    D = fock.bargmann_density(alpha, beta, 40)
    a, ad = fock.ladder_operators(40)
    assert abs(np.trace(D) - 1) < 1e-12
    assert np.trace(a @ D) == pytest.approx(alpha, abs=1e-12)
    assert np.trace(ad @ D) == pytest.approx(beta, abs=1e-12)
    # a D = alpha D away from the truncation edge
    np.testing.assert_allclose((a @ D)[:30, :30], alpha * D[:30, :30], atol=1e-12)
    np.testing.assert_allclose((D @ ad)[:30, :30], beta * D[:30, :30], atol=1e-12)


def test_bargmann_truncation_convergence():
    rng = np.random.default_rng(2)
    for _ in range(5):
        alpha, beta = 2 * np.exp(2j * np.pi * rng.random(2)) * np.sqrt(rng.random(2))
        vals = []
        for n in (30, 40):
            D = fock.bargmann_density(alpha, beta, n)
            a, ad = fock.ladder_operators(n)
            vals.append((np.trace(a @ D), np.trace(ad @ a @ D)))
        assert abs(vals[0][0] - vals[1][0]) < 1e-10
        assert abs(vals[0][1] - vals[1][1]) < 1e-10


def test_bargmann_overflow():
    with pytest.raises(OverflowError):
        fock.bargmann_density(40, 40, 5)


def test_ehrenfest_identity_and_harmonic():
    alpha, beta = 0.7, 0.4 + 0.2j
    D = fock.bargmann_density(alpha, beta, 40)
    a, ad = fock.ladder_operators(40)
    H = 1.3 * ad @ a
    assert fock.ehrenfest_rhs(np.eye(41), H, D) == 0
    assert fock.ehrenfest_rhs(a, H, D) == pytest.approx(-1.3j * alpha, abs=1e-12)


def test_ehrenfest_kerr_drift():
    omega, K = 1.0, 0.1
    alpha, beta = 0.7, 0.4 + 0.2j
    D = fock.bargmann_density(alpha, beta, 40)
    a, _ = fock.ladder_operators(40)
    H = fock.build_hamiltonian("kerr", omega=omega, kerr_k=K, n_max=40)
    expected = -1j * (omega + K * beta * alpha) * alpha
    assert fock.ehrenfest_rhs(a, H, D) == pytest.approx(expected, rel=1e-10)


def test_ehrenfest_genkerr_drift():
    omega, k1, k2 = 0.9, 0.2, 0.07
    alpha, beta = 0.6 - 0.2j, 0.3 + 0.5j
    s = beta * alpha
    D = fock.bargmann_density(alpha, beta, 40)
    a, _ = fock.ladder_operators(40)
    H = fock.build_hamiltonian("genkerr", omega=omega, k1=k1, k2=k2, n_max=40)
    expected = -1j * (omega + k1 * s + 0.5 * k2 * s**2) * alpha
    assert fock.ehrenfest_rhs(a, H, D) == pytest.approx(expected, rel=1e-10)


def test_ehrenfest_free_expansion_xp():
    eta, m, hbar = 1.0, 1.0, 1.0
    alpha, beta = 0.3 + 0.1j, 0.2 - 0.4j
    D = fock.bargmann_density(alpha, beta, 40)
    H = fock.build_hamiltonian("free", eta=eta, mass=m, hbar=hbar, n_max=40)
    x = fock.position_operator(eta, 40)
    p = fock.momentum_operator(eta, hbar, 40)
    P = 1j * hbar * math.sqrt(eta / 2) * (beta - alpha)
    assert fock.ehrenfest_rhs(x, H, D, hbar) == pytest.approx(P / m, rel=1e-10)
    assert abs(fock.ehrenfest_rhs(p, H, D, hbar)) < 1e-12


def test_ehrenfest_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        fock.ehrenfest_rhs(np.eye(3), np.eye(4), np.eye(4))


def test_dyadic_expectations_kerr_closed_form():
    omega, K = 1.0, 0.1
    alpha, beta = 1.0, 1.0
    D = fock.bargmann_density(alpha, beta, 30)
    H = fock.build_hamiltonian("kerr", omega=omega, kerr_k=K, n_max=30)
    a, _ = fock.ladder_operators(30)
    t = np.linspace(0, 1, 6)
    got = fock.dyadic_expectations(H, D, [a], t)[0]
    expected = alpha * np.exp(-1j * omega * t) * np.exp(beta * alpha * (np.exp(-1j * K * t) - 1))
    np.testing.assert_allclose(got, expected, atol=1e-10)


def test_fermion_space_dimensions_and_anticommutation():
    sp = fock.Fermions(4, 2)
    assert sp.dim == 6
    n_op = sum(sp.E[i, i] for i in range(4))
    np.testing.assert_allclose(n_op, 2 * np.eye(6), atol=1e-14)
    with pytest.raises(ConfigurationError):
        fock.Fermions(3, 4)


def test_fermion_slater_densities():
    rng = np.random.default_rng(1)
    M, N = 4, 2
    sp = fock.Fermions(M, N)
    A = rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))
    C = rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))
    B = np.linalg.solve(C @ A, C)
    D = sp.dyadic(sp.slater(A), sp.slater_bra(B))
    assert np.trace(D) == pytest.approx(1)
    rho = A @ B
    np.testing.assert_allclose(sp.rho1(D), rho, atol=1e-12)
    Pswap = np.zeros((M * M, M * M))
    for i, j in itertools.product(range(M), repeat=2):
        Pswap[i * M + j, j * M + i] = 1
    np.testing.assert_allclose(sp.rho12(D), (np.eye(M * M) - Pswap) @ np.kron(rho, rho), atol=1e-12)


def test_two_mode_condensate_densities():
    N = 5
    sp = fock.TwoModeBosons(N)
    phi = np.array([0.6, 0.8j])
    ket = sp.condensate(phi)
    assert np.linalg.norm(ket) == pytest.approx(1)
    D = sp.dyadic(ket, sp.condensate_bra(phi.conj()))
    P = np.outer(phi, phi.conj())
    np.testing.assert_allclose(sp.rho1(D), N * P, atol=1e-12)
    np.testing.assert_allclose(sp.rho12(D), N * (N - 1) * np.kron(P, P), atol=1e-12)
