"""Exact finite-basis quantum mechanics used as the reference side of every check.

Operators are dense complex ``numpy`` arrays.  Single-mode operators live in
the truncated Fock space ``{|0>, ..., |n_max>}``; the many-body helpers build
the fixed-particle-number sector of two boson modes or of ``M`` fermion
levels.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .noise import ConfigurationError

DEFAULT_N_MAX = 30
_PAD = 8


@dataclass(frozen=True)
class FockTruncation:
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        if int(self.n_max) < 1:
            raise ConfigurationError("n_max must be >= 1")

    @property
    def dim(self):
        return self.n_max + 1


def _trunc(trunc) -> FockTruncation:
    if isinstance(trunc, FockTruncation):
        return trunc
    return FockTruncation(int(trunc))


def ladder_operators(trunc=DEFAULT_N_MAX):
    """Return ``(a, a_dag)`` with ``a|n> = sqrt(n)|n-1>``."""
    trunc = _trunc(trunc)
    a = np.diag(np.sqrt(np.arange(1, trunc.dim)), 1).astype(complex)
    return a, a.conj().T


def normal_ordered(p: int, q: int, trunc=DEFAULT_N_MAX):
    """``(a_dag)**p a**q`` restricted to the truncated space (exact block)."""
    a, ad = ladder_operators(trunc)
    return np.linalg.matrix_power(ad, p) @ np.linalg.matrix_power(a, q)


def _padded(poly, trunc):
    """Evaluate ``poly(a, a_dag)`` in an enlarged space and crop it.

    Cropping keeps the matrix elements of the untruncated operator for
    polynomials of degree up to ``_PAD``.
    """
    trunc = _trunc(trunc)
    a, ad = ladder_operators(trunc.n_max + _PAD)
    return poly(a, ad)[: trunc.dim, : trunc.dim]


def position_operator(eta: float, trunc=DEFAULT_N_MAX):
    return _padded(lambda a, ad: (a + ad) / math.sqrt(2 * eta), trunc)


def momentum_operator(eta: float, hbar: float = 1.0, trunc=DEFAULT_N_MAX):
    return _padded(lambda a, ad: 1j * hbar * math.sqrt(eta / 2) * (ad - a), trunc)


def two_mode_hamiltonian(n_particles, omega_rabi, kerr_k, hbar=1.0):
    """Two coupled condensates on the basis ``|n, N-n>``, n = 0..N."""
    N = int(n_particles)
    if N < 1:
        raise ConfigurationError("n_particles must be >= 1")
    n = np.arange(N + 1)
    H = np.diag(hbar * kerr_k * (n * (n - 1) + (N - n) * (N - n - 1))).astype(complex)
    hop = 0.5 * hbar * omega_rabi * np.sqrt((n[:-1] + 1) * (N - n[:-1]))
    H += np.diag(hop, -1) + np.diag(hop, 1)
    return H


def build_hamiltonian(model_id: str, **params) -> np.ndarray:
    """Hamiltonian matrix for one of the single-mode or two-mode models.

    ============== ==================================================
    ``kerr``        omega, kerr_k, hbar, n_max
    ``genkerr``     omega, k1, k2, hbar, n_max
    ``free``        eta, mass, hbar, n_max  (free particle p^2/2m)
    ``two_mode``    n_particles, omega_rabi, kerr_k, hbar
    ============== ==================================================
    """
    hbar = float(params.pop("hbar", 1.0))
    if model_id == "two_mode":
        return two_mode_hamiltonian(hbar=hbar, **params)
    trunc = _trunc(params.pop("n_max", DEFAULT_N_MAX))
    n = np.arange(trunc.dim, dtype=float)
    if model_id == "kerr":
        omega, k = float(params.pop("omega")), float(params.pop("kerr_k"))
        diag = hbar * omega * n + 0.5 * hbar * k * n * (n - 1)
    elif model_id == "genkerr":
        omega, k1, k2 = float(params.pop("omega")), float(params.pop("k1")), float(params.pop("k2"))
        diag = hbar * omega * n + 0.5 * hbar * k1 * n * (n - 1) + hbar * k2 * n * (n - 1) * (n - 2) / 6
    elif model_id in ("free", "free_particle", "free_expansion"):
        eta, mass = float(params.pop("eta")), float(params.pop("mass"))
        omega = hbar * eta / mass
        H = _padded(lambda a, ad: -(hbar * omega / 4) * (ad - a) @ (ad - a), trunc)
        _reject_extra(params)
        return H
    else:
        raise ConfigurationError(f"unknown model id {model_id!r}")
    _reject_extra(params)
    return np.diag(diag).astype(complex)


def _reject_extra(params):
    if params:
        raise ConfigurationError(f"unexpected Hamiltonian parameters: {sorted(params)}")


def _check_hermitian(H, tol=1e-10):
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ConfigurationError("H must be a square matrix")
    if np.abs(H - H.conj().T).max() > tol * max(1.0, np.abs(H).max()):
        raise ConfigurationError("H is not hermitian")
    return H


def propagate_exact(H, psi0, t, hbar: float = 1.0):
    """``exp(-i H t / hbar) psi0`` by dense eigendecomposition.

    ``t`` may be a scalar (returns a vector) or a 1-d array (returns one row
    per time).
    """
    H = _check_hermitian(H)
    w, V = np.linalg.eigh(H)
    c = V.conj().T @ np.asarray(psi0, dtype=complex)
    ts = np.asarray(t, dtype=float)
    phases = np.exp(-1j * np.multiply.outer(ts, w) / hbar)
    out = (phases * c) @ V.T
    return out


def dyadic_expectations(H, D, ops, times, hbar: float = 1.0):
    """``Tr(A U(t) D U(t)^dag)`` for each operator and time.

    ``D`` need not be hermitian.  Returns an array (len(ops), len(times)).
    """
    H = _check_hermitian(H)
    w, V = np.linalg.eigh(H)
    Dt = V.conj().T @ D @ V
    times = np.asarray(times, dtype=float)
    gaps = w[:, None] - w[None, :]
    out = np.empty((len(ops), len(times)), dtype=complex)
    At = [V.conj().T @ A @ V for A in ops]
    for k, t in enumerate(times):
        Dk = Dt * np.exp(-1j * gaps * t / hbar)
        for j, A in enumerate(At):
            out[j, k] = np.sum(A.T * Dk)
    return out


def bargmann_density(alpha: complex, beta_star: complex, trunc=DEFAULT_N_MAX):
    """Normalised dyadic ``|alpha><beta| / <beta|alpha>`` of Bargmann states."""
    trunc = _trunc(trunc)
    s = complex(beta_star) * complex(alpha)
    if not np.isfinite(s) or s.real > 700:
        raise OverflowError("exp(beta* alpha) is not representable")
    n = np.arange(trunc.dim)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    norm = np.exp(-0.5 * log_fact)
    ket = complex(alpha) ** n * norm
    bra = complex(beta_star) ** n * norm
    return np.outer(ket, bra) * np.exp(-s)


def ehrenfest_rhs(A, H, D, hbar: float = 1.0) -> complex:
    """Exact rate ``Tr([A, H] D) / (i hbar)``."""
    A, H, D = (np.asarray(x, dtype=complex) for x in (A, H, D))
    if not (A.shape == H.shape == D.shape):
        raise ConfigurationError(f"dimension mismatch: {A.shape}, {H.shape}, {D.shape}")
    return complex(np.sum((A @ H - H @ A).T * D) / (1j * hbar))


class ManyBodySpace:
    """Fixed particle-number sector with one-body operators ``E[k, l] = a+_k a_l``.

    Density conventions: ``rho1[j, i] = <a+_i a_j>`` and
    ``rho12[i*M + j, k*M + l] = <a+_k a+_l a_j a_i>``.
    """

    n_modes: int
    n_particles: int
    E: np.ndarray

    @property
    def dim(self):
        return self.E.shape[-1]

    def pair_operator(self, i, j, k, l):
        """``a+_k a+_l a_j a_i`` within the sector."""
        out = self.E[k, i] @ self.E[l, j]
        if i == l:
            out = out - self.E[k, j]
        return out

    def hamiltonian(self, kinetic, terms=(), signs=None):
        """``sum T_ij a+_i a_j + 1/2 sum <ij|v|kl> a+_i a+_j a_l a_k``.

        The interaction is ``v = sum_l s_l O_l (x) O_l`` so that
        ``<ij|v|kl> = sum_l s_l O_l[i, k] O_l[j, l]``.
        """
        T = np.asarray(kinetic, dtype=complex)
        H = np.einsum("ij,ijab->ab", T, self.E)
        signs = np.ones(len(terms)) if signs is None else signs
        for s, O in zip(signs, terms):
            O = np.asarray(O, dtype=complex)
            Ohat = np.einsum("ij,ijab->ab", O, self.E)
            O2hat = np.einsum("ij,ijab->ab", O @ O, self.E)
            H = H + 0.5 * s * (Ohat @ Ohat - O2hat)
        return H

    def rho1(self, D):
        return np.einsum("ijab,ba->ji", self.E, D)

    def rho12(self, D):
        M = self.n_modes
        out = np.empty((M * M, M * M), dtype=complex)
        for i, j, k, l in itertools.product(range(M), repeat=4):
            out[i * M + j, k * M + l] = np.sum(self.pair_operator(i, j, k, l).T * D)
        return out

    def rate(self, op, H, D, hbar=1.0):
        return np.sum((op @ H - H @ op).T * D) / (1j * hbar)

    def rho1_rate(self, H, D, hbar=1.0):
        M = self.n_modes
        out = np.empty((M, M), dtype=complex)
        for i, j in itertools.product(range(M), repeat=2):
            out[j, i] = self.rate(self.E[i, j], H, D, hbar)
        return out

    def rho12_rate(self, H, D, hbar=1.0):
        M = self.n_modes
        out = np.empty((M * M, M * M), dtype=complex)
        for i, j, k, l in itertools.product(range(M), repeat=4):
            out[i * M + j, k * M + l] = self.rate(self.pair_operator(i, j, k, l), H, D, hbar)
        return out

    def dyadic(self, ket, bra):
        """Normalised ``|ket><bra| / <bra|ket>``; ``bra`` holds the row components."""
        ket = np.asarray(ket, dtype=complex)
        bra = np.asarray(bra, dtype=complex)
        return np.outer(ket, bra) / (bra @ ket)


class TwoModeBosons(ManyBodySpace):
    """N bosons in two modes, basis ``|n, N-n>`` for n = 0..N."""

    def __init__(self, n_particles: int):
        N = int(n_particles)
        if N < 1:
            raise ConfigurationError("n_particles must be >= 1")
        self.n_modes = 2
        self.n_particles = N
        n = np.arange(N + 1)
        E = np.zeros((2, 2, N + 1, N + 1), dtype=complex)
        E[0, 0] = np.diag(n)
        E[1, 1] = np.diag(N - n)
        up = np.sqrt((n[:-1] + 1) * (N - n[:-1]))
        E[0, 1] = np.diag(up, -1)
        E[1, 0] = E[0, 1].T
        self.E = E

    def condensate(self, phi):
        """``(phi_1 c1+ + phi_2 c2+)^N |0> / sqrt(N!)`` on the basis."""
        N = self.n_particles
        phi = np.asarray(phi, dtype=complex)
        n = np.arange(N + 1)
        binom = np.array([math.comb(N, k) for k in n], dtype=float)
        return np.sqrt(binom) * phi[0] ** n * phi[1] ** (N - n)

    def condensate_bra(self, phi_b):
        """Row components of ``<0| (sum_i b_i c_i)^N / sqrt(N!)``."""
        return self.condensate(phi_b)


class Fermions(ManyBodySpace):
    """N fermions on M levels (Jordan-Wigner construction, N-particle sector)."""

    MAX_LEVELS = 12

    def __init__(self, n_levels: int, n_particles: int):
        M, N = int(n_levels), int(n_particles)
        if M > self.MAX_LEVELS:
            raise ConfigurationError(f"fermion oracle limited to {self.MAX_LEVELS} levels")
        if not 1 <= N <= M:
            raise ConfigurationError("need 1 <= n_particles <= n_levels")
        self.n_modes = M
        self.n_particles = N
        Z = np.diag([1.0, -1.0])
        low = np.array([[0.0, 1.0], [0.0, 0.0]])
        c = []
        for j in range(M):
            op = np.array([[1.0]])
            for m in [Z] * j + [low] + [np.eye(2)] * (M - j - 1):
                op = np.kron(op, m)
            c.append(op)
        self._c = c
        occ = np.array([bin(s).count("1") for s in range(2**M)])
        # basis index bit pattern: level j occupied <-> bit (M-1-j) set
        self._sector = np.where(occ == N)[0]
        sec = np.ix_(self._sector, self._sector)
        self.E = np.array([[(c[k].T @ c[l])[sec] for l in range(M)] for k in range(M)], dtype=complex)

    def slater(self, orbitals):
        """``c+_{phi_N} ... c+_{phi_1} |0>`` for orbital columns ``phi_k``."""
        orbitals = np.asarray(orbitals, dtype=complex)
        v = np.zeros(2**self.n_modes, dtype=complex)
        v[0] = 1.0
        for k in range(orbitals.shape[1]):
            v = sum(orbitals[i, k] * (self._c[i].T @ v) for i in range(self.n_modes))
        return v[self._sector]

    def slater_bra(self, B):
        """Row components of the determinant bra built from the rows of ``B``."""
        return np.conj(self.slater(np.conj(np.asarray(B)).T))
