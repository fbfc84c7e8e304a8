"""Stochastic single-particle dynamics for interacting bosons and fermions.

Bosons are described by a condensate pair ``|phi_a>``, ``<phi_b|`` and the
projector ``P = |phi_a><phi_b| / <phi_b|phi_a>``; fermions by a biorthogonal
pair ``A`` (columns ``|alpha_i>``) and ``B`` (rows ``<beta_i|``) with
``rho1 = A (B A)^-1 B``.  Bra vectors are always stored by their row
components, never conjugated.

Dividing by the overlap (``<phi_b|phi_a>`` or ``B A``) keeps every formula
invariant under rescaling of the bra, so the optional renormalisation step is
a pure gauge choice: it changes no observable.

The interaction is taken in separable form ``v12 = sum_l s_l O_l (x) O_l``
with hermitian ``O_l`` and signs ``s_l = +-1``.  Increments attached to
``O_l`` have ``E[dxi_l**2] = s_l dt/(i hbar)`` and
``E[deta_l**2] = -s_l dt/(i hbar)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .ensemble import SDEModel
from .noise import ConfigurationError, RngStream, TrajectoryState, ito_step, sample_second_order

TRACE_TOL = 1e-3
AMPLITUDE_CAP = 1e6


def _matrix(x, name):
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ConfigurationError(f"{name} must be a square matrix")
    if not np.isfinite(x).all():
        raise ConfigurationError(f"{name} must be finite")
    return x


@dataclass(frozen=True)
class InteractionSpec:
    """One-body kinetic term plus a separable two-body interaction."""

    kinetic: np.ndarray
    terms: tuple = ()
    signs: tuple | None = None
    antisymmetrize: bool = False

    def __post_init__(self):
        T = _matrix(self.kinetic, "kinetic")
        terms = tuple(_matrix(O, "interaction term") for O in self.terms)
        for O in terms:
            if O.shape != T.shape:
                raise ConfigurationError("interaction terms must match the kinetic matrix shape")
            if np.abs(O - O.conj().T).max() > 1e-12 * max(1.0, np.abs(O).max()):
                raise ConfigurationError("interaction terms must be hermitian")
        signs = (1.0,) * len(terms) if self.signs is None else tuple(float(s) for s in self.signs)
        if len(signs) != len(terms) or any(s not in (1.0, -1.0) for s in signs):
            raise ConfigurationError("signs must be +-1, one per interaction term")
        object.__setattr__(self, "kinetic", T)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "signs", signs)

    @property
    def n_modes(self):
        return self.kinetic.shape[0]

    def pair_matrix(self):
        """``v`` on the product space, ``v[i*M+j, k*M+l] = <ij|v|kl>``."""
        M = self.n_modes
        v = np.zeros((M * M, M * M), dtype=complex)
        for s, O in zip(self.signs, self.terms):
            v += s * np.kron(O, O)
        return v

    @classmethod
    def from_tensor(cls, kinetic, v, antisymmetrize=False, tol=1e-12):
        """Decompose a generic ``v[i, j, k, l] = <ij|v|kl>`` into separable terms.

        ``v`` must be hermitian and symmetric under particle exchange.  It is
        expanded in an orthonormal basis of hermitian matrices; the resulting
        real symmetric coefficient matrix is diagonalised and negative
        eigenvalues become ``s = -1`` terms.
        """
        T = _matrix(kinetic, "kinetic")
        M = T.shape[0]
        v = np.asarray(v, dtype=complex)
        if v.shape != (M, M, M, M):
            raise ConfigurationError(f"v must have shape {(M, M, M, M)}")
        # C[(ik), (jl)] = v_ijkl
        C = v.transpose(0, 2, 1, 3).reshape(M * M, M * M)
        G = _hermitian_basis(M).reshape(M * M, M * M)  # rows: vec(G_a)
        R = G.conj() @ C @ G.conj().T
        if np.abs(R.imag).max() > 1e-10 * max(1.0, np.abs(R).max()) or np.abs(R - R.T).max() > 1e-10 * max(1.0, np.abs(R).max()):
            raise ConfigurationError("v is not a hermitian, exchange-symmetric interaction")
        w, U = np.linalg.eigh(R.real)
        keep = np.abs(w) > tol * max(1.0, np.abs(w).max())
        terms, signs = [], []
        for lam, u in zip(w[keep], U[:, keep].T):
            O = math.sqrt(abs(lam)) * np.tensordot(u, G, axes=1).reshape(M, M)
            terms.append(0.5 * (O + O.conj().T))
            signs.append(1.0 if lam > 0 else -1.0)
        return cls(T, tuple(terms), tuple(signs), antisymmetrize)


def _hermitian_basis(M):
    """Orthonormal (Frobenius) basis of M x M hermitian matrices, shape (M*M, M, M)."""
    out = []
    for i in range(M):
        E = np.zeros((M, M), dtype=complex)
        E[i, i] = 1
        out.append(E)
    for i in range(M):
        for j in range(i + 1, M):
            E = np.zeros((M, M), dtype=complex)
            E[i, j] = E[j, i] = 1 / math.sqrt(2)
            out.append(E)
            E = np.zeros((M, M), dtype=complex)
            E[i, j], E[j, i] = -1j / math.sqrt(2), 1j / math.sqrt(2)
            out.append(E)
    return np.array(out)


@dataclass(frozen=True)
class CondensatePair:
    """``N`` bosons in ``|phi_a>``; ``phi_b`` are the row components of ``<phi_b|``."""

    n_particles: int
    phi_a: np.ndarray
    phi_b: np.ndarray

    def __post_init__(self):
        if int(self.n_particles) < 1:
            raise ConfigurationError("n_particles must be >= 1")
        a = np.array(self.phi_a, dtype=complex).reshape(-1)
        b = np.array(self.phi_b, dtype=complex).reshape(-1)
        if a.shape != b.shape:
            raise ConfigurationError("phi_a and phi_b must have the same length")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "n_particles", int(self.n_particles))
        object.__setattr__(self, "phi_a", a)
        object.__setattr__(self, "phi_b", b)

    @classmethod
    def from_ket(cls, n_particles, phi):
        """Physical condensate: ``<phi_b| = <phi|`` normalised to unit overlap."""
        phi = np.asarray(phi, dtype=complex)
        return cls(n_particles, phi, phi.conj() / np.vdot(phi, phi))

    @property
    def trace(self):
        return complex(self.phi_b @ self.phi_a)

    @property
    def projector(self):
        return np.outer(self.phi_a, self.phi_b) / self.trace


@dataclass(frozen=True)
class TwoModeParams:
    n_particles: int = 17
    omega_rabi: float = 1.0
    kerr_k: float = 0.1
    hbar: float = 1.0

    def __post_init__(self):
        if int(self.n_particles) < 1:
            raise ConfigurationError("n_particles must be >= 1")
        if not self.hbar > 0:
            raise ConfigurationError("hbar must be > 0")

    def interaction(self) -> InteractionSpec:
        """``T = (hbar Omega / 2) sigma_x`` and ``O_l = sqrt(2 hbar K) c_l+ c_l``.

        With these terms ``1/2 sum <ij|v|kl> c+_i c+_j c_l c_k`` equals
        ``hbar K sum_l c_l+^2 c_l^2``.
        """
        T = 0.5 * self.hbar * self.omega_rabi * np.array([[0, 1], [1, 0]], dtype=complex)
        g = np.sqrt(complex(2 * self.hbar * self.kerr_k))
        signs = (1.0, 1.0)
        if self.kerr_k < 0:
            g, signs = abs(g), (-1.0, -1.0)
        terms = (g.real * np.diag([1.0, 0.0]) + 0j, g.real * np.diag([0.0, 1.0]) + 0j)
        return InteractionSpec(T, terms, signs)


@dataclass(frozen=True)
class FermionPair:
    """``N`` fermions on ``M`` levels; ``A`` is M x N, ``B`` is N x M."""

    n_particles: int
    n_levels: int
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        N, M = int(self.n_particles), int(self.n_levels)
        if not 1 <= N <= M:
            raise ConfigurationError("need 1 <= n_particles <= n_levels")
        A = np.array(self.A, dtype=complex)
        B = np.array(self.B, dtype=complex)
        if A.shape != (M, N) or B.shape != (N, M):
            raise ConfigurationError(f"A must be {(M, N)} and B {(N, M)}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @classmethod
    def from_orbitals(cls, A):
        """Physical Slater determinant: ``B = (A^dag A)^-1 A^dag``."""
        A = np.asarray(A, dtype=complex)
        Ad = A.conj().T
        return cls(A.shape[1], A.shape[0], A, np.linalg.solve(Ad @ A, Ad))

    @property
    def overlap(self):
        return self.B @ self.A

    @property
    def rho1(self):
        return self.A @ np.linalg.solve(self.overlap, self.B)


def _check_modes(M, inter: InteractionSpec):
    if inter.n_modes != M:
        raise ConfigurationError(f"interaction acts on {inter.n_modes} modes, state has {M}")


def boson_mean_field(state: CondensatePair, inter: InteractionSpec) -> np.ndarray:
    """``h = T + (N-1) sum_l s_l O_l Tr(O_l P)``."""
    _check_modes(len(state.phi_a), inter)
    P = state.projector
    h = inter.kinetic.copy()
    for s, O in zip(inter.signs, inter.terms):
        h = h + (state.n_particles - 1) * s * O * np.sum(O.T * P)
    return h


def fermion_mean_field(state: FermionPair, inter: InteractionSpec) -> np.ndarray:
    """``h = T + sum_l s_l [O_l Tr(O_l rho) - O_l rho O_l]`` (exchange only if antisymmetrised)."""
    _check_modes(state.n_levels, inter)
    rho = state.rho1
    h = inter.kinetic.copy()
    for s, O in zip(inter.signs, inter.terms):
        h = h + s * O * np.sum(O.T * rho)
        if inter.antisymmetrize:
            h = h - s * O @ rho @ O
    return h


def _noise_terms(inter, hbar, dt, rng):
    """Independent ket- and bra-side increments per interaction term."""
    xi, eta = [], []
    for s in inter.signs:
        xi.append(sample_second_order(s * dt / (1j * hbar), rng))
    for s in inter.signs:
        eta.append(sample_second_order(-s * dt / (1j * hbar), rng))
    return xi, eta


def boson_sse_step(state: CondensatePair, inter: InteractionSpec, dt, rng: RngStream, hbar=1.0, renormalize=False):
    """``d|phi_a> = (dt/(i hbar) h + sum dxi (1-P) O)|phi_a>``,
    ``d<phi_b| = <phi_b|(-dt/(i hbar) h + sum deta O (1-P))``."""
    M = len(state.phi_a)
    h = boson_mean_field(state, inter)
    P = state.projector
    Q = np.eye(M) - P
    a, b = state.phi_a, state.phi_b
    xi, eta = _noise_terms(inter, hbar, dt, rng)
    drift = np.concatenate([h @ a, -(b @ h)]) / (1j * hbar)
    terms = []
    for O, inc in zip(inter.terms, xi):
        terms.append((np.concatenate([Q @ O @ a, np.zeros(M)]), inc))
    for O, inc in zip(inter.terms, eta):
        terms.append((np.concatenate([np.zeros(M), b @ O @ Q]), inc))
    z = ito_step(TrajectoryState(0.0, np.concatenate([a, b])), drift, terms, dt).variables
    a, b = z[:M], z[M:]
    if renormalize:
        b = b / (b @ a)
    return CondensatePair(state.n_particles, a, b)


def two_mode_step(state: CondensatePair, params: TwoModeParams, dt, rng: RngStream, renormalize=False):
    """Two-condensate step; ``phi_a = (alpha_a, beta_a)``, ``phi_b = (alpha_b*, beta_b*)``."""
    if len(state.phi_a) != 2:
        raise ConfigurationError("two_mode_step needs M = 2 modes")
    if state.n_particles != params.n_particles:
        raise ConfigurationError("particle number of state and params differ")
    return boson_sse_step(state, params.interaction(), dt, rng, params.hbar, renormalize)


def fermion_sse_step(state: FermionPair, inter: InteractionSpec, dt, rng: RngStream, hbar=1.0, renormalize=False):
    """``d|alpha_i> = (dt/(i hbar) h + sum dxi (1-rho) O)|alpha_i>``,
    ``d<beta_i| = <beta_i|(-dt/(i hbar) h + sum deta O (1-rho))``."""
    M, N = state.n_levels, state.n_particles
    h = fermion_mean_field(state, inter)
    Q = np.eye(M) - state.rho1
    A, B = state.A, state.B
    xi, eta = _noise_terms(inter, hbar, dt, rng)
    zeros_a, zeros_b = np.zeros(M * N), np.zeros(N * M)
    drift = np.concatenate([(h @ A).ravel(), -(B @ h).ravel()]) / (1j * hbar)
    terms = []
    for O, inc in zip(inter.terms, xi):
        terms.append((np.concatenate([(Q @ O @ A).ravel(), zeros_b]), inc))
    for O, inc in zip(inter.terms, eta):
        terms.append((np.concatenate([zeros_a, (B @ O @ Q).ravel()]), inc))
    z = ito_step(TrajectoryState(0.0, np.concatenate([A.ravel(), B.ravel()])), drift, terms, dt).variables
    A, B = z[: M * N].reshape(M, N), z[M * N :].reshape(N, M)
    if renormalize:
        B = np.linalg.solve(B @ A, B)
    return FermionPair(N, M, A, B)


def swap_operator(M):
    P = np.zeros((M * M, M * M))
    for i in range(M):
        for j in range(M):
            P[i * M + j, j * M + i] = 1
    return P


def bbgky_pair_rhs(state, inter: InteractionSpec, kind: str, hbar=1.0):
    """Exact time derivatives of the one- and two-body densities of ``D``.

    Returns ``(drho1_dt, drho12_dt)``; the second is a 4-index tensor with
    ``drho12_dt[i, j, k, l] = d<ij|rho12|kl>/dt``.  For the dyadic states
    used here the hierarchy closes:

    ``i hbar drho1/dt = [h, rho1]``,
    ``i hbar drho12/dt = [h(1) + h(2), rho12] + Q v R - R v Q`` with ``R = rho12`` and
    ``Q = (1 - rho)(1 - rho)``.  Bosons use ``rho -> P``,
    ``rho1 = N P``, ``rho12 = N(N-1) P P``.  Fermions use
    ``rho12 = (1 - P12) rho rho`` with ``P12`` the exchange operator, and in
    the two projected terms ``v rho12 -> (1 - P12) v rho rho``.
    """
    if kind == "boson":
        M = len(state.phi_a)
        _check_modes(M, inter)
        N = state.n_particles
        P = state.projector
        h = boson_mean_field(state, inter)
        rho1 = N * P
        rho12 = N * (N - 1) * np.kron(P, P)
        R = rho12
        v = inter.pair_matrix()
    elif kind == "fermion":
        M = state.n_levels
        _check_modes(M, inter)
        P = state.rho1
        h = fermion_mean_field(state, inter)
        rho1 = P
        X = np.eye(M * M) - swap_operator(M) if inter.antisymmetrize else np.eye(M * M)
        R = np.kron(P, P)
        rho12 = (np.eye(M * M) - swap_operator(M)) @ R
        v = X @ inter.pair_matrix()
    else:
        raise ConfigurationError(f"kind must be 'boson' or 'fermion', got {kind!r}")
    one = np.eye(M)
    h2 = np.kron(h, one) + np.kron(one, h)
    Q = np.kron(one - P, one - P)
    d1 = (h @ rho1 - rho1 @ h) / (1j * hbar)
    d12 = (h2 @ rho12 - rho12 @ h2 + Q @ v @ R - R @ v @ Q) / (1j * hbar)
    return d1, d12.reshape(M, M, M, M)


def pair_density(state, kind: str):
    """``rho12`` as a 4-index tensor ``[i, j, k, l] = <a+_k a+_l a_j a_i>``."""
    if kind == "boson":
        M, N, P = len(state.phi_a), state.n_particles, state.projector
        r = N * (N - 1) * np.kron(P, P)
    elif kind == "fermion":
        M, P = state.n_levels, state.rho1
        r = (np.eye(M * M) - swap_operator(M)) @ np.kron(P, P)
    else:
        raise ConfigurationError(f"kind must be 'boson' or 'fermion', got {kind!r}")
    return r.reshape(M, M, M, M)


# -- batched models -----------------------------------------------------------


def _parse_rho(name, M):
    """``rho_jk`` -> ``(j, k)`` meaning the element ``rho1[j, k]``."""
    if name.startswith("rho_") and len(name) == 6 and name[4:].isdigit():
        j, k = int(name[4]), int(name[5])
        if j < M and k < M:
            return j, k
    return None


class BosonModel(SDEModel):
    """Condensate pair SDE; state vector ``[phi_a, phi_b]`` of length 2M."""

    name = "boson_generic"
    designed_order = 2

    def __init__(self, inter: InteractionSpec, initial: CondensatePair, hbar=1.0,
                 renormalize=False, trace_tol=TRACE_TOL, amplitude_cap=AMPLITUDE_CAP):
        _check_modes(len(initial.phi_a), inter)
        self.inter = inter
        self.initial = initial
        self.hbar = float(hbar)
        self.renormalize = bool(renormalize)
        self.trace_tol = trace_tol
        self.amplitude_cap = amplitude_cap
        self.M = inter.n_modes
        self.n_particles = initial.n_particles
        L = len(inter.terms)
        self.noise_orders = (2,) * (2 * L)
        self._O = np.array(inter.terms).reshape(L, self.M, self.M)
        self._OT = self._O.transpose(0, 2, 1).reshape(L, -1)
        self._s = np.array(inter.signs)

    def initial_state(self):
        return np.concatenate([self.initial.phi_a, self.initial.phi_b])

    def split(self, z):
        return z[:, : self.M], z[:, self.M :]

    def projector(self, z):
        a, b = self.split(z)
        return a[:, :, None] * b[:, None, :] / np.sum(a * b, axis=1)[:, None, None]

    def mean_field(self, P):
        nb = len(P)
        tr = P.reshape(nb, -1) @ self._OT.T
        h = self.inter.kinetic.reshape(1, -1) + (self.n_particles - 1) * (tr * self._s) @ self._O.reshape(len(self._s), -1)
        return h.reshape(nb, self.M, self.M)

    def sde_terms(self, z):
        a, b = self.split(z)
        ov = np.sum(a * b, axis=1)
        P = a[:, :, None] * b[:, None, :] / ov[:, None, None]
        h = self.mean_field(P)
        M, L = self.M, len(self._s)
        c = 1 / (1j * self.hbar)
        drift = np.concatenate([c * (h @ a[:, :, None])[:, :, 0], -c * (b[:, None, :] @ h)[:, 0, :]], axis=1)
        coeffs = np.zeros((len(z), 2 * L, 2 * M), dtype=complex)
        for l, O in enumerate(self._O):
            Oa = a @ O.T
            bO = b @ O
            coeffs[:, l, :M] = Oa - a * (np.sum(b * Oa, axis=1) / ov)[:, None]
            coeffs[:, L + l, M:] = bO - b * (np.sum(bO * a, axis=1) / ov)[:, None]
        rates = np.tile(np.concatenate([self._s * c, -self._s * c]), (len(z), 1))
        return drift, coeffs, rates

    def gauge(self, z):
        if not self.renormalize:
            return z
        a, b = self.split(z)
        tr = np.sum(a * b, axis=1)
        return np.concatenate([a, b / tr[:, None]], axis=1)

    def flag(self, z):
        a, b = self.split(z)
        with np.errstate(invalid="ignore", over="ignore"):
            bad = (np.abs(a * b) > self.amplitude_cap).any(axis=1)
            if not self.renormalize and self.trace_tol is not None:
                bad |= np.abs(np.sum(a * b, axis=1) - 1) > self.trace_tol
        return bad

    def rho1(self, z):
        return self.n_particles * self.projector(z)

    def observable(self, name, z):
        jk = _parse_rho(name, self.M)
        if jk is not None:
            return self.rho1(z)[:, jk[0], jk[1]]
        if name.startswith("p") and name[1:].isdigit() and 1 <= int(name[1:]) <= self.M:
            i = int(name[1:]) - 1
            return self.rho1(z)[:, i, i]
        return super().observable(name, z)

    @property
    def observable_names(self):
        names = [f"p{i + 1}" for i in range(self.M)]
        return tuple(names + [f"rho_{j}{k}" for j in range(self.M) for k in range(self.M)])

    def oracle(self):
        """Exact-diagonalisation space, Hamiltonian and initial dyadic (M = 2 only)."""
        if self.M != 2:
            return None
        space = fock.TwoModeBosons(self.n_particles)
        H = space.hamiltonian(self.inter.kinetic, self.inter.terms, self.inter.signs)
        D = space.dyadic(space.condensate(self.initial.phi_a), space.condensate_bra(self.initial.phi_b))
        return space, H, D

    def exact(self, name, times):
        orc = self.oracle()
        if orc is None:
            return None
        space, H, D = orc
        jk = _parse_rho(name, self.M)
        if jk is None and name.startswith("p") and name[1:].isdigit():
            i = int(name[1:]) - 1
            jk = (i, i)
        if jk is None:
            return None
        # rho1[j, k] = <a+_k a_j>
        return fock.dyadic_expectations(H, D, [space.E[jk[1], jk[0]]], times, self.hbar)[0]


class TwoMode(BosonModel):
    """Two coupled condensates, all bosons initially in mode 2 by default."""

    name = "two_mode"

    def __init__(self, params: TwoModeParams | None = None, phi0=(0.0, 1.0), **kw):
        self.params = params or TwoModeParams()
        initial = CondensatePair.from_ket(self.params.n_particles, phi0)
        super().__init__(self.params.interaction(), initial, hbar=self.params.hbar, **kw)

    def oracle(self):
        space = fock.TwoModeBosons(self.n_particles)
        pr = self.params
        H = fock.two_mode_hamiltonian(pr.n_particles, pr.omega_rabi, pr.kerr_k, pr.hbar)
        D = space.dyadic(space.condensate(self.initial.phi_a), space.condensate_bra(self.initial.phi_b))
        return space, H, D


class FermionModel(SDEModel):
    """Biorthogonal pair SDE; state vector ``[A.ravel(), B.ravel()]``."""

    name = "fermion"
    designed_order = 2

    def __init__(self, inter: InteractionSpec, initial: FermionPair, hbar=1.0,
                 renormalize=False, trace_tol=TRACE_TOL):
        _check_modes(initial.n_levels, inter)
        self.inter = inter
        self.initial = initial
        self.hbar = float(hbar)
        self.renormalize = bool(renormalize)
        self.trace_tol = trace_tol
        self.M, self.N = initial.n_levels, initial.n_particles
        L = len(inter.terms)
        self.noise_orders = (2,) * (2 * L)
        self._O = np.array(inter.terms).reshape(L, self.M, self.M)
        self._OT = self._O.transpose(0, 2, 1).reshape(L, -1)
        self._s = np.array(inter.signs)

    def initial_state(self):
        return np.concatenate([self.initial.A.ravel(), self.initial.B.ravel()])

    def split(self, z):
        M, N = self.M, self.N
        return z[:, : M * N].reshape(-1, M, N), z[:, M * N :].reshape(-1, N, M)

    def rho1(self, z):
        A, B = self.split(z)
        return A @ (np.linalg.inv(B @ A) @ B)

    def mean_field(self, rho):
        nb = len(rho)
        # Tr(O_l rho) for every term
        tr = rho.reshape(nb, -1) @ self._OT.T
        h = self.inter.kinetic.reshape(1, -1) + (tr * self._s) @ self._O.reshape(len(self._s), -1)
        h = h.reshape(nb, self.M, self.M)
        if self.inter.antisymmetrize:
            for s, O in zip(self._s, self._O):
                h = h - s * (O @ rho @ O)
        return h

    def sde_terms(self, z):
        A, B = self.split(z)
        rho = A @ (np.linalg.inv(B @ A) @ B)
        h = self.mean_field(rho)
        c = 1 / (1j * self.hbar)
        nb, L = len(z), len(self._s)
        na = self.M * self.N
        drift = np.concatenate([(c * (h @ A)).reshape(nb, -1), (-c * (B @ h)).reshape(nb, -1)], axis=1)
        Q = np.eye(self.M)[None] - rho
        coeffs = np.zeros((nb, 2 * L, 2 * na), dtype=complex)
        for l, O in enumerate(self._O):
            coeffs[:, l, :na] = (Q @ (O @ A)).reshape(nb, -1)
            coeffs[:, L + l, na:] = ((B @ O) @ Q).reshape(nb, -1)
        rates = np.tile(np.concatenate([self._s * c, -self._s * c]), (nb, 1))
        return drift, coeffs, rates

    def gauge(self, z):
        if not self.renormalize:
            return z
        A, B = self.split(z)
        B = np.linalg.solve(B @ A, B)
        return np.concatenate([A.reshape(len(z), -1), B.reshape(len(z), -1)], axis=1)

    def flag(self, z):
        if self.renormalize or self.trace_tol is None:
            return np.zeros(len(z), dtype=bool)
        A, B = self.split(z)
        dev = np.abs(B @ A - np.eye(self.N)[None]).max(axis=(1, 2))
        return dev > self.trace_tol

    def observable(self, name, z):
        jk = _parse_rho(name, self.M)
        if jk is not None:
            return self.rho1(z)[:, jk[0], jk[1]]
        if name == "n_particles":
            return np.trace(self.rho1(z), axis1=1, axis2=2)
        if name == "overlap_dev":
            A, B = self.split(z)
            return np.abs(B @ A - np.eye(self.N)[None]).max(axis=(1, 2)) + 0j
        return super().observable(name, z)

    @property
    def observable_names(self):
        return tuple(f"rho_{j}{k}" for j in range(self.M) for k in range(self.M))

    def oracle(self):
        space = fock.Fermions(self.M, self.N)
        H = space.hamiltonian(self.inter.kinetic, self.inter.terms, self.inter.signs)
        D = space.dyadic(space.slater(self.initial.A), space.slater_bra(self.initial.B))
        return space, H, D

    def exact(self, name, times):
        jk = _parse_rho(name, self.M)
        if jk is None:
            return None
        space, H, D = self.oracle()
        return fock.dyadic_expectations(H, D, [space.E[jk[1], jk[0]]], times, self.hbar)[0]


def random_hermitian(rng, M, scale=1.0):
    X = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    return scale * (X + X.conj().T) / 2


def fermion_toy(n_levels=4, n_particles=2, system_seed=7, t_scale=1.0, o_scale=0.12, hbar=1.0, **kw) -> FermionModel:
    """Random seed-fixed fermion system: hermitian ``T``, one hermitian ``O``.

    The initial state is the Slater determinant of ``n_particles`` orthonormal
    random orbitals.
    """
    rng = np.random.default_rng(system_seed)
    T = random_hermitian(rng, n_levels, t_scale)
    O = random_hermitian(rng, n_levels, o_scale)
    inter = InteractionSpec(T, (O,), antisymmetrize=True)
    X = rng.standard_normal((n_levels, n_particles)) + 1j * rng.standard_normal((n_levels, n_particles))
    A, _ = np.linalg.qr(X)
    model = FermionModel(inter, FermionPair.from_orbitals(A), hbar=hbar, **kw)
    model.name = "fermion_toy"
    return model


def boson_generic(n_modes=2, n_particles=4, system_seed=11, t_scale=1.0, o_scale=0.3, hbar=1.0, **kw) -> BosonModel:
    """Random seed-fixed boson system with one interaction term."""
    rng = np.random.default_rng(system_seed)
    T = random_hermitian(rng, n_modes, t_scale)
    O = random_hermitian(rng, n_modes, o_scale)
    phi = rng.standard_normal(n_modes) + 1j * rng.standard_normal(n_modes)
    phi = phi / np.linalg.norm(phi)
    return BosonModel(InteractionSpec(T, (O,)), CondensatePair.from_ket(n_particles, phi), hbar=hbar, **kw)
