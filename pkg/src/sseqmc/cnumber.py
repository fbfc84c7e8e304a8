"""Single-mode stochastic models on the Bargmann pair ``(alpha, beta*)``.

The pair parameterises the normalised dyadic ``|alpha><beta| / <beta|alpha>``,
so ``Tr(D a_dag**p a**q) = beta***p alpha**q`` exactly.  Each model is an
:class:`~sseqmc.ensemble.SDEModel`; the per-trajectory step functions below
consume the same random numbers, in the same order, as the batched ensemble
integrator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fock
from .ensemble import SDEModel
from .noise import (
    ConfigurationError,
    RngStream,
    TrajectoryState,
    ito_step,
    sample_second_order,
    sample_third_order,
)

# observable-id -> normal-ordered exponents (p, q) of a_dag**p a**q
MONOMIALS = {
    "a": (0, 1),
    "adag": (1, 0),
    "n": (1, 1),
    "a2": (0, 2),
    "adag2": (2, 0),
    "a3": (0, 3),
    "adag3": (3, 0),
    "adag_a2": (1, 2),
    "adag2_a": (2, 1),
}


def _positive(name, value):
    value = float(value)
    if not value > 0:
        raise ConfigurationError(f"{name} must be > 0, got {value}")
    return value


@dataclass(frozen=True)
class BargmannPair:
    alpha: complex
    beta_star: complex

    def __post_init__(self):
        for name in ("alpha", "beta_star"):
            v = complex(getattr(self, name))
            if not np.isfinite(v):
                raise ConfigurationError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    def as_array(self):
        return np.array([self.alpha, self.beta_star], dtype=complex)


@dataclass(frozen=True)
class FreeExpansionParams:
    eta: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("eta", "mass", "hbar"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))


@dataclass(frozen=True)
class KerrParams:
    omega: float = 1.0
    kerr_k: float = 0.1
    hbar: float = 1.0

    def __post_init__(self):
        _positive("hbar", self.hbar)


@dataclass(frozen=True)
class GenKerrParams:
    omega: float = 1.0
    k1: float = 0.1
    k2: float = 0.05
    hbar: float = 1.0

    def __post_init__(self):
        _positive("hbar", self.hbar)


@dataclass(frozen=True)
class PhaseSpacePoint:
    x: complex
    p: complex


def xp_observables(state: BargmannPair, params: FreeExpansionParams) -> PhaseSpacePoint:
    """``X = (alpha + beta*)/sqrt(2 eta)``, ``P = i hbar sqrt(eta/2) (beta* - alpha)``."""
    x = (state.alpha + state.beta_star) / math.sqrt(2 * params.eta)
    p = 1j * params.hbar * math.sqrt(params.eta / 2) * (state.beta_star - state.alpha)
    return PhaseSpacePoint(x, p)


class SingleModeModel(SDEModel):
    """Shared plumbing: two variables ``(alpha, beta*)`` and a Fock-space oracle."""

    n_max = fock.DEFAULT_N_MAX

    def __init__(self, alpha0=0.0, beta0_star=0.0, n_max=None):
        self.initial = BargmannPair(alpha0, beta0_star)
        if n_max is not None:
            self.n_max = int(n_max)

    def initial_state(self):
        return self.initial.as_array()

    @property
    def hbar(self):
        return self.params.hbar

    def observable(self, name, z):
        z = np.asarray(z)
        if name in MONOMIALS:
            p, q = MONOMIALS[name]
            return z[:, 1] ** p * z[:, 0] ** q
        return super().observable(name, z)

    @property
    def observable_names(self):
        return tuple(MONOMIALS)

    def hamiltonian(self, n_max=None) -> np.ndarray:
        raise NotImplementedError

    def operator(self, name, n_max=None) -> np.ndarray:
        n_max = self.n_max if n_max is None else n_max
        if name in MONOMIALS:
            return fock.normal_ordered(*MONOMIALS[name], n_max)
        raise ConfigurationError(f"model {self.name!r} has no operator for {name!r}")

    def exact(self, name, times):
        """Exact curve from the truncated Fock-space propagation of ``D``."""
        H = self.hamiltonian()
        D = fock.bargmann_density(self.initial.alpha, self.initial.beta_star, self.n_max)
        return fock.dyadic_expectations(H, D, [self.operator(name)], times, self.hbar)[0]


class FreeExpansion(SingleModeModel):
    """Spreading of a free Gaussian packet released from an oscillator ground state.

    ``d alpha = i hbar {(eta/2m)(beta* - alpha) dt + sqrt(eta/2m) dW1}`` and the
    same for ``beta*`` with ``dW2``; ``dW1**2 = dt/(i hbar)``,
    ``dW2**2 = -dt/(i hbar)``.
    """

    name = "free_expansion"
    noise_orders = (2, 2)
    designed_order = 2
    n_max = 40

    def __init__(self, params: FreeExpansionParams | None = None, alpha0=0.0, beta0_star=0.0, n_max=None):
        super().__init__(alpha0, beta0_star, n_max)
        self.params = params or FreeExpansionParams()

    def sde_terms(self, z):
        pr = self.params
        c = 1j * pr.hbar * pr.eta / (2 * pr.mass)
        drift = np.repeat((c * (z[:, 1] - z[:, 0]))[:, None], 2, axis=1)
        B = len(z)
        amp = 1j * pr.hbar * math.sqrt(pr.eta / (2 * pr.mass))
        coeffs = np.zeros((B, 2, 2), dtype=complex)
        coeffs[:, 0, 0] = amp
        coeffs[:, 1, 1] = amp
        rates = np.tile(np.array([1 / (1j * pr.hbar), -1 / (1j * pr.hbar)]), (B, 1))
        return drift, coeffs, rates

    def _xp(self, z):
        pr = self.params
        X = (z[:, 0] + z[:, 1]) / math.sqrt(2 * pr.eta)
        P = 1j * pr.hbar * math.sqrt(pr.eta / 2) * (z[:, 1] - z[:, 0])
        return X, P

    def observable(self, name, z):
        X, P = self._xp(np.asarray(z))
        pr = self.params
        if name == "x":
            return X
        if name == "p":
            return P
        if name == "X2":
            return X**2
        if name == "x2":
            return 1 / (2 * pr.eta) + X**2
        if name == "p2":
            return pr.hbar**2 * pr.eta / 2 + P**2
        return super().observable(name, z)

    @property
    def observable_names(self):
        return ("x", "p", "x2", "X2", "p2") + tuple(MONOMIALS)

    def hamiltonian(self, n_max=None):
        pr = self.params
        return fock.build_hamiltonian(
            "free", eta=pr.eta, mass=pr.mass, hbar=pr.hbar, n_max=self.n_max if n_max is None else n_max
        )

    def operator(self, name, n_max=None):
        n_max = self.n_max if n_max is None else n_max
        pr = self.params
        if name == "x":
            return fock.position_operator(pr.eta, n_max)
        if name == "p":
            return fock.momentum_operator(pr.eta, pr.hbar, n_max)
        if name == "x2":
            x = fock.position_operator(pr.eta, n_max + 2)
            return (x @ x)[: n_max + 1, : n_max + 1]
        if name == "p2":
            p = fock.momentum_operator(pr.eta, pr.hbar, n_max + 2)
            return (p @ p)[: n_max + 1, : n_max + 1]
        return super().operator(name, n_max)

    def exact(self, name, times):
        """Closed-form free-particle moments (no truncation)."""
        t = np.asarray(times, dtype=float)
        pr = self.params
        X0, P0 = self._xp(self.initial_state()[None, :])
        X0, P0 = X0[0], P0[0]
        m = pr.mass
        spread = pr.hbar**2 * pr.eta / 2
        if name == "x":
            return X0 + P0 * t / m + 0j
        if name == "p":
            return np.full(t.shape, P0, dtype=complex)
        if name == "X2":
            return X0**2 + 2 * X0 * P0 * t / m + (spread + P0**2) * t**2 / m**2
        if name == "x2":
            return 1 / (2 * pr.eta) + X0**2 + 2 * X0 * P0 * t / m + (spread + P0**2) * t**2 / m**2
        if name == "p2":
            return np.full(t.shape, spread + P0**2, dtype=complex)
        return super().exact(name, times)


class Kerr(SingleModeModel):
    """Kerr oscillator ``H = hbar omega n + hbar K a_dag**2 a**2 / 2``.

    ``d alpha = -i dt (omega + K beta* alpha) alpha + sqrt(K hbar) alpha dW1``,
    ``d beta* = +i dt (omega + K beta* alpha) beta* + sqrt(K hbar) beta* dW2``.
    """

    name = "kerr"
    noise_orders = (2, 2)
    designed_order = 2

    def __init__(self, params: KerrParams | None = None, alpha0=1.0, beta0_star=1.0, n_max=None):
        super().__init__(alpha0, beta0_star, n_max)
        self.params = params or KerrParams()

    def sde_terms(self, z):
        pr = self.params
        a, b = z[:, 0], z[:, 1]
        f = pr.omega + pr.kerr_k * b * a
        drift = np.stack([-1j * f * a, 1j * f * b], axis=1)
        amp = np.sqrt(complex(pr.kerr_k * pr.hbar))
        coeffs = np.zeros((len(z), 2, 2), dtype=complex)
        coeffs[:, 0, 0] = amp * a
        coeffs[:, 1, 1] = amp * b
        rates = np.tile(np.array([1 / (1j * pr.hbar), -1 / (1j * pr.hbar)]), (len(z), 1))
        return drift, coeffs, rates

    def hamiltonian(self, n_max=None):
        pr = self.params
        return fock.build_hamiltonian(
            "kerr", omega=pr.omega, kerr_k=pr.kerr_k, hbar=pr.hbar,
            n_max=self.n_max if n_max is None else n_max,
        )

    def exact_mean_a(self, times):
        """Closed form ``<a>(t) = alpha e^{-i omega t} exp(beta* alpha (e^{-iKt} - 1))``."""
        t = np.asarray(times, dtype=float)
        a0, b0 = self.initial.alpha, self.initial.beta_star
        return a0 * np.exp(-1j * self.params.omega * t) * np.exp(b0 * a0 * (np.exp(-1j * self.params.kerr_k * t) - 1))


class GenKerr(SingleModeModel):
    """Generalised Kerr oscillator with a three-body term ``hbar K2 a_dag**3 a**3 / 6``.

    With ``s = beta* alpha`` the drift is ``-i (omega + K1 s + K2 s**2 / 2) alpha``
    (conjugate sign for ``beta*``).  The multiplicative noises are order-2
    increments with ``E[dxi**2] = -i dt (K1 + K2 s)`` and order-3 increments
    with ``E[dxi**3] = -i dt K2`` (opposite signs on the ``beta*`` side).

    ``noise_order=2`` drops the order-3 increments, which leaves a scheme that
    only matches moments up to second order.
    """

    name = "genkerr"
    designed_order = 3

    def __init__(self, params: GenKerrParams | None = None, alpha0=1.0, beta0_star=1.0, n_max=None, noise_order=3):
        super().__init__(alpha0, beta0_star, n_max)
        self.params = params or GenKerrParams()
        if noise_order not in (2, 3):
            raise ConfigurationError("noise_order must be 2 or 3")
        self.noise_order = noise_order
        self.noise_orders = (2, 2, 3, 3) if noise_order == 3 else (2, 2)
        self.designed_order = noise_order

    def sde_terms(self, z):
        pr = self.params
        a, b = z[:, 0], z[:, 1]
        s = b * a
        f = pr.omega + pr.k1 * s + 0.5 * pr.k2 * s**2
        drift = np.stack([-1j * f * a, 1j * f * b], axis=1)
        K = len(self.noise_orders)
        coeffs = np.zeros((len(z), K, 2), dtype=complex)
        rates = np.zeros((len(z), K), dtype=complex)
        var2 = pr.k1 + pr.k2 * s
        for k in range(0, K, 2):
            coeffs[:, k, 0] = a
            coeffs[:, k + 1, 1] = b
        rates[:, 0], rates[:, 1] = -1j * var2, 1j * var2
        if self.noise_order == 3:
            rates[:, 2], rates[:, 3] = -1j * pr.k2, 1j * pr.k2
        return drift, coeffs, rates

    def hamiltonian(self, n_max=None):
        pr = self.params
        return fock.build_hamiltonian(
            "genkerr", omega=pr.omega, k1=pr.k1, k2=pr.k2, hbar=pr.hbar,
            n_max=self.n_max if n_max is None else n_max,
        )


def single_step(model: SDEModel, state: BargmannPair, dt: float, rng: RngStream) -> BargmannPair:
    """One Euler-Maruyama step of ``model`` for a single trajectory."""
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    z = state.as_array()
    drift, coeffs, rates = model.sde_terms(z[None, :])
    terms = []
    for k, order in enumerate(model.noise_orders):
        sampler = sample_second_order if order == 2 else sample_third_order
        terms.append((coeffs[0, k], sampler(rates[0, k] * dt, rng)))
    new = ito_step(TrajectoryState(0.0, z), drift[0], terms, dt)
    return BargmannPair(*new.variables)


def free_expansion_step(state: BargmannPair, params: FreeExpansionParams, dt, rng) -> BargmannPair:
    return single_step(FreeExpansion(params), state, dt, rng)


def kerr_step(state: BargmannPair, params: KerrParams, dt, rng) -> BargmannPair:
    return single_step(Kerr(params), state, dt, rng)


def genkerr_step(state: BargmannPair, params: GenKerrParams, dt, rng, noise_order=3) -> BargmannPair:
    return single_step(GenKerr(params, noise_order=noise_order), state, dt, rng)
