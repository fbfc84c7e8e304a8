"""Sampling-free check that a model's SDE reproduces exact Ehrenfest rates.

For an Ito SDE ``dz = b dt + sum_k c_k dw_k`` with ``E[dw_k**o_k] = r_k dt``
(``o_k`` = 2 or 3, all lower moments zero), the expected one-step change of a
holomorphic function ``f(z)`` is, to first order in ``dt``,

    E[df]/dt = f_1(b) + sum_k r_k f_{o_k}(c_k)

where ``f_n(u)`` is the n-th Taylor coefficient of ``s -> f(z + s u)``.  The
single-mode moment functions ``Tr(A D(alpha, beta*))`` and the many-body
densities are entire in the (independent) ket and bra components, so the
coefficients are obtained from a discrete Cauchy integral on a circle
(method ``"generator"``).  Method ``"quadrature"`` instead averages
``f(z + dz)`` exactly over the noise law (Gauss-Hermite nodes for order 2,
the three cube-root phases for order 3) and removes the discretisation error
by Richardson extrapolation in ``dt_probe``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .cnumber import FreeExpansion, SingleModeModel
from .ensemble import SDEModel
from .manybody import BosonModel, FermionModel, bbgky_pair_rhs, pair_density
from .noise import OMEGA3, ConfigurationError

TOL_SINGLE_MODE = 1e-8
TOL_MANY_BODY = 1e-6
ORACLE_N_MAX = 40
N_CIRCLE = 32
GH_NODES = 20
SCALE_FLOOR = 1e-4


@dataclass(frozen=True)
class MomentSpec:
    """A tracked moment: ``tag`` names the operator, ``order`` its degree in the generators.

    Single-mode tags name normal-ordered monomials (``"a"``, ``"adag a"``,
    ``"adag^2 a^1"``, ...) plus ``"x"``/``"p"`` for the free particle; many-body tags
    are ``"rho1[j,k]"`` and ``"rho12[i,j,k,l]"``.
    """

    tag: str
    order: int
    p: int = 0
    q: int = 0
    index: tuple = ()

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ConfigurationError("moment order must be 1, 2 or 3")

    @classmethod
    def monomial(cls, p, q):
        names = {(0, 1): "a", (1, 0): "adag", (1, 1): "adag a"}
        tag = names.get((p, q), " ".join(filter(None, [f"adag^{p}" if p else "", f"a^{q}" if q else ""])))
        return cls(tag, p + q, p=p, q=q)

    @classmethod
    def rho1(cls, j, k):
        return cls(f"rho1[{j},{k}]", 1, index=(j, k))

    @classmethod
    def rho12(cls, i, j, k, l):
        return cls(f"rho12[{i},{j},{k},{l}]", 2, index=(i, j, k, l))


@dataclass
class MomentResult:
    moment: MomentSpec
    expected_increment_rate: complex
    ehrenfest_rate: complex
    abs_error: float
    rel_error: float
    passed: bool


@dataclass
class MatchReport:
    model: str
    max_order: int
    tol_rel: float
    results: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def failures(self):
        return [r for r in self.results if not r.passed]

    def extend(self, other: "MatchReport"):
        self.results.extend(other.results)

    def to_text(self):
        lines = [f"model {self.model}  max_order {self.max_order}  tol_rel {self.tol_rel:g}"]
        lines.append(f"{'moment':<20} {'expected':>40} {'ehrenfest':>40} {'rel_err':>10}  result")
        for r in self.results:
            e, h = r.expected_increment_rate, r.ehrenfest_rate
            lines.append(
                f"{r.moment.tag:<20} {e.real:>19.12e}{e.imag:+.12e}j {h.real:>19.12e}{h.imag:+.12e}j "
                f"{r.rel_error:>10.2e}  {'PASS' if r.passed else 'FAIL'}"
            )
        n_fail = len(self.failures)
        lines.append(f"overall {'PASS' if not n_fail else 'FAIL'} ({len(self.results) - n_fail}/{len(self.results)} moments)")
        return "\n".join(lines)


# -- moment families ------------------------------------------------------------


def _inner(model):
    return model.base if isinstance(model, ScaledNoise) else model


def supported_order(model) -> int:
    model = _inner(model)
    if isinstance(model, FreeExpansion):
        return 2
    if isinstance(model, SingleModeModel):
        return 3
    if isinstance(model, (BosonModel, FermionModel)):
        return 2
    raise ConfigurationError(f"unsupported model {getattr(model, 'name', model)!r}")


def moment_specs(model, max_order: int):
    """All tracked moments up to ``max_order`` for the model's generator set."""
    if max_order > supported_order(model) or max_order < 1:
        raise ConfigurationError(
            f"order {max_order} not supported for model {model.name!r} (max {supported_order(model)})"
        )
    model = _inner(model)
    if isinstance(model, SingleModeModel):
        specs = []
        if isinstance(model, FreeExpansion):
            specs += [MomentSpec("x", 1), MomentSpec("p", 1)]
        for k in range(1, max_order + 1):
            for p in range(k, -1, -1):
                specs.append(MomentSpec.monomial(p, k - p))
        return specs
    M = model.M
    specs = [MomentSpec.rho1(j, k) for j in range(M) for k in range(M)]
    if max_order >= 2:
        specs += [MomentSpec.rho12(*idx) for idx in itertools.product(range(M), repeat=4)]
    return specs


class _SingleModeProblem:
    """Moment functions and exact rates for a single-mode model."""

    def __init__(self, model: SingleModeModel, specs, n_max=ORACLE_N_MAX):
        self.model = model
        self.specs = specs
        self.n_max = n_max
        self.H = model.hamiltonian(n_max)
        self.ops = [self._operator(s) for s in specs]
        self.radius = 0.5

    def _operator(self, spec):
        if spec.tag in ("x", "p"):
            return self.model.operator(spec.tag, self.n_max)
        return fock.normal_ordered(spec.p, spec.q, self.n_max)

    def values(self, z):
        D = fock.bargmann_density(z[0], z[1], self.n_max)
        return np.array([np.sum(A.T * D) for A in self.ops])

    def exact_rates(self, z):
        D = fock.bargmann_density(z[0], z[1], self.n_max)
        return np.array([fock.ehrenfest_rhs(A, self.H, D, self.model.hbar) for A in self.ops])


class _ManyBodyProblem:
    def __init__(self, model, specs):
        self.model = model
        self.specs = specs
        self.kind = "boson" if isinstance(_inner(model), BosonModel) else "fermion"
        self.radius = 0.05

    def _state(self, z):
        from .manybody import CondensatePair, FermionPair

        m = self.model
        if self.kind == "boson":
            return CondensatePair(m.n_particles, z[: m.M], z[m.M :])
        return FermionPair(m.N, m.M, z[: m.M * m.N].reshape(m.M, m.N), z[m.M * m.N :].reshape(m.N, m.M))

    def _pick(self, r1, r12):
        return np.array([r1[s.index] if s.order == 1 else r12[s.index] for s in self.specs])

    def values(self, z):
        st = self._state(z)
        r1 = st.rho1 if self.kind == "fermion" else st.n_particles * st.projector
        return self._pick(r1, pair_density(st, self.kind))

    def exact_rates(self, z):
        d1, d12 = bbgky_pair_rhs(self._state(z), self.model.inter, self.kind, self.model.hbar)
        return self._pick(d1, d12)


def _problem(model, specs):
    if isinstance(_inner(model), SingleModeModel):
        return _SingleModeProblem(model, specs)
    if isinstance(_inner(model), (BosonModel, FermionModel)):
        return _ManyBodyProblem(model, specs)
    raise ConfigurationError(f"unsupported model {getattr(model, 'name', model)!r}")


def _taylor(f, z, u, orders, radius):
    """Taylor coefficients of ``s -> f(z + s u)`` at the requested orders."""
    norm = np.linalg.norm(u)
    out = {n: 0.0 for n in orders}
    if norm == 0:
        return out
    d = u / norm
    r = radius
    w = np.exp(2j * np.pi * np.arange(N_CIRCLE) / N_CIRCLE)
    g = np.array([f(z + r * wj * d) for wj in w])
    coef = np.fft.fft(g, axis=0) / N_CIRCLE
    for n in orders:
        out[n] = coef[n] / r**n * norm**n
    return out


def _generator_rates(model, problem, z):
    radius = problem.radius
    drift, coeffs, rates = model.sde_terms(z[None, :])
    total = _taylor(problem.values, z, drift[0], [1], radius)[1]
    for k, order in enumerate(model.noise_orders):
        if rates[0, k] == 0:
            continue
        total = total + rates[0, k] * _taylor(problem.values, z, coeffs[0, k], [order], radius)[order]
    return np.asarray(total, dtype=complex)


def _mean_after_step(model, problem, z, dt):
    """Exact expectation of ``f`` after one Euler-Maruyama step of length ``dt``."""
    drift, coeffs, rates = model.sde_terms(z[None, :])
    drift, coeffs, rates = drift[0], coeffs[0], rates[0]
    base = z + drift * dt
    x, wgh = np.polynomial.hermite_e.hermegauss(GH_NODES)
    wgh = wgh / wgh.sum()
    axes = []
    for k, order in enumerate(model.noise_orders):
        if order == 2:
            vals = np.sqrt(complex(rates[k] * dt)) * x
            axes.append(list(zip(vals, wgh)))
        else:
            c = np.abs(rates[k] * dt) ** (1 / 3) * np.exp(1j * np.angle(rates[k] * dt) / 3)
            axes.append([(c * OMEGA3**j, 1 / 3) for j in range(3)])
    total = 0.0
    for combo in itertools.product(*axes):
        weight = np.prod([w for _, w in combo])
        step = base + sum(v * coeffs[k] for k, (v, _) in enumerate(combo))
        total = total + weight * problem.values(step)
    return total


def _quadrature_rates(model, problem, z, dt_probe, levels=3):
    f0 = problem.values(z)
    est = [(_mean_after_step(model, problem, z, dt_probe / 2**j) - f0) / (dt_probe / 2**j) for j in range(levels)]
    # Richardson table for an expansion in integer powers of dt
    for m in range(1, levels):
        est = [(2**m * est[j + 1] - est[j]) / (2**m - 1) for j in range(len(est) - 1)]
    return est[0]


def _check_state(model, state):
    z = np.asarray(state if state is not None else model.initial_state(), dtype=complex).reshape(-1)
    if z.shape != model.initial_state().shape:
        raise ConfigurationError("state has the wrong number of variables for this model")
    return z


def expected_increment_rate(model: SDEModel, state, moment, dt_probe: float = 1e-3, method: str = "generator"):
    """``E[d<A>]/dt`` implied by the model's drift and noise moments (no sampling).

    ``moment`` is a :class:`MomentSpec` or a list of them; the return value is
    a complex scalar or an array accordingly.
    """
    if not dt_probe > 0:
        raise ConfigurationError("dt_probe must be positive")
    single = isinstance(moment, MomentSpec)
    specs = [moment] if single else list(moment)
    allowed = {s.tag for s in moment_specs(model, supported_order(model))}
    for s in specs:
        if s.tag not in allowed:
            raise ConfigurationError(f"moment {s.tag!r} is not supported for model {model.name!r}")
    z = _check_state(model, state)
    problem = _problem(model, specs)
    if method == "generator":
        out = _generator_rates(model, problem, z)
    elif method == "quadrature":
        out = _quadrature_rates(model, problem, z, dt_probe)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    return complex(out[0]) if single else out


def exact_rate(model, state, moment):
    z = _check_state(model, state)
    single = isinstance(moment, MomentSpec)
    specs = [moment] if single else list(moment)
    out = _problem(model, specs).exact_rates(z)
    return complex(out[0]) if single else out


def default_tolerance(model):
    model = _inner(model)
    return TOL_SINGLE_MODE if isinstance(model, SingleModeModel) else TOL_MANY_BODY


def verify_hierarchy(model: SDEModel, state=None, max_order: int | None = None, tol_rel: float | None = None,
                     method: str = "generator", dt_probe: float = 1e-3) -> MatchReport:
    """Compare expected and exact rates for every moment up to ``max_order``.

    ``max_order`` defaults to the model's designed order and may exceed it (up
    to the supported order); moments beyond the design are then expected to
    fail.  The relative error is ``|expected - exact| / max(|exact|, scale)``
    where ``scale`` sums the magnitudes of the individual terms, so rates that
    vanish by cancellation are judged against the size of what cancelled.
    Rates that vanish term by term are measured against ``SCALE_FLOOR``
    times the largest scale in the report.
    """
    max_order = model.designed_order if max_order is None else int(max_order)
    tol_rel = default_tolerance(model) if tol_rel is None else float(tol_rel)
    specs = moment_specs(model, max_order)
    z = _check_state(model, state)
    problem = _problem(model, specs)
    if method == "generator":
        expected = _generator_rates(model, problem, z)
    else:
        expected = _quadrature_rates(model, problem, z, dt_probe)
    exact = problem.exact_rates(z)
    scale = _rate_scale(model, problem, z)
    floor = SCALE_FLOOR * max(float(np.max(scale)), 1e-300)
    report = MatchReport(model.name, max_order, tol_rel)
    for s, e, h, sc in zip(specs, expected, exact, scale):
        err = abs(e - h)
        rel = err / max(abs(h), sc, floor)
        report.results.append(MomentResult(s, complex(e), complex(h), float(err), float(rel), bool(rel <= tol_rel)))
    return report


def _rate_scale(model, problem, z):
    """Sum of magnitudes of the drift and per-noise contributions."""
    radius = problem.radius
    drift, coeffs, rates = model.sde_terms(z[None, :])
    total = np.abs(_taylor(problem.values, z, drift[0], [1], radius)[1])
    for k, order in enumerate(model.noise_orders):
        if rates[0, k] != 0:
            total = total + np.abs(rates[0, k] * _taylor(problem.values, z, coeffs[0, k], [order], radius)[order])
    return total


def random_states(model, n_states=20, seed=0, amplitude=1.5):
    """Reproducible random states for ``model``.

    Single-mode: ``|alpha|, |beta*| <= amplitude``.  Bosons: random ket and
    bra normalised to unit overlap.  Fermions: random biorthonormal pairs.
    """
    rng = np.random.default_rng(seed)
    model = _inner(model)
    out = []
    for _ in range(n_states):
        if isinstance(model, SingleModeModel):
            r = amplitude * np.sqrt(rng.random(2))
            ph = np.exp(2j * np.pi * rng.random(2))
            out.append(r * ph)
        elif isinstance(model, BosonModel):
            a = rng.standard_normal(model.M) + 1j * rng.standard_normal(model.M)
            b = a.conj() + 0.3 * (rng.standard_normal(model.M) + 1j * rng.standard_normal(model.M))
            a = a / np.linalg.norm(a)
            out.append(np.concatenate([a, b / (b @ a)]))
        elif isinstance(model, FermionModel):
            M, N = model.M, model.N
            A = rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))
            C = A.conj().T + 0.3 * (rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M)))
            B = np.linalg.solve(C @ A, C)
            out.append(np.concatenate([A.ravel(), B.ravel()]))
        else:
            raise ConfigurationError(f"unsupported model {model.name!r}")
    return out


class ScaledNoise(SDEModel):
    """Wrap ``model`` with the noise target ``index`` multiplied by ``factor``."""

    def __init__(self, model: SDEModel, index: int = 0, factor: float = 1.01):
        self.base = model
        self.index = int(index)
        self.factor = factor
        self.name = f"{model.name}[noise {index} x{factor:g}]"
        self.noise_orders = model.noise_orders
        self.designed_order = model.designed_order
        if not 0 <= self.index < len(model.noise_orders):
            raise ConfigurationError("noise index out of range")

    def __getattr__(self, item):
        return getattr(self.base, item)

    def initial_state(self):
        return self.base.initial_state()

    def sde_terms(self, z):
        drift, coeffs, rates = self.base.sde_terms(z)
        rates = rates.copy()
        rates[:, self.index] *= self.factor
        return drift, coeffs, rates
