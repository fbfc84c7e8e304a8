"""Seeded, trajectory-parallel ensemble execution.

Trajectories are processed in fixed-size blocks.  Every trajectory ``i`` owns
``RngStream(master_seed, i)``, so its path does not depend on which block or
thread integrates it.  Each block reduces to a :class:`StatsAccumulator`;
blocks are merged in index order, which makes the output independent of the
number of worker threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .noise import ConfigurationError, RngStream, second_order_increment, third_order_increment

BLOCK_SIZE = 1000
CHUNK_STEPS = 256
THREADS_ENV = "SSEQMC_THREADS"
DEFAULT_DIVERGENCE_CAP = 1e12


class SDEModel:
    """Base class for a model integrated by :func:`run_ensemble`.

    Subclasses describe their Ito SDE through :meth:`sde_terms`; the state of
    one trajectory is a flat complex vector.  ``noise_orders`` lists the order
    (2 or 3) of each independent increment consumed per step.
    """

    name = "model"
    noise_orders: tuple[int, ...] = ()
    designed_order = 2
    observable_names: tuple[str, ...] = ()

    def initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def sde_terms(self, z):
        """Return ``(drift, coeffs, rates)`` for a batch ``z`` of shape (B, n).

        ``drift`` has shape (B, n); ``coeffs`` (B, K, n) is the direction
        multiplying increment k; ``rates`` (B, K) gives the prescribed moment
        per unit time (``E[dw**2]/dt`` for order 2, ``E[dw**3]/dt`` for order 3).
        """
        raise NotImplementedError

    def observable(self, name: str, z) -> np.ndarray:
        raise ConfigurationError(f"model {self.name!r} has no observable {name!r}")

    def flag(self, z) -> np.ndarray:
        """Model-specific divergence flags for a batch (default: none)."""
        return np.zeros(len(z), dtype=bool)

    def gauge(self, z):
        """Post-step gauge fixing (renormalisation); identity by default."""
        return z

    def exact(self, name: str, times) -> np.ndarray | None:
        return None

    def check_observables(self, names):
        for name in names:
            self.observable(name, self.initial_state()[None, :])

    @property
    def n_second(self):
        return sum(1 for o in self.noise_orders if o == 2)

    @property
    def n_third(self):
        return sum(1 for o in self.noise_orders if o == 3)


def increments(model: SDEModel, rates, dt, normals, uniforms):
    """Noise increments for one batched step from raw draws."""
    orders = np.asarray(model.noise_orders)
    inc = np.zeros(rates.shape, dtype=complex)
    if model.n_second:
        mask = orders == 2
        inc[:, mask] = second_order_increment(rates[:, mask] * dt, normals)
    if model.n_third:
        mask = orders == 3
        inc[:, mask] = third_order_increment(rates[:, mask] * dt, uniforms)
    return inc


def em_step(model: SDEModel, z, dt, normals, uniforms):
    """Batched explicit Euler-Maruyama step."""
    drift, coeffs, rates = model.sde_terms(z)
    new = z + drift * dt
    if coeffs.shape[1]:
        inc = increments(model, rates, dt, normals, uniforms)
        new = new + np.einsum("bk,bkn->bn", inc, coeffs)
    return model.gauge(new)


class StatsAccumulator:
    """Mergeable per-time accumulator of complex samples.

    Real and imaginary parts keep separate second moments.  ``merge`` uses the
    pairwise update of Chan et al., so partial results combine in one pass.
    """

    def __init__(self, n_times: int):
        self.count = np.zeros(n_times, dtype=np.int64)
        self.mean = np.zeros(n_times, dtype=complex)
        self.m2_re = np.zeros(n_times)
        self.m2_im = np.zeros(n_times)

    @classmethod
    def from_samples(cls, values, valid):
        """Build from ``values`` (n_times, n) with boolean mask ``valid``."""
        acc = cls(values.shape[0])
        acc.count = valid.sum(axis=1).astype(np.int64)
        v = np.where(valid, values, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(acc.count > 0, v.sum(axis=1) / np.maximum(acc.count, 1), 0.0)
        dev = np.where(valid, values - mean[:, None], 0.0)
        acc.mean = mean.astype(complex)
        acc.m2_re = (dev.real**2).sum(axis=1)
        acc.m2_im = (dev.imag**2).sum(axis=1)
        return acc

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        out = StatsAccumulator(len(self.count))
        n = self.count + other.count
        safe = np.maximum(n, 1)
        delta = other.mean - self.mean
        out.count = n
        out.mean = np.where(n > 0, self.mean + delta * other.count / safe, 0.0)
        w = self.count * other.count / safe
        out.m2_re = self.m2_re + other.m2_re + delta.real**2 * w
        out.m2_im = self.m2_im + other.m2_im + delta.imag**2 * w
        return out


@dataclass
class ObservableStats:
    mean: np.ndarray
    variance_real: np.ndarray
    variance_imag: np.ndarray
    stderr: np.ndarray
    n_traj: np.ndarray

    @property
    def stderr_real(self):
        return np.sqrt(self.variance_real / np.maximum(self.n_traj, 1))

    @property
    def stderr_imag(self):
        return np.sqrt(self.variance_imag / np.maximum(self.n_traj, 1))

    @classmethod
    def from_accumulator(cls, acc: StatsAccumulator):
        n = acc.count
        denom = np.maximum(n - 1, 1)
        var_re = np.where(n > 1, acc.m2_re / denom, 0.0)
        var_im = np.where(n > 1, acc.m2_im / denom, 0.0)
        stderr = np.sqrt((var_re + var_im) / np.maximum(n, 1))
        # no surviving trajectory: nothing to report
        mean = np.where(n > 0, acc.mean, np.nan + 0j)
        stderr = np.where(n > 0, stderr, np.nan)
        return cls(mean, var_re, var_im, stderr, n.copy())


@dataclass
class EnsembleStats:
    """Per-time ensemble statistics.

    ``stderr`` is the standard error of the complex mean,
    ``sqrt((var_re + var_im) / n)``; the componentwise errors are available as
    ``stderr_real`` / ``stderr_imag`` on each :class:`ObservableStats`.
    """

    time_grid: np.ndarray
    observables: dict[str, ObservableStats]
    n_traj: int
    n_divergent: int = 0
    divergence_times: list = field(default_factory=list)

    def __getitem__(self, name):
        return self.observables[name]


def resolve_threads(n_threads=None) -> int:
    if n_threads is None:
        n_threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(n_threads))


def _step_schedule(time_grid, dt):
    time_grid = np.asarray(time_grid, dtype=float)
    if time_grid.ndim != 1 or len(time_grid) < 1:
        raise ConfigurationError("time_grid must be a non-empty 1-d sequence")
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    gaps = np.diff(time_grid)
    if np.any(gaps <= 0):
        raise ConfigurationError("time_grid must be strictly increasing")
    steps = np.rint(gaps / dt).astype(np.int64)
    if np.any(np.abs(steps * dt - gaps) > 1e-9 * np.maximum(1.0, np.abs(gaps))):
        raise ConfigurationError("time_grid spacings must be integer multiples of dt")
    return time_grid, steps


def _divergent(model, z, cap):
    bad = ~np.isfinite(z).all(axis=1)
    with np.errstate(invalid="ignore", over="ignore"):
        bad |= (np.abs(z) > cap).any(axis=1)
    if not bad.all():
        keep = ~bad
        flagged = np.zeros_like(bad)
        flagged[keep] = model.flag(z[keep])
        bad |= flagged
    return bad


def _run_block(model, indices, time_grid, steps, observables, master_seed, dt, cap):
    streams = [RngStream(master_seed, i) for i in indices]
    nb = len(indices)
    z0 = np.asarray(model.initial_state(), dtype=complex)
    z = np.tile(z0, (nb, 1))
    alive = np.ones(nb, dtype=bool)
    div_time = np.full(nb, np.nan)
    n_times = len(time_grid)
    values = np.zeros((len(observables), n_times, nb), dtype=complex)
    valid = np.zeros((n_times, nb), dtype=bool)

    def record(k):
        valid[k] = alive
        for o, name in enumerate(observables):
            values[o, k] = model.observable(name, z)

    n2, n3 = model.n_second, model.n_third
    total = int(steps.sum())
    normals = uniforms = None
    pos = CHUNK_STEPS
    step_no = 0
    t = float(time_grid[0])
    record(0)
    for k, n_sub in enumerate(steps, start=1):
        for _ in range(int(n_sub)):
            if pos == CHUNK_STEPS:
                size = min(CHUNK_STEPS, total - step_no)
                normals = np.stack([s.normal((size, n2)) for s in streams], axis=1) if n2 else None
                uniforms = np.stack([s.uniform((size, n3)) for s in streams], axis=1) if n3 else None
                pos = 0
            g = normals[pos] if n2 else None
            u = uniforms[pos] if n3 else None
            z = em_step(model, z, dt, g, u)
            pos += 1
            step_no += 1
            t = float(time_grid[0]) + step_no * dt
            bad = alive & _divergent(model, z, cap)
            if bad.any():
                div_time[bad] = t
                alive &= ~bad
            z[~alive] = z0
        record(k)
    accs = [StatsAccumulator.from_samples(values[o], valid) for o in range(len(observables))]
    return accs, div_time


def run_ensemble(
    model: SDEModel,
    n_traj: int,
    time_grid,
    observables,
    master_seed: int,
    *,
    dt: float,
    divergence_cap: float = DEFAULT_DIVERGENCE_CAP,
    n_threads: int | None = None,
    block_size: int = BLOCK_SIZE,
) -> EnsembleStats:
    """Integrate ``n_traj`` trajectories of ``model`` and collect statistics.

    A trajectory whose state turns non-finite, exceeds ``divergence_cap`` in
    modulus, or is flagged by ``model.flag`` is frozen at that step; it still
    contributes to the sample times before its flag time but not after.
    """
    if int(n_traj) < 1:
        raise ConfigurationError("n_traj must be >= 1")
    n_traj = int(n_traj)
    observables = list(observables)
    model.check_observables(observables)
    time_grid, steps = _step_schedule(time_grid, dt)
    blocks = [range(s, min(s + block_size, n_traj)) for s in range(0, n_traj, block_size)]

    def work(idx):
        return _run_block(model, idx, time_grid, steps, observables, master_seed, dt, divergence_cap)

    n_threads = resolve_threads(n_threads)
    if n_threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(b) for b in blocks]

    merged = [StatsAccumulator(len(time_grid)) for _ in observables]
    div_times = []
    for accs, dtimes in results:
        merged = [m.merge(a) for m, a in zip(merged, accs)]
        div_times.extend(dtimes[np.isfinite(dtimes)].tolist())
    stats = {name: ObservableStats.from_accumulator(acc) for name, acc in zip(observables, merged)}
    return EnsembleStats(time_grid, stats, n_traj, len(div_times), div_times)
