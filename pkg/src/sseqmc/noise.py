"""Engineered complex noises and the explicit Ito update.

Two noise families are provided:

* order 2: ``value = sqrt(target) * g`` with ``g`` a real standard normal, so
  that ``E[value] = 0`` and ``E[value**2] = target``;
* order 3: ``value = c * w**j`` with ``c`` the principal cube root of the
  target, ``w = exp(2 pi i / 3)`` and ``j`` uniform on ``{0, 1, 2}``.  The first,
  second, fourth and fifth moments vanish and ``value**3 == target`` for every
  sample.

Targets are always proportional to ``dt``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

OMEGA3 = np.exp(2j * np.pi / 3.0)
_CUBE_PHASES = np.array([1.0 + 0j, OMEGA3, OMEGA3 * OMEGA3])

_SEED_LIMIT = 2**64


class ConfigurationError(ValueError):
    """Raised for malformed inputs: dimension mismatches, bad parameters."""


@dataclass(frozen=True)
class NoiseIncrement:
    value: complex
    order: int
    target_moment: complex

    def __post_init__(self):
        if self.order not in (2, 3):
            raise ConfigurationError(f"noise order must be 2 or 3, got {self.order}")


class RngStream:
    """Random stream owned by one trajectory.

    The stream is a pure function of ``(master_seed, trajectory_index)``: two
    independent Philox generators are derived from
    ``SeedSequence(master_seed, spawn_key=(trajectory_index, k))``, one for
    normal draws (k=0) and one for uniform draws (k=1).  Draws are consumed
    strictly sequentially, so splitting a request into several smaller ones
    yields the same numbers.
    """

    def __init__(self, master_seed: int, trajectory_index: int):
        master_seed = int(master_seed)
        trajectory_index = int(trajectory_index)
        if not 0 <= master_seed < _SEED_LIMIT:
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer")
        if trajectory_index < 0:
            raise ConfigurationError("trajectory_index must be non-negative")
        self.master_seed = master_seed
        self.trajectory_index = trajectory_index
        self.counter = 0
        self._normal = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(trajectory_index, 0)))
        )
        self._uniform = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(trajectory_index, 1)))
        )

    def normal(self, size=None):
        out = self._normal.standard_normal(size)
        self.counter += int(np.size(out))
        return out

    def uniform(self, size=None):
        out = self._uniform.random(size)
        self.counter += int(np.size(out))
        return out

    def __repr__(self):
        return (
            f"RngStream(master_seed={self.master_seed}, "
            f"trajectory_index={self.trajectory_index}, counter={self.counter})"
        )


def second_order_increment(target, g):
    """Vectorised order-2 increment ``sqrt(target) * g`` (principal root)."""
    return np.sqrt(np.asarray(target, dtype=complex)) * g


def principal_cbrt(z):
    z = np.asarray(z, dtype=complex)
    return np.abs(z) ** (1.0 / 3.0) * np.exp(1j * np.angle(z) / 3.0)


def third_order_increment(target, u):
    """Vectorised order-3 increment from uniforms ``u`` in [0, 1)."""
    j = np.minimum((np.asarray(u) * 3.0).astype(np.intp), 2)
    return principal_cbrt(target) * _CUBE_PHASES[j]


def sample_second_order(target_moment: complex, rng: RngStream) -> NoiseIncrement:
    target_moment = complex(target_moment)
    if not np.isfinite(target_moment):
        raise ConfigurationError("target moment must be finite")
    g = rng.normal()
    return NoiseIncrement(complex(second_order_increment(target_moment, g)), 2, target_moment)


def sample_third_order(target_third_moment: complex, rng: RngStream) -> NoiseIncrement:
    target = complex(target_third_moment)
    if not np.isfinite(target):
        raise ConfigurationError("target moment must be finite")
    u = rng.uniform()
    return NoiseIncrement(complex(third_order_increment(target, u)), 3, target)


@dataclass(frozen=True)
class TrajectoryState:
    time: float
    variables: np.ndarray = field(repr=True)

    def __post_init__(self):
        v = np.array(self.variables, dtype=complex).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "variables", v)


def ito_step(
    state: TrajectoryState,
    drift: Sequence[complex],
    noise_terms: Sequence[tuple[Sequence[complex], NoiseIncrement]],
    dt: float,
) -> TrajectoryState:
    """One explicit Euler-Maruyama step.

    ``variables' = variables + drift*dt + sum(coefficient * increment.value)``.
    """
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    z = state.variables
    drift = np.asarray(drift, dtype=complex).reshape(-1)
    if drift.shape != z.shape:
        raise ConfigurationError(
            f"drift has length {drift.size}, state has {z.size} variables"
        )
    new = z + drift * dt
    for coeff, inc in noise_terms:
        coeff = np.asarray(coeff, dtype=complex).reshape(-1)
        if coeff.shape != z.shape:
            raise ConfigurationError(
                f"noise coefficient has length {coeff.size}, state has {z.size} variables"
            )
        new = new + coeff * inc.value
    return TrajectoryState(state.time + dt, new)
