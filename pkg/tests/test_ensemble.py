import numpy as np
import pytest

from sseqmc import cnumber, manybody
from sseqmc.ensemble import SDEModel, StatsAccumulator, ObservableStats, run_ensemble
from sseqmc.noise import ConfigurationError, RngStream


class Rotation(SDEModel):
    """Deterministic harmonic rotation, one variable."""

    name = "rotation"

    def initial_state(self):
        return np.array([1.0 + 0j])

    def sde_terms(self, z):
        return -1j * z, np.zeros((len(z), 0, 1), dtype=complex), np.zeros((len(z), 0), dtype=complex)

    def observable(self, name, z):
        if name == "a":
            return z[:, 0]
        return super().observable(name, z)


class Exploding(SDEModel):
    """dz = z dt + z dW: grows past any cap for large enough dt."""

    name = "exploding"
    noise_orders = (2,)

    def initial_state(self):
        return np.array([1.0 + 0j])

    def sde_terms(self, z):
        return 50 * z, z[:, None, :] * 20, np.ones((len(z), 1), dtype=complex)

    def observable(self, name, z):
        return z[:, 0]


def test_single_deterministic_trajectory():
    grid = np.linspace(0, 1, 11)
    st = run_ensemble(Rotation(), 1, grid, ["a"], 0, dt=1e-3)
    s = st["a"]
    np.testing.assert_array_equal(s.stderr, 0)
    np.testing.assert_allclose(s.mean, np.exp(-1j * grid), atol=1e-3)
    assert st.n_divergent == 0


def test_divergent_trajectories_are_excluded_and_counted():
    grid = np.linspace(0, 1, 5)
    st = run_ensemble(Exploding(), 20, grid, ["a"], 0, dt=1e-2, divergence_cap=1e3)
    assert st.n_divergent > 0
    assert st.n_divergent <= 20
    assert st["a"].n_traj[0] == 20
    assert st["a"].n_traj[-1] == 20 - st.n_divergent
    alive = st["a"].n_traj > 0
    assert np.all(np.isfinite(st["a"].mean[alive]))
    assert np.all(np.isnan(st["a"].mean[~alive]))


def test_time_grid_validation():
    m = Rotation()
    with pytest.raises(ConfigurationError):
        run_ensemble(m, 1, [0, 0.1, 0.05], ["a"], 0, dt=1e-3)
    with pytest.raises(ConfigurationError):
        run_ensemble(m, 1, [0, 0.00015], ["a"], 0, dt=1e-4)
    with pytest.raises(ConfigurationError):
        run_ensemble(m, 0, [0, 1], ["a"], 0, dt=1e-3)
    with pytest.raises(ConfigurationError):
        run_ensemble(m, 1, [0, 1], ["nope"], 0, dt=1e-3)


def test_accumulator_merge_matches_direct():
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((3, 100)) + 1j * rng.standard_normal((3, 100))
    valid = rng.random((3, 100)) > 0.2
    whole = ObservableStats.from_accumulator(StatsAccumulator.from_samples(vals, valid))
    a = StatsAccumulator.from_samples(vals[:, :37], valid[:, :37])
    b = StatsAccumulator.from_samples(vals[:, 37:], valid[:, 37:])
    merged = ObservableStats.from_accumulator(a.merge(b))
    np.testing.assert_allclose(merged.mean, whole.mean, rtol=1e-13)
    np.testing.assert_allclose(merged.variance_real, whole.variance_real, rtol=1e-12)
    np.testing.assert_allclose(merged.variance_imag, whole.variance_imag, rtol=1e-12)
    for k in range(3):
        v = vals[k, valid[k]]
        assert merged.mean[k] == pytest.approx(v.mean())
        assert merged.variance_real[k] == pytest.approx(np.var(v.real, ddof=1))
        assert merged.stderr[k] == pytest.approx(np.sqrt((np.var(v.real, ddof=1) + np.var(v.imag, ddof=1)) / v.size))


def test_block_size_and_threads_do_not_change_results():
    m = cnumber.Kerr()
    grid = [0, 0.05, 0.1]
    ref = run_ensemble(m, 50, grid, ["a"], 3, dt=1e-3, block_size=50, n_threads=1)
    for bs, nt in [(7, 1), (7, 3), (16, 2)]:
        st = run_ensemble(m, 50, grid, ["a"], 3, dt=1e-3, block_size=bs, n_threads=nt)
        np.testing.assert_allclose(st["a"].mean, ref["a"].mean, rtol=1e-14, atol=1e-15)
        np.testing.assert_allclose(st["a"].stderr, ref["a"].stderr, rtol=1e-12)


def test_ensemble_first_trajectory_matches_single_steps():
    m = cnumber.GenKerr(alpha0=0.6, beta0_star=0.5)
    dt, n = 1e-3, 40
    st = run_ensemble(m, 1, [0, n * dt], ["a", "adag"], 17, dt=dt)
    rng = RngStream(17, 0)
    s = cnumber.BargmannPair(0.6, 0.5)
    for _ in range(n):
        s = cnumber.genkerr_step(s, m.params, dt, rng)
    assert st["a"].mean[-1] == pytest.approx(s.alpha, abs=1e-13)
    assert st["adag"].mean[-1] == pytest.approx(s.beta_star, abs=1e-13)


def test_run_is_reproducible():
    m = manybody.TwoMode(manybody.TwoModeParams(4, 1.0, 0.2))
    a = run_ensemble(m, 30, [0, 0.1, 0.2], ["p1"], 8, dt=1e-3)
    b = run_ensemble(m, 30, [0, 0.1, 0.2], ["p1"], 8, dt=1e-3)
    np.testing.assert_array_equal(a["p1"].mean, b["p1"].mean)
    c = run_ensemble(m, 30, [0, 0.1, 0.2], ["p1"], 9, dt=1e-3)
    assert not np.array_equal(a["p1"].mean, c["p1"].mean)
