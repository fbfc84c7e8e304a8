import json

import numpy as np
import pytest

from sseqmc import cli
from sseqmc.config import PRESETS, config_from_mapping, parse_config, preset
from sseqmc.noise import ConfigurationError

MINIMAL = """
model: kerr
omega: 1
kerr_k: 0.1
n_traj: 100
dt: 1e-4
t_max: 1
seed: 42
"""


def test_minimal_document_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.model == "kerr"
    assert cfg.params["omega"] == 1 and cfg.params["kerr_k"] == 0.1
    assert cfg.n_traj == 100 and cfg.master_seed == 42
    assert cfg.hbar == 1.0
    assert cfg.divergence_cap == 1e12
    assert cfg.renormalize is False
    assert cfg.observables == ["a"]


def test_negative_dt_names_the_key():
    with pytest.raises(ConfigurationError, match="dt"):
        parse_config(MINIMAL.replace("dt: 1e-4", "dt: -1"))


@pytest.mark.parametrize("line, key", [
    ("n_traj: 0", "n_traj"),
    ("bogus: 3", "bogus"),
    ("sample_every: 0", "sample_every"),
    ("observables: [zz]", "observables"),
    ("kerr_k: hello", "kerr_k"),
])
def test_invalid_values_name_the_key(line, key):
    text = "\n".join(ln for ln in MINIMAL.splitlines() if not ln.startswith(line.split(":")[0] + ":"))
    with pytest.raises(ConfigurationError, match=key):
        parse_config(text + "\n" + line)


def test_unknown_model_and_malformed_document():
    with pytest.raises(ConfigurationError, match="model"):
        parse_config("model: nope")
    with pytest.raises(ConfigurationError):
        parse_config("[1, 2]")
    with pytest.raises(ConfigurationError):
        parse_config("model: kerr\n  bad: : indent")


def test_fig1_preset_expansion():
    p = preset("fig1")
    for k, v in {"model": "two_mode", "N": 17, "K": 0.1, "Omega": 1.0, "dt": 1e-3, "t_max": 6.0,
                 "n_traj": 10000}.items():
        assert p[k] == v
    cfg = parse_config("preset: fig1")
    assert cfg.model == "two_mode"
    assert cfg.params["n_particles"] == 17
    assert cfg.params["kerr_k"] == 0.1
    assert cfg.params["omega_rabi"] == 1.0
    assert cfg.n_traj == 10000 and cfg.dt == 1e-3 and cfg.t_max == 6.0
    np.testing.assert_allclose(cfg.time_grid()[[0, -1]], [0, 6.0])
    override = parse_config("preset: fig1\nn_traj: 5")
    assert override.n_traj == 5


def test_every_preset_is_valid():
    for name in PRESETS:
        parse_config(f"preset: {name}")


def test_big_seed_is_exact():
    cfg = config_from_mapping({"model": "kerr", "seed": 2**64 - 1})
    assert cfg.master_seed == 2**64 - 1
    with pytest.raises(ConfigurationError, match="master_seed"):
        config_from_mapping({"model": "kerr", "seed": 2**64})


def small_run_args(path, threads):
    return ["run", "--model", "free_expansion", "--seed", "7", "--set", "n_traj=40", "--set", "t_max=0.2",
            "--set", "sample_every=50", "--set", "observables=[x2, X2]", "--out", str(path),
            "--threads", str(threads)]


def test_csv_is_byte_identical_across_threads_and_reruns(tmp_path):
    outs = []
    for k, threads in enumerate((1, 3, 1)):
        path = tmp_path / f"run{k}.csv"
        assert cli.main(small_run_args(path, threads)) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    meta = json.loads((tmp_path / "run0.csv.meta.json").read_text())
    assert meta["n_traj"] == 40 and meta["n_divergent"] == 0 and meta["wall_time"] >= 0


def test_single_trajectory_rerun_identical(tmp_path):
    doc = "model: free_expansion\nn_traj: 1\nseed: 5\nt_max: 0.5\nsample_every: 100\n"
    cfg = parse_config(doc)
    a, _ = cli.run(cfg)
    b, _ = cli.run(parse_config(doc))
    assert a == b


def test_csv_layout(tmp_path):
    path = tmp_path / "k.csv"
    args = ["run", "--preset", "kerr", "--set", "n_traj=20", "--set", "t_max=0.1", "--set", "sample_every=250",
            "--out", str(path)]
    assert cli.main(args) == 0
    text = path.read_text()
    pre = [ln for ln in text.splitlines() if ln.startswith("#")]
    assert any("n_divergent" in ln for ln in pre)
    assert any("master_seed: 2" in ln for ln in pre)
    data = cli.read_csv(text)
    assert list(data)[:6] == ["t", "a_mean_re", "a_mean_im", "a_stderr", "a_exact_re", "a_exact_im"]
    assert "n_used" in data
    np.testing.assert_allclose(data["t"], [0, 0.025, 0.05, 0.075, 0.1])
    assert data["a_exact_re"][0] == pytest.approx(1.0)
    assert data["a_mean_re"][0] == pytest.approx(1.0)


def test_flags_win_over_config_file(tmp_path):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(MINIMAL + "sample_every: 1000\n")
    out = tmp_path / "o.csv"
    assert cli.main(["run", "--config", str(cfg_path), "--seed", "3", "--set", "n_traj=5",
                     "--set", "t_max=0.2", "--out", str(out)]) == 0
    assert "# master_seed: 3" in out.read_text()


def test_run_errors_exit_codes(tmp_path, capsys):
    assert cli.main(["run", "--model", "kerr", "--set", "dt=-1"]) == 2
    assert "dt" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert cli.main(["run", "--model", "kerr", "--set", "n_traj=2", "--set", "t_max=0.01",
                     "--set", "sample_every=10", "--out", str(tmp_path / "no" / "dir.csv")]) == 3


def test_verify_exit_codes(capsys):
    assert cli.main(["verify", "--model", "kerr", "--order", "2"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert cli.main(["verify", "--model", "free_expansion", "--order", "1"]) == 0
    assert cli.main(["verify", "--model", "genkerr", "--order", "3", "--states", "5"]) == 0
    capsys.readouterr()
    assert cli.main(["verify", "--model", "genkerr", "--set", "noise_order=2", "--order", "3", "--states", "3"]) == 1
    assert "FAIL" in capsys.readouterr().out
    assert cli.main(["verify", "--model", "kerr", "--order", "5"]) == 2


def test_verify_kerr_third_order_passes():
    text, passed = cli.verify("kerr", max_order=3, n_states=5)
    assert passed
    assert "a^3" in text


def test_presets_listing(capsys):
    assert cli.main(["presets"]) == 0
    out = capsys.readouterr().out
    assert out.count("\n") == len(PRESETS)
    assert "fig1" in out
