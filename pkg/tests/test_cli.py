import json

import pytest

from hmc_convergence.cli import ExperimentConfig, main, resolve_config
from hmc_convergence.errors import InputError


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_config_roundtrip():
    cfg = ExperimentConfig(potential="logcosh", dim=7, kappa=12.0, epsilons=[0.1, 0.05], seed=3)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"dimension": 3})


def test_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv("HMC_THREADS", raising=False)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dim": 5, "seed": 9, "L": 50.0}))
    cfg = resolve_config("contraction", {"config": str(path), "seed": 4})
    assert cfg.dim == 5  # file beats default
    assert cfg.seed == 4  # flag beats file
    assert cfg.kappa is None and cfg.L == 50.0  # file L replaces default kappa
    assert cfg.potential == "logcosh"  # default kept
    assert cfg.threads == 1


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("HMC_THREADS", "3")
    assert resolve_config("sample", {}).threads == 3
    assert resolve_config("sample", {"threads": 2}).threads == 2


def test_eps_list_goes_to_epsilons():
    cfg = resolve_config("gradscaling", {"eps": [0.1, 0.05]})
    assert cfg.epsilons == [0.1, 0.05]


def test_sample_outputs_byte_identical(tmp_path, capsys):
    args = ["sample", "--dim", "3", "--kappa", "4", "--eps", "0.5", "--steps", "5", "--chains", "2", "--seed", "1"]
    code1, rep1 = run(capsys, *args, "--out", str(tmp_path / "a"))
    code2, rep2 = run(capsys, *args, "--out", str(tmp_path / "b"))
    assert code1 == code2 == 0
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    assert a == (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert a.splitlines()[0].startswith(b"chain")
    assert len(a.splitlines()) == 1 + 2 * 6
    assert set(rep1) >= {"command", "config", "git", "duration_s", "exit_code", "results"}


def test_lowerbound_command(tmp_path, capsys):
    code, rep = run(capsys, "lowerbound", "--samples", "200000", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "autocorr.csv").exists()


def test_contraction_command(tmp_path, capsys):
    code, _ = run(capsys, "contraction", "--kappa", "10", "--dim", "3", "--pairs", "20", "--t-points", "8",
                  "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "contraction.csv").exists()


def test_odecheck_command(tmp_path, capsys):
    code, _ = run(capsys, "odecheck", "--kappa", "1", "--delta", "1e-8", "--trials", "3", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "odecheck.csv").exists()


def test_w2_and_gradscaling_commands(tmp_path, capsys):
    code, _ = run(capsys, "w2", "--dim", "3", "--kappa", "2", "--eps", "0.5", "--replicas", "500",
                  "--out", str(tmp_path))
    assert code == 0
    code, _ = run(capsys, "gradscaling", "--dim", "10", "--kappas", "4,16", "--eps", "0.5", "--steps", "3",
                  "--out", str(tmp_path))
    assert (tmp_path / "gradscaling.csv").exists()


@pytest.mark.parametrize("argv", [
    ["sample", "--eps", "10", "--dim", "4"],
    ["contraction", "--t-max", "1"],
    ["contraction", "--pairs", "0"],
    ["sample", "--mu", "-1"],
])
def test_config_errors_exit_1(tmp_path, capsys, argv):
    assert main(argv + ["--out", str(tmp_path)]) == 1
    assert "config error" in capsys.readouterr().err


def test_bad_config_file(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["sample", "--config", str(path), "--out", str(tmp_path)]) == 1
