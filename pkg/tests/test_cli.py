import json

import pytest

from dyadweight import cli
from dyadweight.bellman import build_table
from dyadweight.martingale import NormEstimate


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


@pytest.fixture
def step_file(tmp_path):
    p = tmp_path / "step.json"
    p.write_text("[2.0, 0.5]")
    return p


@pytest.fixture
def const_file(tmp_path):
    p = tmp_path / "const.json"
    p.write_text(json.dumps({"values": [1.0] * 8}))
    return p


@pytest.mark.parametrize("value,text", [(1.0, "1"), (1.5625, "1.5625"), (1 / 3, "0.333333333333")])
def test_number_formats(value, text):
    assert cli.fmt(value) == text
    assert cli.fmt_value(1.0) == "1.0"


def test_char_step_weight(capsys, step_file):
    code, out = run(capsys, "char", "--weight", step_file)
    assert code == 0
    assert out.out.splitlines() == ["1.5625", "delta=0.5625"]


def test_char_constant_weight(capsys, const_file):
    code, out = run(capsys, "char", "--weight", const_file)
    assert out.out.splitlines() == ["1.0", "delta=0"] and code == 0


@pytest.mark.parametrize("kind", ["poisson", "heat"])
def test_char_continuous_kinds(capsys, step_file, kind):
    code, out = run(capsys, "char", "--weight", step_file, "--kind", kind)
    assert code == 0 and float(out.out.splitlines()[0]) > 1


def test_missing_file_exit_code(capsys, tmp_path):
    code, out = run(capsys, "char", "--weight", tmp_path / "nope.json")
    assert code == 2 and "no such file" in out.err


def test_malformed_json_exit_code(capsys, tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    assert run(capsys, "char", "--weight", tmp_path / "bad.json")[0] == 2


def test_invalid_weight_exit_code(capsys, tmp_path):
    (tmp_path / "neg.json").write_text("[1.0, -1.0]")
    code, out = run(capsys, "char", "--weight", tmp_path / "neg.json")
    assert code == 3 and "invalid weight" in out.err


def test_mnorm_step_weight(capsys, step_file, tmp_path):
    code, out = run(capsys, "mnorm", "--weight", step_file, "--out", tmp_path / "m.json")
    assert code == 0
    assert "norm=1.25 " in out.out and out.out.strip().endswith("ok")
    saved = json.loads((tmp_path / "m.json").read_text())
    assert saved["norm"] == pytest.approx(1.25) and saved["sigma"] == [1.0]


def test_mnorm_violation_exit_code(capsys, step_file):
    assert run(capsys, "mnorm", "--weight", step_file, "--c", "0.1")[0] == 4


def test_mnorm_bad_sigma(capsys, step_file, tmp_path):
    (tmp_path / "s.json").write_text("[1.0, 0.0, 0.0]")
    assert run(capsys, "mnorm", "--weight", step_file, "--sigma", tmp_path / "s.json")[0] == 2
    (tmp_path / "s.json").write_text("[3.0]")
    assert run(capsys, "mnorm", "--weight", step_file, "--sigma", tmp_path / "s.json")[0] == 2


def test_mnorm_non_convergence_exit_code(capsys, step_file, tmp_path, monkeypatch):
    (tmp_path / "s.json").write_text("[1.0]")
    monkeypatch.setattr("dyadweight.martingale.weighted_norm",
                        lambda *a, **k: NormEstimate(1.0, "power-iteration", 3, 1.0, False))
    code, out = run(capsys, "mnorm", "--weight", step_file, "--sigma", tmp_path / "s.json", "--method", "power")
    assert code == 5 and "did not converge" in out.err


def test_hnorm_constant_weight(capsys, const_file):
    code, out = run(capsys, "hnorm", "--weight", const_file, "--n", 1024)
    assert code == 0 and "norm=1 " in out.out


def test_carleson_constant_weight(capsys, const_file):
    code, out = run(capsys, "carleson", "--weight", const_file)
    assert code == 0
    assert out.out.strip() == "lhs=0 rhs=0 c_pack=0 c_embed=0 ok"


def test_carleson_step_weight(capsys, step_file):
    code, out = run(capsys, "carleson", "--weight", step_file)
    assert code == 0 and out.out.startswith("lhs=0.36 rhs=0.892574205257")


def test_sweep_writes_files(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("DYADWEIGHT_THREADS", "1")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"family": "haar-bump", "epsilons": [0.05, 0.1, 0.2], "depth": 4}))
    code, out = run(capsys, "sweep", "--config", cfg, "--svg")
    assert code == 0 and out.out.strip().endswith("ok")
    assert all((tmp_path / f"cfg.{ext}").exists() for ext in ("json", "csv", "svg"))
    code, out = run(capsys, "report", "--in", tmp_path / "cfg.json", "--out", tmp_path / "r.svg")
    assert code == 0 and (tmp_path / "r.svg").read_text().startswith("<svg")


def test_sweep_with_zero_epsilon(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("DYADWEIGHT_THREADS", "1")
    cfg = tmp_path / "z.json"
    cfg.write_text(json.dumps({"family": "step", "epsilons": [0.0], "depth": 3}))
    code, out = run(capsys, "sweep", "--config", cfg)
    assert code == 0 and "fit skipped" in out.out


def test_sweep_bad_config(capsys, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"family": "step", "epsilons": [0.2, 0.1]}))
    assert run(capsys, "sweep", "--config", cfg)[0] == 2


def test_report_with_no_plottable_records(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("DYADWEIGHT_THREADS", "1")
    cfg = tmp_path / "z.json"
    cfg.write_text(json.dumps({"family": "step", "epsilons": [0.0], "depth": 3}))
    run(capsys, "sweep", "--config", cfg)
    assert run(capsys, "report", "--in", tmp_path / "z.json", "--out", tmp_path / "r.svg")[0] == 2


@pytest.fixture(scope="module")
def table_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("bellman") / "t.json"
    build_table(1.05, 2, n_xy=9, n_p=3, restarts=8).save(path)
    return path


def test_bellman_build_and_verify(capsys, tmp_path, table_file):
    code, out = run(capsys, "bellman", "build", "--Q", 1.05, "--depth", 1, "--n-xy", 9, "--n-p", 3,
                    "--restarts", 8, "--out", tmp_path / "b.json")
    assert code == 0 and (tmp_path / "b.json").exists()
    code, out = run(capsys, "bellman", "verify", "--table", table_file, "--c", 0.83, "--samples", 500)
    assert code == 0 and "range_violations=0/243" in out.out


def test_bellman_verify_corrupted_table(capsys, tmp_path, table_file):
    d = json.loads(table_file.read_text())
    d["values"][-1][40] = 5.0
    (tmp_path / "bad.json").write_text(json.dumps(d))
    code, out = run(capsys, "bellman", "verify", "--table", tmp_path / "bad.json", "--c", 0.83, "--samples", 200)
    assert code == 4 and "violated" in out.out


def test_bellman_verify_wrong_file(capsys, step_file):
    assert run(capsys, "bellman", "verify", "--table", step_file, "--c", 1)[0] == 2


def test_pairing_heat_on_files(capsys, tmp_path):
    from dyadweight.continuum import random_bump_pairs

    phi, psi = random_bump_pairs(1, seed=2, n=1024)[0]
    phi.to_csv(tmp_path / "phi.csv")
    psi.to_csv(tmp_path / "psi.csv")
    code, out = run(capsys, "pairing", "--phi", tmp_path / "phi.csv", "--psi", tmp_path / "psi.csv",
                    "--kind", "heat", "--n-t", 64)
    assert code == 0 and "pairs=1" in out.out


def test_pairing_needs_both_files(capsys, tmp_path):
    assert run(capsys, "pairing", "--phi", tmp_path / "phi.csv")[0] == 2


def test_pairing_inequality_counterexample_exit_code(capsys, tmp_path):
    from dyadweight.continuum import GridFunction, gaussian, hilbert_transform

    phi = GridFunction.from_callable(gaussian(), 1024)
    psi = phi.with_samples(hilbert_transform(phi, "pv").samples)
    phi.to_csv(tmp_path / "phi.csv")
    psi.to_csv(tmp_path / "psi.csv")
    code, out = run(capsys, "pairing", "--phi", tmp_path / "phi.csv", "--psi", tmp_path / "psi.csv",
                    "--n-t", 64)
    assert code == 4 and "failures=1" in out.out


def test_help(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
    assert "bellman" in capsys.readouterr().out


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2
