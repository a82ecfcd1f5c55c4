import json
import subprocess
import sys

import pytest

from evlab.cli import ConfigError, main, parse_config


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


SMALL_EI = {"map": "doubling-fixed", "n": 2000, "trials": 400, "tau": 1.0, "estimator": {"ulam_k": 256}}


@pytest.mark.parametrize("raw,path", [
    ({"map": "doubling", "zeta": 0, "bogus": 1}, "config.bogus"),
    ({"map": "nowhere", "zeta": 0}, "config.map"),
    ({"map": "doubling"}, "config.zeta"),
    ({"map": "doubling", "zeta": "1/x"}, "config.zeta"),
    ({"map": "doubling", "zeta": 0, "estimator": {"bogus": 1}}, "config.estimator.bogus"),
    ({"map": "doubling", "zeta": 0, "estimator": {"p": 1.5}}, "config.estimator.p"),
    ({"map": "doubling", "zeta": 0, "noise": {"eps": 0.1}}, "config.noise"),
    ({"map": "doubling", "zeta": 0, "n": -5}, "config.n"),
    ({"map": "doubling", "zeta": [0, 0]}, "config.zeta"),
    ({"map": {"type": "piecewise_affine", "branches": [{"a": 0, "b": 1}]}, "zeta": 0}, "config.map.branches[0]"),
])
def test_config_errors_name_the_field(raw, path):
    with pytest.raises(ConfigError) as err:
        parse_config(raw, "ei", seed=1)
    assert err.value.path == path


def test_seed_required_for_random_commands():
    with pytest.raises(ConfigError) as err:
        parse_config({"map": "doubling", "zeta": 0}, "ei")
    assert err.value.path == "config.seed"
    assert parse_config({"map": "doubling", "zeta": 0}, "classify").seed is None


def test_catalogue_entry_supplies_point_and_noise():
    cfg = parse_config({"map": "doubling-noisy"}, "ei", seed=1)
    assert cfg.zeta == 0 and cfg.noise.epsilon == pytest.approx(0.05)
    assert cfg.digest() == parse_config({"map": "doubling-noisy"}, "ei", seed=1).digest()
    assert cfg.digest() != parse_config({"map": "doubling-noisy"}, "ei", seed=2).digest()


def test_config_error_exit_code(tmp_path, capsys):
    p = write(tmp_path, {"map": "doubling", "zeta": 0, "estimator": {"bogus": 1}})
    assert main(["ei", "--config", str(p), "--seed", "1", "--out", str(tmp_path / "o")]) == 2
    assert "config.estimator.bogus: unknown option" in capsys.readouterr().err
    assert main(["ei", "--config", str(tmp_path / "missing.json"), "--seed", "1"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["ei", "--config", str(bad), "--seed", "1"]) == 2


def test_report_is_byte_reproducible(tmp_path):
    p = write(tmp_path, SMALL_EI)
    outs = []
    for i, threads in enumerate(("1", "1", "3")):
        out = tmp_path / f"run{i}"
        main(["ei", "--config", str(p), "--seed", "7", "--out", str(out), "--threads", threads])
        outs.append((out / "report.json").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    report = json.loads(outs[0])
    assert report["config"]["seed"] == 7 and len(report["config_hash"]) == 64
    assert (tmp_path / "run0" / "timing.json").exists()
    assert "wall" not in outs[0].decode()


def test_exit_code_reflects_verdicts(tmp_path):
    loose = dict(SMALL_EI, estimator={"ulam_k": 256, "tol": 1.0})
    tight = dict(SMALL_EI, estimator={"ulam_k": 256, "tol": 1e-9})
    assert main(["ei", "--config", str(write(tmp_path, loose, "a.json")), "--seed", "3",
                 "--out", str(tmp_path / "a")]) == 0
    assert main(["ei", "--config", str(write(tmp_path, tight, "b.json")), "--seed", "3",
                 "--out", str(tmp_path / "b")]) == 1
    report = json.loads((tmp_path / "b" / "report.json").read_text())
    assert report["passed"] is False


def test_seed_flag_overrides_config(tmp_path):
    p = write(tmp_path, dict(SMALL_EI, seed=1))
    main(["ei", "--config", str(p), "--seed", "9", "--out", str(tmp_path / "o")])
    assert json.loads((tmp_path / "o" / "report.json").read_text())["config"]["seed"] == 9


def test_classify_prints_json(tmp_path, capsys):
    code = main(["classify", "--map", "discontinuous", "--zeta", "0", "--out", str(tmp_path / "c")])
    assert code == 0
    out = capsys.readouterr().out
    d = json.loads(out[: out.rindex("}") + 1])
    assert d["kind"] == "nonsimple-singly-returning"


def test_small_dichotomy(tmp_path):
    cfg = {"n": 2000, "trials": 600, "estimator": {"ulam_k": 256, "points": [0, "1/3"], "tol": 0.08}}
    code = main(["dichotomy", "--config", str(write(tmp_path, cfg)), "--seed", "5", "--out", str(tmp_path / "d")])
    report = json.loads((tmp_path / "d" / "report.json").read_text())
    assert code == (0 if report["passed"] else 1)
    assert report["passed"], report["verdicts"]
    assert any((tmp_path / "d").glob("*.csv"))


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "evlab", "classify", "--map", "doubling", "--zeta", "1/3",
                        "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert r.returncode == 0
    assert "simple-periodic" in r.stdout
