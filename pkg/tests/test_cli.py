import json

import numpy as np
import pytest

from qdynent.cli import DEFAULTS, EXPERIMENTS, config_hash, main, resolve_config
from qdynent.ledger import EntropyLedger

SMALL = {
    "fig2a": {"L": [4], "n": 3},
    "fig2b": {"L": [4, 6], "n": 3},
    "fig2c": {"L": [4], "n": 3},
    "fig2d": {"L": [4], "n": 3},
    "fig3": {"max_iter": 3000},
    "bounds": {"starts": ["untight"]},
    "converge": {"n_modes": 60, "n": 200, "spectral_points": 2001, "spectral_omega_max": 20.0,
                 "tolerance": 0.1},
    "oracle": {"cases": [{"n": 2}]},
}


def run_cli(tmp_path, name, params, tag="a", threads=1):
    cfg = tmp_path / f"{name}-{tag}.json"
    cfg.write_text(json.dumps({"experiment": name, "seed": 7, "params": params}))
    out = tmp_path / f"{name}-{tag}"
    code = main([name, "--config", str(cfg), "--out", str(out), "--threads", str(threads)])
    return code, out


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_subcommand_runs_and_writes_manifest(tmp_path, name, capsys):
    code, out = run_cli(tmp_path, name, SMALL[name])
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["experiment"] == name
    assert man["config"]["seed"] == 7
    assert man["config_sha256"] == config_hash(man["config"])
    assert set(man["versions"]) >= {"qdynent", "numpy", "scipy"}
    for f in man["files"]:
        assert (out / f).exists()
    for f in out.glob("*.csv"):
        assert f.read_text().startswith("# ")
    assert json.loads(capsys.readouterr().out) == man["results"]


def test_fig2a_table(tmp_path):
    code, out = run_cli(tmp_path, "fig2a", {"L": [4, 6], "n": 4})
    rows = [ln.split(",") for ln in (out / "fig2a.csv").read_text().splitlines()
            if not ln.startswith("#")]
    assert rows[0] == ["L", "s", "J_s"]
    assert [r[0] for r in rows[1:]] == ["4"] * 4 + ["6"] * 4
    for r in rows[1:]:
        assert len(r[2].replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 12
    led = EntropyLedger.from_csv(out / "fig2a_ledger_L6.csv")
    assert led.n == 4
    assert led.check() == []


def test_bounds_contents(tmp_path):
    code, out = run_cli(tmp_path, "bounds", {})
    data = json.loads((out / "bounds.json").read_text())
    assert round(data["untight"], 2) == 0.57
    assert data["purification"] == pytest.approx(np.pi / 8, abs=1e-8)
    assert 0 < data["tight"] < data["untight"]
    assert data["reference_tight"] == 0.375


def test_rerun_is_byte_identical(tmp_path):
    _, a = run_cli(tmp_path, "fig2b", SMALL["fig2b"], "a", threads=1)
    _, b = run_cli(tmp_path, "fig2b", SMALL["fig2b"], "b", threads=2)
    for f in sorted(a.glob("*.csv")):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_converge_from_spectrum_file(tmp_path):
    w = np.linspace(0, 20, 1001)
    spec = tmp_path / "gk.csv"
    body = "".join(f"{float(a)!r},{float(np.exp(-a * a / 8))!r}\n" for a in w)
    spec.write_text("omega,G_K\n" + body)
    code, out = run_cli(tmp_path, "converge", {"spectrum": str(spec), "n_modes": 60, "n": 200,
                                               "tolerance": 0.1})
    assert code == 0
    res = json.loads((out / "manifest.json").read_text())["results"]
    assert res["S_CNT_per_t_rel_diff"] < 0.05


def test_defaults_resolve():
    for name in EXPERIMENTS:
        cfg = resolve_config(name, None)
        assert cfg["params"] == json.loads(json.dumps(DEFAULTS[name]))
    assert resolve_config("fig2a", None)["params"]["gamma"] == 0.75


@pytest.mark.parametrize("name,params,doc_extra", [
    ("fig2a", {"L": [1]}, {}),
    ("fig2a", {"gamma": 2.0}, {}),
    ("fig2b", {"bogus": 1}, {}),
    ("fig3", {"y_max": 10}, {}),
    ("converge", {"spectral_points": 2000}, {}),
    ("converge", {"spectrum": "/nonexistent.csv"}, {}),
    ("oracle", {"cases": []}, {}),
    ("bounds", {}, {"experiment": "fig3"}),
])
def test_validation_errors_exit_2(tmp_path, name, params, doc_extra, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": params, **doc_extra}))
    assert main([name, "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "validation error" in capsys.readouterr().err
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_unreadable_config_and_threads(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["bounds", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["bounds", "--threads", "0", "--out", str(tmp_path / "o")]) == 2


def test_budget_exit_3(tmp_path, capsys):
    code, out = run_cli(tmp_path, "fig2a", {"L": [4], "n": 30})
    assert code == 3
    assert "required" in capsys.readouterr().err
    assert not out.exists()


def test_numerical_failure_exit_4(tmp_path, capsys):
    w = np.linspace(0, 10, 21)
    g = np.where(np.isin(np.arange(21), [5, 13]), 80.0, 0.0)
    spec = tmp_path / "spiky.csv"
    spec.write_text("".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(w, g)))
    code, _ = run_cli(tmp_path, "converge", {"spectrum": str(spec), "n_modes": 20, "n": 50})
    assert code == 4
    assert "numerical failure" in capsys.readouterr().err
