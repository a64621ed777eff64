import io
import json

import numpy as np
import pytest

from interlacements import FiniteSet, get_table, sample_interlacement
from interlacements.cli import (EXIT_NUMERICAL, EXIT_OK, EXIT_PRECONDITION, EXIT_USAGE,
                                INF_SENTINEL, THREADS_ENV, ExperimentConfig, build_parser,
                                main, quantize_levels, read_grid, resolve_config)


def call(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], stdout=out)
    return code, out.getvalue()


def test_config_roundtrip():
    cfg = ExperimentConfig("crossing", {"kind": "vacant", "u": [1.0, 2.0], "workers": 3}, 7,
                           "x.csv", 3)
    back = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg and back.digest() == cfg.digest()
    # parallelism and output paths do not change the digest
    other = ExperimentConfig("crossing", {"kind": "vacant", "u": [1.0, 2.0], "workers": 1}, 7,
                             None, 1)
    assert other.digest() == cfg.digest()
    assert ExperimentConfig("crossing", {"kind": "vacant", "u": [1.0]}, 7).digest() \
        != cfg.digest()


def test_green_value_and_roundtrip(g0_d3):
    code, text = call("green", "--dim", 3, "--point", "0,0,0")
    assert code == EXIT_OK
    data = json.loads(text)
    assert data["value"] == g0_d3 and data["error"] <= 1e-10
    cfg = ExperimentConfig.from_dict(data["manifest"]["config"])
    args = ["green"] + [f"--{k}={v if not isinstance(v, list) else ','.join(map(str, v))}"
                        for k, v in cfg.params.items()]
    assert json.loads(call(*args)[1])["value"] == data["value"]


def test_usage_errors():
    assert call("frobnicate")[0] == EXIT_USAGE
    assert call()[0] == EXIT_USAGE
    assert call("green", "--dim", 2, "--point", "0,0")[0] == EXIT_USAGE
    assert call("green", "--dim", 3, "--point", "0,0")[0] == EXIT_USAGE
    assert call("green", "--dim", "three", "--point", "0,0,0")[0] == EXIT_USAGE
    assert call("crossing", "--kind", "both", "--u", "1", "--trials", 2, "--seed", 1)[0] \
        == EXIT_USAGE
    assert call("crossing", "--kind", "vacant", "--u", "1", "--trials", 2)[0] == EXIT_USAGE
    assert call("scales", "--dim", 3, "--L0", 10, "--nmax", 2, "--u0", 1)[0] == EXIT_USAGE
    assert call("ustar", "--bracket", "1", "--trials", 2, "--seed", 1)[0] == EXIT_USAGE


def test_numerical_and_precondition_codes():
    assert call("green", "--dim", 3, "--point", "1,0,0", "--tol", 1e-30)[0] == EXIT_NUMERICAL
    assert call("u1", "--dim", 5, "--m", 1, "--lambda", 3.0)[0] == EXIT_PRECONDITION
    assert call("verify", "--kind", "planar", "--pn", "/nonexistent.csv",
                "--constants", "c5=1,c6=1", "--dim", 7, "--L0", 10)[0] == EXIT_USAGE


def test_capacity_builtins(tmp_path):
    code, text = call("capacity", "--dim", 3, "--set", "builtin:pair:1,0,0")
    g = get_table(3)
    assert code == EXIT_OK
    assert json.loads(text)["capacity"] == pytest.approx(
        2 / (g.value((0, 0, 0)) + g.value((1, 0, 0))), rel=1e-12)
    f = tmp_path / "set.txt"
    f.write_text("0,0,0\n1,0,0\n")
    assert json.loads(call("capacity", "--dim", 3, "--set", f)[1])["capacity"] == \
        json.loads(text)["capacity"]
    assert call("capacity", "--dim", 3, "--set", "builtin:cube:2")[0] == EXIT_USAGE


def test_crossing_identical_across_workers(tmp_path):
    base = ["crossing", "--kind", "vacant", "--L0", 4, "--u", "1,2,3", "--trials", 4,
            "--seed", 9]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert call(*base, "--workers", 1, "--out", a)[0] == EXIT_OK
    assert call(*base, "--workers", 8, "--out", b)[0] == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("# digest=") and "seed=9" in lines[0]
    assert lines[2] == "u,level,trials,successes,lo95,hi95"
    assert len(lines) == 6


def test_thread_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    args = build_parser().parse_args(["eta", "--M", "2", "--u", "1", "--trials", "2",
                                      "--seed", "1"])
    assert resolve_config(args).workers == 3
    monkeypatch.setenv(THREADS_ENV, "0")
    assert call("eta", "--M", "2", "--u", "1", "--trials", 2, "--seed", 1)[0] == EXIT_USAGE


def test_toml_config_overridden_by_flags(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('dim = 3\npoint = "2,1,0"\n')
    code, text = call("green", "--config", cfg)
    assert json.loads(text)["point"] == [2, 1, 0]
    code, text = call("green", "--config", cfg, "--point", "1,1,1")
    assert json.loads(text)["point"] == [1, 1, 1]
    cfg.write_text('dim = 3\npoint = "2,1,0"\ncolour = "red"\n')
    assert call("green", "--config", cfg)[0] == EXIT_USAGE
    cfg.write_text('dim = [3\n')
    assert call("green", "--config", cfg)[0] == EXIT_USAGE


def test_sample_dump_roundtrip(tmp_path):
    prefix = tmp_path / "occ"
    code, text = call("sample", "--dim", 3, "--box", 4, "--umax", 2.0, "--seed", 5,
                      "--mode", "reentry", "--keep-paths", "--out", prefix)
    assert code == EXIT_OK
    grid = read_grid(prefix.with_suffix(".bin"))
    meta = json.loads(prefix.with_suffix(".json").read_text())
    assert grid["digest"] == meta["manifest"]["digest"]
    W = FiniteSet.box(3, 0, 4)
    occ = sample_interlacement(W, 2.0, meta["shell"], 5, mode="reentry")
    np.testing.assert_array_equal(grid["codes"], quantize_levels(occ.levels, 2.0))
    assert grid["n_trajectories"] == occ.n_trajectories
    # sublevel sets on the quantization grid are exact
    for j in (1, 1 << 18, 1 << 19, 1 << 20):
        u = j * 2.0 / (1 << 20)
        np.testing.assert_array_equal(grid["codes"] <= j, occ.levels <= u)
    paths = np.load(prefix.with_suffix(".paths.npz"))
    assert len(paths["labels"]) == occ.n_trajectories
    again = tmp_path / "again"
    call("sample", "--dim", 3, "--box", 4, "--umax", 2.0, "--seed", 5, "--mode", "reentry",
         "--keep-paths", "--out", again)
    assert again.with_suffix(".bin").read_bytes() == prefix.with_suffix(".bin").read_bytes()


def test_quantize_levels_edges():
    lev = np.array([np.inf, 1e-12, 1.0, 2.0, 2.0 / (1 << 20)])
    codes = quantize_levels(lev, 2.0)
    assert codes.tolist() == [INF_SENTINEL, 1, 1 << 19, 1 << 20, 1]


def test_audit_ok_and_tampering(tmp_path):
    call("sample", "--dim", 3, "--box", 3, "--umax", 1.0, "--seed", 1, "--out", tmp_path / "s")
    call("peierls", "--dmin", 16, "--dmax", 19, "--out", tmp_path / "p.csv")
    call("crossing", "--kind", "occupied", "--L0", 3, "--u", "1", "--trials", 2, "--seed", 2,
         "--out", tmp_path / "c.csv")
    code, text = call("audit", "--paths", tmp_path)
    report = json.loads(text)
    assert code == EXIT_OK and report["ok"] and len(report["files"]) == 4
    csv_file = tmp_path / "c.csv"
    csv_file.write_text(csv_file.read_text().replace('"trials": 2', '"trials": 3'))
    (tmp_path / "s.bin").write_bytes((tmp_path / "s.bin").read_bytes()[:-4] + b"\0\0\0\0")
    code, text = call("audit", "--paths", tmp_path)
    report = json.loads(text)
    assert code == EXIT_PRECONDITION and not report["ok"]
    assert report["files"][str(csv_file)]
    assert report["files"][str(tmp_path / "s.json")]


def test_peierls_and_u1_outputs():
    code, text = call("peierls", "--dmin", 16, "--dmax", 19)
    rows = text.splitlines()[3:]
    assert [r.split(",")[2] for r in rows] == ["False", "False", "True", "True"]
    data = json.loads(call("u1", "--dim", 18, "--m", 2, "--lambda", 0.5)[1])
    assert data["u1"] > 0 and data["lambda_tilde"] > 0.5


def test_scales_and_verify(tmp_path):
    data = json.loads(call("scales", "--dim", 3, "--L0", 1000, "--nmax", 2)[1])
    assert data["L"][:2] == ["1000", "100000"] and data["ell"][0] == 100
    pn = tmp_path / "pn.csv"
    pn.write_text("n,p\n0,0\n1,0\n")
    code, text = call("verify", "--kind", "vacant", "--pn", pn, "--dim", 3, "--L0", 10,
                      "--constants", "c2=1,c3=1,u0=1,r=3600,c1=0.1")
    rep = json.loads(text)
    assert code == EXIT_OK and rep["condition_r"] == "holds with equality"
    assert call("verify", "--kind", "vacant", "--pn", pn, "--dim", 3, "--L0", 10,
                "--constants", "c2=1")[0] == EXIT_USAGE
    pn.write_text("q,n\n0,0\n")
    assert call("verify", "--kind", "planar", "--pn", pn, "--dim", 7, "--L0", 10,
                "--constants", "c5=1,c6=1")[0] == EXIT_USAGE


def test_eta_and_ustar_outputs():
    code, text = call("eta", "--M", "2,3", "--u", "0,1", "--trials", 3, "--seed", 4)
    lines = text.splitlines()
    assert code == EXIT_OK and lines[2] == "M,u,trials,successes,lo95,hi95"
    assert lines[3].startswith("2,0.0,3,3,")
    code, text = call("ustar", "--bracket", "0.1,6", "--M", 3, "--trials", 4, "--iters", 3,
                      "--seed", 4)
    data = json.loads(text)
    assert code == EXIT_OK and data["interval"][0] < data["interval"][1]


def test_module_entry_point():
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "interlacements", "peierls", "--dmin", "18",
                           "--dmax", "18"], capture_output=True, text=True, check=False)
    assert proc.returncode == EXIT_OK and proc.stdout.splitlines()[-1].startswith("18,")
    proc = subprocess.run([sys.executable, "-m", "interlacements", "nope"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == EXIT_USAGE and "invalid choice" in proc.stderr
