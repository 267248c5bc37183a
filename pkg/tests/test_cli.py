import argparse
import subprocess
import sys

import pytest

from periodic_qmc.cbc import GeneratingVector
from periodic_qmc.cli import main, parse_decay


def test_parse_decay():
    assert parse_decay("0.1*j^-2") == (0.1, 2.0)
    assert parse_decay(" 1e-1 * j ^ (-4) ") == (0.1, 4.0)
    with pytest.raises(argparse.ArgumentTypeError):
        parse_decay("0.1/j^2")


def test_cbc_then_wce(tmp_path, capsys):
    vec = tmp_path / "z.txt"
    args = ["--n", "67", "--s", "5", "--alpha", "2", "--decay", "0.1*j^-2", "--amin", "1.9"]
    assert main(["cbc", *args, "--out", str(vec)]) == 0
    g = GeneratingVector.read(vec)
    assert g.n == 67 and g.s == 5 and g.z[0] == 1
    capsys.readouterr()
    assert main(["wce", "--vec", str(vec), "--decay", "0.1*j^-2", "--amin", "1.9",
                 "--s", "3", "--dual-check", "20"]) == 0
    out = capsys.readouterr().out
    kernel = float(out.splitlines()[0].split("=")[1])
    dual = float(out.splitlines()[1].split("=")[-1])
    assert kernel == pytest.approx(g.step_values[2], rel=1e-12)
    assert 0 < dual <= kernel


def test_naive_flag_matches(capsys):
    args = ["cbc", "--n", "31", "--s", "3", "--alpha", "2", "--decay", "0.5*j^-2", "--amin", "1"]
    main(args)
    fast = capsys.readouterr().out
    main(args + ["--naive"])
    naive = capsys.readouterr().out
    # same components; the step values agree to rounding
    assert [r.split()[:2] for r in naive.splitlines()] == [r.split()[:2] for r in fast.splitlines()]


def test_errors_return_nonzero(tmp_path, capsys):
    assert main(["cbc", "--n", "15", "--s", "2", "--alpha", "2", "--decay", "0.1*j^-2",
                 "--amin", "1"]) == 2
    assert "cbc_naive" in capsys.readouterr().err
    assert main(["wce", "--vec", str(tmp_path / "missing.txt"), "--decay", "0.1*j^-2",
                 "--amin", "1"]) == 2
    with pytest.raises(SystemExit):
        main(["cbc", "--n", "17"])


def test_fem_rate_with_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"m_list": [2, 3, 4], "m_ref": 5, "record_timings": false}')
    out = tmp_path / "res"
    assert main(["--config", str(cfg), "--out-dir", str(out), "fem-rate",
                 "--problem", "manufactured"]) == 0
    assert (out / "fem-manufactured.csv").exists() and (out / "fem-manufactured.json").exists()
    assert list((out / "cache").glob("ref-*.json"))


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"nlist": [17]}')
    assert main(["--config", str(cfg), "cubature"]) == 2


def test_console_module_entry():
    res = subprocess.run([sys.executable, "-m", "periodic_qmc.cli", "--help"],
                         capture_output=True, text=True, check=True)
    assert "cubature" in res.stdout and "fem-rate" in res.stdout
