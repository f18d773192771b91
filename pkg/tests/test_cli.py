import json
import subprocess
import sys

import pytest

from bbmd.cli import main


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, [json.loads(l) for l in out.out.splitlines() if l.strip()], out.err


def test_params(capsys):
    code, recs, _ = run_cli(["params", "--n", "65536"], capsys)
    assert code == 0 and recs[0]["N"] == 776 and recs[0]["eps_ST_N"] == 49


def test_params_infeasible(capsys):
    code, _, err = run_cli(["params", "--n", "8"], capsys)
    assert code == 2 and "error" in err


def test_verify_violation_exit(capsys):
    code, recs, _ = run_cli(["verify", "--fixture", "n16", "--rule", "passthrough", "--max-size", "6"], capsys)
    assert code == 1
    v = recs[0]["violation"]
    assert v["witness"][0]["support"] == [3, 4, 5] and v["kind"] == "midr"


def test_verify_pass(capsys):
    code, recs, _ = run_cli(["verify", "--fixture", "n10", "--rule", "exhaustive", "--mode", "downward-closed"], capsys)
    assert code == 0 and recs[0]["pass"]


def test_verify_matching_seeds(capsys):
    code, recs, _ = run_cli(
        ["verify", "--fixture", "n8", "--rule", "presampled", "--check", "matching", "--k", "2", "--seeds", "3", "--q", "8"],
        capsys,
    )
    assert code == 0 and recs[0]["subsets"] == 256 * 255 // 2


def test_welfare_exact(capsys):
    code, recs, _ = run_cli(["welfare", "--fixture", "n16"], capsys)
    assert code == 0 and recs[0]["exact"] == "1042420948723925875563435/302231454903657293676544"


def test_attack_outputs(tmp_path, capsys):
    out, table = tmp_path / "rows.jsonl", tmp_path / "rows.csv"
    code = main(["attack", "--fixture", "n16", "--pairs", "2", "--samples", "40", "--out", str(out), "--csv", str(table)])
    assert code == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(rows) == 2 and rows[0]["status"] == "ok"
    assert table.read_text().splitlines()[0].startswith("row,status")


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"n": 16, "N": 6, "eps_ST_N": 1, "eps_T_N": 2}, "S": [1, 2, 3], "T": [3, 4, 5], "rule": "empty"}))
    code, recs, _ = run_cli(["welfare", "--config", str(cfg)], capsys)
    assert code == 0 and recs[0]["mean"] == 0


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["welfare", "--config", str(bad)]) == 2
    assert main(["welfare", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["verify", "--fixture", "n16", "--rule", "wat"]) == 2
    assert main(["attack", "--fixture", "n64", "--transformation", "nope", "--pairs", "1"]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "bbmd", "params", "--n", "1024"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["N"] == 64
