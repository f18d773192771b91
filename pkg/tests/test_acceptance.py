"""One test per acceptance criterion, at the stated sizes and tolerances.

Each test records a pass/fail line that is printed in the terminal summary.
"""

import json
import subprocess
import sys
import time

import pytest

from bbmd import reproduce
from bbmd.reproduce import ReproduceConfig

from conftest import ACCEPTANCE

FULL = ReproduceConfig()


def record(k, ok, detail):
    ACCEPTANCE[k] = (ok, detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def test_criterion_1_truth_table():
    t = time.perf_counter()
    (rec,) = reproduce.truth_table(FULL)
    elapsed = time.perf_counter() - t
    record(1, rec["pass"] and elapsed < 5, f"mismatches={rec['mismatches']} of {rec['inputs']}, {elapsed:.2f}s (< 5s)")


def test_criterion_2_closure():
    (rec,) = reproduce.closure(FULL)
    record(2, rec["pass"], f"mismatches={rec['mismatches']} over 65536 sets, closure size {rec['feasible_sets']}")


def test_criterion_3_matching():
    (rec,) = reproduce.matching_engine(FULL)
    record(3, rec["pass"], f"mismatches={rec['mismatches']} over {rec['matrices']} matrices up to 7x7")


def test_criterion_4_ic_small():
    recs = list(reproduce.ic_small(FULL))
    bad = [r for r in recs if not r["pass"]]
    witness = recs[-1]["violation"]
    record(
        4,
        not bad,
        f"{len(recs) - 1} MIDR passes on n<=12 fixtures; passthrough witness slack={witness and witness['slack']}",
    )


def test_criterion_5_two_subsets():
    (rec,) = reproduce.two_subsets(FULL)
    record(5, rec["pass"], f"disagreements={rec['disagreements']} over {rec['rules']} rules ({rec['monotone_rules']} monotone)")


def test_criterion_6_welfare_floor():
    recs = list(reproduce.welfare_floor(FULL))
    held = [r["fixture"] for r in recs if r["premise_holds"]]
    record(6, all(r["pass"] for r in recs), f"floor holds on all {len(held)} fixtures whose premise holds")


def test_criterion_7_chernoff():
    recs = list(reproduce.chernoff(FULL))
    record(7, len(recs) == 20 and all(r["pass"] for r in recs), f"{sum(r['pass'] for r in recs)}/20 cases within bound")


def test_criterion_8_calibration():
    (rec,) = reproduce.calibration(FULL)
    record(8, rec["pass"], f"coverage={rec['coverage']:.3f} over {rec['trials']} trials (>= 0.90)")


@pytest.mark.slow
def test_criterion_9_trend_and_runtime(tmp_path):
    out = tmp_path / "full.jsonl"
    t = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "bbmd", "reproduce", "--out", str(out)], capture_output=True, text=True
    )
    elapsed = time.perf_counter() - t
    recs = [json.loads(l) for l in out.read_text().splitlines()]
    (trend,) = [r for r in recs if r.get("check") == "degradation trend"]
    ok = trend["pass"] and elapsed < 600 and proc.returncode == 0 and recs[-1]["pass"]
    ratios = ", ".join(f"{r:.3f}" for r in trend["ratios"])
    record(9, ok, f"ratios [{ratios}], inversions={trend['inversions']}, full reproduce {elapsed:.0f}s (< 600s)")


def test_criterion_10_determinism(tmp_path):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({
        "matrices": 50, "rules": 300, "chernoff_trials": 20000, "calibration_trials": 20,
        "calibration_samples": 100, "presample_seeds": 1, "ladder_pairs": 1, "ladder_samples": 100,
        "criteria": [3, 5, 6, 7, 8, 9],
    }))
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.jsonl"
        subprocess.run([sys.executable, "-m", "bbmd", "reproduce", "--config", str(cfg), "--out", str(path)], check=True)
        outs.append(path.read_bytes())
    record(10, outs[0] == outs[1] and len(outs[0]) > 0, f"two runs, {len(outs[0])} bytes each, byte-identical={outs[0] == outs[1]}")
