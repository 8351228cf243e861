import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from codedslice import cli
from codedslice.analytic import predict_slice
from codedslice import config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SMALL = """
network: {links: 6, erasure_prob: 0.2, rtt: 20}
slices:
  - {name: a, protocol: rlnc, generation_size: 10, count: 2, requirement: {max_inorder_delay: 40}}
  - {name: b, protocol: srarq, count: 4, requirement: {min_goodput: 3}}
simulation: {packets: 200, trials: 3, seed: 5}
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_is_byte_identical(small, tmp_path):
    for run in ("a", "b"):
        assert cli.main(["simulate", "--config", str(small), "--trials", "1",
                         "--seed", "17", "--out", str(tmp_path / run)]) == 0
    a = (tmp_path / "a" / "simulate.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate.csv").read_bytes()
    header = a.decode().splitlines()[0]
    assert header == ",".join(cli.harness.REPORT_HEADER)


def test_seed_changes_results(small, tmp_path):
    cli.main(["simulate", "--config", str(small), "--seed", "1", "--out", str(tmp_path / "a")])
    cli.main(["simulate", "--config", str(small), "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "simulate.csv").read_bytes() != \
        (tmp_path / "b" / "simulate.csv").read_bytes()


def test_simulate_json_and_trace(small, tmp_path):
    assert cli.main(["simulate", "--config", str(small), "--format", "json", "--trace",
                     "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "simulate.json").read_text())
    assert [r["slice_id"] for r in rows] == [0, 1]
    assert rows[0]["flags"].startswith("inorder:")
    trace = read_csv(tmp_path / "trace_slice1.csv")
    assert len(trace) == 200
    assert all(int(t["inorder_slot"]) >= int(t["delivered_slot"]) for t in trace)


def test_analytic_overlay_equals_direct_calls(small, tmp_path):
    cli.main(["simulate", "--config", str(small), "--trials", "2", "--out", str(tmp_path)])
    exp = config.load(small)
    for row, spec in zip(read_csv(tmp_path / "simulate.csv"), exp.scenario().slices):
        pred = predict_slice(spec, exp.network)
        assert float(row["analytic_E_D"]) == pred.delay
        assert float(row["analytic_E_G"]) == pred.goodput


def test_analyze_sweep_rows(tmp_path):
    assert cli.main(["analyze", "--config", str(CONFIGS / "example1.yaml"),
                     "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "analyze.csv")
    assert len(rows) == 18
    assert {r["slicing_choice"] for r in rows} == {str(i) for i in range(1, 10)}
    assert len(read_csv(tmp_path / "missing_dof.csv")) == 18


def test_analyze_example2(tmp_path):
    cli.main(["analyze", "--config", str(CONFIGS / "example2.yaml"), "--out", str(tmp_path)])
    rows = read_csv(tmp_path / "analyze.csv")
    assert float(rows[1]["analytic_E_D"]) == pytest.approx(611.11, abs=0.005)
    pmf = read_csv(tmp_path / "missing_dof.csv")[0]
    assert float(pmf["lambda"]) == pytest.approx(6.1)
    assert float(pmf["p_m0"]) == pytest.approx(0.9776, abs=5e-4)


def test_plan_infeasible_exits_zero(tmp_path, capsys):
    assert cli.main(["plan", "--config", str(CONFIGS / "table1_uncoded.yaml"),
                     "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "plan_partitions.csv")
    assert rows[0]["sizes"] == "infeasible"
    assert "infeasible" in capsys.readouterr().out


def test_plan_mixed(tmp_path):
    assert cli.main(["plan", "--config", str(CONFIGS / "table1.yaml"), "--format", "json",
                     "--out", str(tmp_path)]) == 0
    plan = json.loads((tmp_path / "plan.json").read_text())
    sizes = sorted({p["sizes"] for p in plan["partitions"]})
    assert sizes == ["5+15", "6+14", "7+13", "8+12"]
    assert plan["allocations"][0]["needs_simulation"] is True


def test_reproduce_example2(tmp_path):
    assert cli.main(["reproduce", "example2", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "example2" / "comparison.csv")
    assert all(r["status"] == "PASS" for r in rows)
    assert any("1111" in r["note"] for r in rows)


def test_env_sets_default_output(small, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    cli.main(["analyze", "--config", str(small)])
    assert (tmp_path / "env" / "analyze.csv").exists()
    cli.main(["analyze", "--config", str(small), "--out", str(tmp_path / "flag")])
    assert (tmp_path / "flag" / "analyze.csv").exists()


def test_exit_codes(tmp_path, small):
    bad = tmp_path / "bad.yaml"
    bad.write_text("network: {links: 2, erasure_prob: 0.1, rtt: 10}\nslices: []\n")
    assert cli.main(["analyze", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["analyze", "--config", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG
    capped = tmp_path / "capped.yaml"
    capped.write_text(SMALL.replace("seed: 5}", "seed: 5, max_slots: 10}"))
    assert cli.main(["simulate", "--config", str(capped), "--out", str(tmp_path)]) == \
        cli.EXIT_ABORT
    with pytest.raises(SystemExit) as exc:
        cli.main(["reproduce", "table2"])
    assert exc.value.code == cli.EXIT_USAGE
    assert cli.EXIT_CONFIG != cli.EXIT_ABORT


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "codedslice", "reproduce", "example2",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "15/15 checks pass" in proc.stdout
