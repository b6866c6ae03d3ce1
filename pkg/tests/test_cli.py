import math
import shutil

import pytest
import yaml

from imcf_gap.cli import main
from imcf_gap.scenario import ConfigError, load_scenario, parse_scenario, run_scenario


def write(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


FLAT = {
    "schema_version": 1,
    "name": "flat",
    "kind": "line-flow",
    "inputs": {"profile": {"kind": "flat", "params": {"r_min": 1.0, "r_max": 20.0, "n": 1024}}},
    "expected": [{"quantity": "willmore_max", "op": "approx", "value": 16 * math.pi, "tol": 1e-3}],
}

CYCLE = {
    "schema_version": 1,
    "name": "cycle",
    "kind": "tree-flow",
    "inputs": {"tree": {
        "vertices": ["a", "b", "c"],
        "root_edge": "x",
        "edges": [
            {"id": "x", "tail": "a", "head": "b", "profile": {"kind": "flat", "params": {"r_min": 1, "r_max": 2, "n": 16}}},
            {"id": "y", "tail": "b", "head": "c", "profile": {"kind": "flat", "params": {"r_min": 2, "r_max": 3, "n": 16}}},
            {"id": "z", "tail": "c", "head": "b", "profile": {"kind": "flat", "params": {"r_min": 3, "r_max": 4, "n": 16}}},
        ],
    }},
}


def test_run_flat_scenario(tmp_path, capsys):
    path = write(tmp_path / "flat.yaml", FLAT)
    out = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out)]) == 0
    files = sorted(p.name for p in (out / "flat").iterdir())
    assert files == ["events.jsonl", "report.json", "solution.csv", "trace.csv"]
    # every emitted trace re-audits clean
    assert main(["audit", str(out / "flat" / "trace.csv")]) == 0


def test_gap_six_pi_fails_and_names_the_bound(capsys):
    assert main(["gap", "--lambda", "6", "--a0", str(math.pi)]) == 1
    text = capsys.readouterr().out
    assert "gap bound" in text and "FAIL" in text
    assert main(["gap", "--lambda", "5", "--a0", str(math.pi)]) == 0
    assert main(["gap", "--lambda", "-1", "--a0", "1"]) == 2


def test_malformed_tree_is_a_config_error(tmp_path, capsys):
    path = write(tmp_path / "cycle.yaml", CYCLE)
    assert main(["run", str(path)]) == 2
    assert "NotATree" in capsys.readouterr().out


@pytest.mark.parametrize("patch", [
    {"schema_version": 2},
    {"kind": "surface-flow"},
    {"inputs": {}},
    {"parameters": {"t_max": 0}},
    {"parameters": {"n": 4}},
    {"expected": [{"quantity": "willmore_max", "op": "~", "value": 1}]},
    {"expected": [{"quantity": "no_such_metric", "op": "<", "value": 1}]},
])
def test_bad_scenarios_exit_2(tmp_path, patch):
    path = write(tmp_path / "bad.yaml", {**FLAT, **patch})
    assert main(["run", str(path)]) == 2


def test_unparsable_file(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("kind: [unclosed\n")
    assert main(["run", str(path)]) == 2
    with pytest.raises(ConfigError):
        load_scenario(path)


def test_same_seed_gives_identical_bytes(tmp_path, golden_dir):
    sc = load_scenario(golden_dir / "necked_trunk.yaml")
    a, b = run_scenario(sc, seed=3), run_scenario(sc, seed=3)
    assert a.artifacts == b.artifacts


def test_batch_golden_suite_and_fault(tmp_path, golden_dir, capsys):
    assert main(["batch", str(golden_dir)]) == 0
    suite = tmp_path / "suite"
    shutil.copytree(golden_dir, suite)
    fault = yaml.safe_load((golden_dir / "psc_dumbbell_0.yaml").read_text())
    fault["name"] = "fault"
    fault["parameters"] = {"inject": {"willmore_factor": 1.01}}
    write(suite / "zz_fault.yaml", fault)
    capsys.readouterr()
    assert main(["batch", str(suite)]) == 1
    rows = capsys.readouterr().out.splitlines()
    assert [r.split()[0] for r in rows if r.endswith("FAIL")] == ["zz_fault.yaml"]


def test_batch_empty_directory(tmp_path):
    assert main(["batch", str(tmp_path)]) == 2
    assert main(["batch", str(tmp_path / "missing")]) == 2


def test_area_injection_fails_audit():
    sc = parse_scenario({**FLAT, "parameters": {"inject": {"area_log_shift": 0.05}}})
    res = run_scenario(sc)
    assert res.exit_code == 1
    assert "trace_invariants" in [c.name for c in res.report.failures()]


def test_gap_scenario_reports_violated_bound():
    sc = parse_scenario({"schema_version": 1, "name": "g", "kind": "gap-check",
                         "parameters": {"lambda_A0_over_pi": 6.0}})
    res = run_scenario(sc)
    assert res.exit_code == 1
    assert [c.name for c in res.report.failures()] == ["gap_certificate"]
