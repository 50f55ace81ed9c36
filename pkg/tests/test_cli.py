import csv
import json
from pathlib import Path

import pytest
import yaml

from appbench import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SETCOVER = {
    "run_id": "sc",
    "seed": 5,
    "modules": [
        {"name": "SetCover", "params": {"universe_size": 5, "n_subsets": 5}},
        "SetCoverQubo",
        {"name": "SimulatedAnnealer", "params": {"sweeps": 50, "reads": 2}},
    ],
}


def write(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def result_files(out):
    return sorted(p for p in Path(out).glob("run-*.json") if not p.name.endswith(".timing.json"))


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path, capsys):
    assert cli.main(["validate", str(path)]) == 0
    assert capsys.readouterr().out.startswith("valid, ")


def test_validate_messages(tmp_path, capsys):
    assert cli.main(["validate", write(tmp_path, SETCOVER)]) == 0
    assert capsys.readouterr().out.strip() == "valid, 3 modules"
    assert cli.main(["validate", write(tmp_path, {"modules": []})]) == 1
    assert "pipeline empty" in capsys.readouterr().err
    bad = {"modules": ["SetCover", "MaxCutQubo"]}
    assert cli.main(["validate", write(tmp_path, bad)]) == 1
    err = capsys.readouterr().err
    assert "SetCoverInstance" in err and "ProblemGraph" in err and "1" in err


def test_config_errors_exit_one(tmp_path, capsys):
    assert cli.main(["validate", str(tmp_path / "missing.yaml")]) == 1
    unknown = dict(SETCOVER, modules=[{"name": "SetCover", "params": {"bogus": 1}}])
    assert cli.main(["validate", write(tmp_path, unknown)]) == 1
    sweep = dict(SETCOVER, sweep={"Nope.x": [1]})
    assert cli.main(["validate", write(tmp_path, sweep)]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["run"])
    assert exc.value.code == 1


def test_run_single_and_deterministic(tmp_path):
    cfg = write(tmp_path, SETCOVER)
    assert cli.main(["run", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", cfg, "--out", str(tmp_path / "b")]) == 0
    files = result_files(tmp_path / "a")
    assert len(files) == 1 and (tmp_path / "a" / "index.json").exists()
    assert files[0].read_bytes() == (tmp_path / "b" / files[0].name).read_bytes()
    doc = json.loads(files[0].read_text())
    assert doc["status"] == "ok" and "runtime_s" not in files[0].read_text()


def test_repetitions_get_distinct_seeds(tmp_path):
    cfg = write(tmp_path, SETCOVER)
    assert cli.main(["run", cfg, "--reps", "10", "--out", str(tmp_path / "r")]) == 0
    index = json.loads((tmp_path / "r" / "index.json").read_text())
    assert len(index["runs"]) == 10 and len({r["seed"] for r in index["runs"]}) == 10


def test_sweep_multiplies_runs(tmp_path):
    doc = dict(SETCOVER, repetitions=2, sweep={"SimulatedAnnealer.sweeps": [100, 1000]})
    assert cli.main(["run", write(tmp_path, doc), "--out", str(tmp_path / "s")]) == 0
    files = result_files(tmp_path / "s")
    assert len(files) == 4
    points = sorted(json.loads(f.read_text())["point"]["SimulatedAnnealer.sweeps"] for f in files)
    assert points == [100, 100, 1000, 1000]


def test_serial_and_parallel_are_byte_identical(tmp_path):
    doc = dict(SETCOVER, repetitions=3)
    cfg = write(tmp_path, doc)
    assert cli.main(["run", cfg, "--out", str(tmp_path / "serial")]) == 0
    assert cli.main(["run", cfg, "--jobs", "2", "--out", str(tmp_path / "par")]) == 0
    for f in result_files(tmp_path / "serial"):
        assert f.read_bytes() == (tmp_path / "par" / f.name).read_bytes()


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "root"))
    assert cli.main(["run", write(tmp_path, SETCOVER)]) == 0
    assert (tmp_path / "root" / "sc" / "index.json").exists()


def test_execution_failure_exits_two(tmp_path):
    doc = {"modules": [{"name": "SALBP", "params": {"n_tasks": 6}}, {"name": "SALBPQubo", "params": {"max_vars": 5}}, "BruteForce"]}
    assert cli.main(["run", write(tmp_path, doc), "--out", str(tmp_path / "f")]) == 2
    index = json.loads((tmp_path / "f" / "index.json").read_text())
    assert index["runs"][0]["status"] == "failed"


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_report_single_run_equals_records(tmp_path):
    out = tmp_path / "one"
    assert cli.main(["run", write(tmp_path, SETCOVER), "--out", str(out)]) == 0
    assert cli.main(["report", str(out)]) == 0
    doc = json.loads(result_files(out)[0].read_text())
    rows = read_csv(out / "report_complexity.csv")
    raw = {(r["module"], r["key"]): r["value"] for r in doc["records"] if r["category"] == "complexity"}
    assert {(r["module"], r["key"]): float(r["mean"]) for r in rows} == pytest.approx(raw)
    assert all(r["count"] == "1" and r["min"] == r["max"] == r["mean"] for r in rows)
    assert (out / "report_performance.csv").exists()


def test_report_skips_corrupt_file(tmp_path, capsys):
    out = tmp_path / "five"
    assert cli.main(["run", write(tmp_path, SETCOVER), "--reps", "5", "--out", str(out)]) == 0
    result_files(out)[2].write_text("{not json")
    capsys.readouterr()
    assert cli.main(["report", str(out)]) == 0
    err = capsys.readouterr().err
    assert err.count("warning") == 1 and "run-000-002.json" in err
    rows = read_csv(out / "report_complexity.csv")
    assert all(r["count"] == "4" for r in rows)


def test_report_needs_index(tmp_path):
    assert cli.main(["report", str(tmp_path)]) == 1


def test_list_modules(capsys):
    assert cli.main(["list-modules"]) == 0
    out = capsys.readouterr().out
    for name in ("MaxCut", "SALBPQubo", "SimulatedAnnealer", "TrotterDynamics", "QScore"):
        assert f"\n{name}:" in "\n" + out


def test_qscore_command(tmp_path, capsys):
    target = tmp_path / "q.csv"
    code = cli.main(["qscore", "--solver", "exact", "--sizes", "5-6", "--instances", "2", "--out", str(target)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.strip().endswith("q_score=6")
    assert target.read_text().startswith("N,C,C_opt")


def test_qscore_defaults():
    args = cli.build_parser().parse_args(["qscore"])
    assert args.time_limit == 60.0 and args.threshold == 0.2
    assert cli._sizes("5-7,9") == [5, 6, 7, 9]
