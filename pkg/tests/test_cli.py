import csv
import io
import json
import shutil

import pytest

from replan_kit import cli

from conftest import SCENARIOS


@pytest.fixture
def maps(tmp_path):
    a = tmp_path / "a.map"
    b = tmp_path / "b.map"
    a.write_text("4 3 1\n....\n....\n....\n")
    b.write_text("4 3 1\n....\n..#.\n....\n")
    wide = tmp_path / "wide.map"
    wide.write_text("5 3 1\n.....\n.....\n.....\n")
    return a, b, wide


def test_run_exit_codes(tmp_path, capsys):
    assert cli.main(["run", str(SCENARIOS / "static.json"), "--runs", "1", "--out", str(tmp_path)]) == cli.EXIT_OK
    assert (tmp_path / "static_a_star_proposed_run0.trace.jsonl").exists()
    assert "goal reached" in capsys.readouterr().out

    assert cli.main(["run", str(SCENARIOS / "walled.json"), "--out", str(tmp_path)]) == cli.EXIT_FAILED_RUN
    assert "unreachable" in capsys.readouterr().out

    assert cli.main(["run", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == cli.EXIT_BAD_INPUT
    assert "error" in capsys.readouterr().err


def test_run_rejects_bad_planner_and_bad_scenario(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", str(SCENARIOS / "static.json"), "--planner", "rrt"])
    assert exc.value.code == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"map": "maps/room64.map", "start": [0, 0], "goal": [5, 58]}))
    shutil.copytree(SCENARIOS / "maps", tmp_path / "maps")
    # (0, 0) sits in the map border.
    assert cli.main(["run", str(bad), "--out", str(tmp_path)]) == cli.EXIT_BAD_INPUT


def test_diffmap(maps, capsys):
    a, b, wide = maps
    assert cli.main(["diffmap", str(a), str(a)]) == cli.EXIT_OK
    assert capsys.readouterr().out.strip() == "0 changed cells"
    assert cli.main(["diffmap", str(a), str(b)]) == cli.EXIT_OK
    out = capsys.readouterr().out.strip()
    assert out.startswith("1 changed cell, magnitude 254")
    assert out.endswith("bounding box (1, 2)-(1, 2)")
    assert cli.main(["diffmap", str(a), str(b), "--threshold", "254"]) == cli.EXIT_OK
    assert capsys.readouterr().out.strip() == "0 changed cells"
    assert cli.main(["diffmap", str(a), str(wide)]) == cli.EXIT_BAD_INPUT
    assert cli.main(["diffmap", str(a), str(a.with_name("missing.map"))]) == cli.EXIT_BAD_INPUT


def test_bench_single_run_has_zero_sd(tmp_path, capsys):
    code = cli.main([
        "bench", str(SCENARIOS / "static.json"), "--planners", "dijkstra,a_star",
        "--runs", "1", "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "planner" in out and "a_star" in out and "environment:" in out
    report = json.loads((tmp_path / "static.bench.json").read_text())
    assert [r["planner"] for r in report["rows"]] == ["dijkstra", "a_star"]
    for row in report["rows"]:
        assert row["total_time"]["sd"] == 0.0
        assert row["expansions_total"]["sd"] == 0.0
    assert len(report["scenario_ref"]["sha256"]) == 64


def test_bench_table_csv_and_json_agree(tmp_path, capsys):
    json_path = tmp_path / "r.json"
    args = [
        "bench", str(SCENARIOS / "two_obstacles.json"), "--planners", "a_star,dstar_lite",
        "--gatings", "proposed,always_replan", "--runs", "2", "--out", str(tmp_path),
        "--decimals", "4",
    ]
    assert cli.main(args + ["--format", "csv", "--json", str(json_path)]) == cli.EXIT_OK
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    report = json.loads(json_path.read_text())
    assert rows[0] == report["header"]
    assert rows[1:] == report["table"]
    assert len(rows) == 1 + 4
    assert report["header"][3:5] == ["replan 1 [s]", "replan 2 [s]"]
    for line, row in zip(report["table"], report["rows"]):
        mean, sd = row["total_time"]["mean"], row["total_time"]["sd"]
        assert line[-2] == f"{mean:.4f} ±{sd:.4f}"

    assert cli.main(args) == cli.EXIT_OK
    table = capsys.readouterr().out
    for line in report["table"]:
        assert line[0] in table and line[-1] in table


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert cli.main(["run", str(SCENARIOS / "static.json"), "--runs", "1"]) == cli.EXIT_OK
    assert (tmp_path / "envout" / "static_a_star_proposed_run0.path.csv").exists()


def test_plot_writes_png(tmp_path, capsys):
    assert cli.main(["run", str(SCENARIOS / "two_obstacles.json"), "--runs", "1", "--out", str(tmp_path)]) == cli.EXIT_OK
    prefix = tmp_path / "two_obstacles_dstar_lite_proposed_run0"
    assert cli.main(["plot", str(SCENARIOS / "two_obstacles.json"), str(prefix)]) == cli.EXIT_OK
    png = prefix.with_suffix(".png")
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert cli.main(["plot", str(SCENARIOS / "two_obstacles.json"), str(tmp_path / "none")]) == cli.EXIT_BAD_INPUT
