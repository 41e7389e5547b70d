from __future__ import annotations

import json
import math

import pytest

from gfcalc import cli


def run_cli(capsys, *argv: str) -> tuple[int, str, str]:
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_json(path, data) -> str:
    path.write_text(json.dumps(data))
    return str(path)


# ---------------------------------------------------------------------------
# randomness


def test_splitmix_reference_vectors():
    # published outputs of the reference splitmix64 for seed 0 and seed 1234567
    g = cli.SplitMix64(0)
    assert [g.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    g = cli.SplitMix64(1234567)
    assert [g.next_u64() for _ in range(5)] == [
        6457827717110365317, 3203168211198807973, 9817491932198370423,
        4593380528125082431, 16408922859458223821]


def test_splitmix_derived_draws():
    g = cli.SplitMix64(7)
    xs = [g.random() for _ in range(1000)]
    assert all(0.0 <= x < 1.0 for x in xs)
    ks = {g.integer(-2, 2) for _ in range(200)}
    assert ks == {-2, -1, 0, 1, 2}
    assert all(3.0 <= g.uniform(3.0, 4.0) < 4.0 for _ in range(100))


# ---------------------------------------------------------------------------
# pipelines


def test_empty_pipeline(capsys):
    code, out, _ = run_cli(capsys, "run", "empty")
    assert code == cli.EXIT_PASS
    rep = json.loads(out)
    assert rep["steps"] == [] and rep["status"] == "pass"


def test_double_v2_matches_radius_formula(capsys):
    code, out, _ = run_cli(capsys, "run", "double-v2")
    assert code == 0
    res = json.loads(out)["steps"][0]["result"]
    ts = {"1/256": 1 / 256, "1/64": 1 / 64, "1/16": 1 / 16}
    assert len(res["doubles"]) == 3
    for entry in res["doubles"]:
        t = ts[entry["t"]]
        r = 4 / math.sqrt(3) * math.sqrt(t / (1 + 4 * t))
        ws = sorted(p["location"][0] for p in entry["critical"])
        assert ws == pytest.approx([-r, r], abs=1e-7)


def test_json_report_round_trips(capsys):
    code, out, _ = run_cli(capsys, "simplicial", "bar", "--monoid", "Z/2", "--truncation", "3")
    assert code == 0
    rep = json.loads(out)
    assert cli.dumps(rep) == out
    assert rep["steps"][0]["result"]["level_sizes"] == [1, 2, 4, 8]


def test_csv_homology_header(capsys, tmp_path):
    f = write_json(tmp_path / "c.json", {"ranks": {"0": 1, "1": 1, "2": 1},
                                         "boundaries": {"2": [[2]]}})
    code, out, _ = run_cli(capsys, "homalg", "homology", f, "--format", "csv")
    assert code == 0
    body = out.split("# homology.csv\n")[1].split("#")[0]
    lines = body.strip().splitlines()
    assert lines[0] == "degree,free,torsion"
    assert lines[1:] == ["0,1,", "1,0,2"]


def test_markdown_lists_status_and_tags(capsys):
    code, out, _ = run_cli(capsys, "simplicial", "bqq-check", "--monoid", "Z/2",
                           "--max-degree", "2", "--corrupt", "--format", "markdown")
    assert code == cli.EXIT_INVARIANT
    assert "status: **fail**" in out
    assert "| simplicial bqq-check | fail | lemma:bqq.contraction |" in out


def test_failure_carries_a_tag(capsys):
    code, out, _ = run_cli(capsys, "simplicial", "bqq-check", "--monoid", "Z/2",
                           "--max-degree", "2", "--corrupt")
    assert code == 2
    step = json.loads(out)["steps"][0]
    assert step["status"] == "fail" and step["tag"]


# ---------------------------------------------------------------------------
# exit codes


@pytest.mark.parametrize("argv", [
    ["quadform", "invariants", "/nonexistent/q.json"],
    ["quadform", "nosuchverb"],
    ["--tol", "-1", "run", "empty"],
    ["run", "/nonexistent/scenario.json"],
])
def test_input_errors_exit_3(capsys, argv):
    code, _, err = run_cli(capsys, *argv)
    assert code == cli.EXIT_INPUT
    assert err.startswith("error:")


def test_malformed_json_is_a_schema_error(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    code, _, err = run_cli(capsys, "homalg", "homology", str(p))
    assert code == 3 and "cli:schema" in err


def test_invariant_violation_exits_2(capsys):
    code, out, _ = run_cli(capsys, "qbundle", "maslov", "--scenario", "circle-3arc-maslov2",
                           "--expect", "0")
    assert code == cli.EXIT_INVARIANT
    assert json.loads(out)["status"] == "fail"


# ---------------------------------------------------------------------------
# scenario files


def test_scenario_file_halts_on_failure(capsys, tmp_path):
    steps = [
        {"name": "bad", "module": "simplicial", "verb": "bqq-check",
         "args": {"monoid": "Z/2", "max_degree": 2, "corrupt": True}},
        {"name": "good", "module": "simplicial", "verb": "bar", "args": {"monoid": "Z/3"}},
    ]
    f = write_json(tmp_path / "s.json", {"seed": 5, "steps": steps})
    code, out, _ = run_cli(capsys, "run", f)
    rep = json.loads(out)
    assert code == 2 and rep["seed"] == 5
    assert [s["name"] for s in rep["steps"]] == ["bad", "halted"]
    code, out, _ = run_cli(capsys, "run", f, "--keep-going")
    assert [s["name"] for s in json.loads(out)["steps"]] == ["bad", "good"]


def test_expected_failures_count_as_passes(capsys, tmp_path):
    steps = [{"name": "bad", "module": "simplicial", "verb": "bqq-check", "expect_fail": True,
              "args": {"monoid": "Z/2", "max_degree": 2, "corrupt": True}}]
    code, out, _ = run_cli(capsys, "run", write_json(tmp_path / "s.json", {"steps": steps}))
    assert code == 0
    assert json.loads(out)["steps"][0]["expected"] == "fail"


def test_scenario_files_resolve_relative_paths(capsys, tmp_path):
    write_json(tmp_path / "c.json", {"ranks": {"0": 1}})
    steps = [{"name": "h", "module": "homalg", "verb": "homology", "args": {"file": "c.json"}}]
    code, out, _ = run_cli(capsys, "run", write_json(tmp_path / "s.json", {"steps": steps}))
    assert code == 0
    steps[0]["args"]["file"] = "missing.json"
    code, _, err = run_cli(capsys, "run", write_json(tmp_path / "s2.json", {"steps": steps}))
    assert code == 3 and "missing.json" in err


@pytest.mark.parametrize("data", [
    {"steps": [{"module": "nope", "verb": "x"}]},
    {"steps": "not a list"},
    {"steps": [], "tol": -1e-3},
])
def test_schema_errors(capsys, tmp_path, data):
    code, _, _ = run_cli(capsys, "run", write_json(tmp_path / "s.json", data))
    assert code == 3


# ---------------------------------------------------------------------------
# output files and determinism


def test_out_directory_separates_timings(capsys, tmp_path):
    out_dir = tmp_path / "out"
    code, text, _ = run_cli(capsys, "run", "simplicial", "--out", str(out_dir))
    assert code == 0
    assert (out_dir / "report.json").read_text() == text
    timings = json.loads((out_dir / "timings.json").read_text())
    assert set(timings) == {s["name"] for s in json.loads(text)["steps"]}
    assert "timings" not in text


def test_cocycle_pipeline_is_deterministic(capsys):
    first = run_cli(capsys, "--seed", "3", "run", "cocycles")
    second = run_cli(capsys, "--seed", "3", "run", "cocycles")
    assert first[0] == 0 and first == second


def test_bundled_scenarios_are_listed(capsys):
    code, out, _ = run_cli(capsys, "list")
    names = json.loads(out)
    assert code == 0
    assert set(names) == {"empty", "double-v2", "tube-DQ", "cocycles", "simplicial", "battery"}
    assert names["empty"] == []


def test_tube_library_has_twelve_forms():
    lib = cli.tube_library()
    assert len(lib) == 12 and len({n for n, _ in lib}) == 12
    assert all(q.dim <= 2 for _, q in lib)
