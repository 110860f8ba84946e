import json
from pathlib import Path

import pytest

from evopf.cli import main
from evopf.data_io import ProfileSet, bundled_path, load_profiles, write_profiles

DESK_FAST = ["solve", "--preset", "desk", "--mix", "fast"]
GOLDEN = Path(__file__).parent / "data" / "census_golden.json"


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "solve" in capsys.readouterr().out


def test_unknown_flag_is_input_error(capsys):
    assert main(["solve", "--bogus"]) == 2
    assert "bogus" in capsys.readouterr().err


def test_missing_case_is_input_error(tmp_path, capsys):
    assert main(["solve", "--case", str(tmp_path / "none.yaml")]) == 2


def test_bad_numeric_option_is_input_error():
    assert main(DESK_FAST + ["--threads", "0"]) == 2
    assert main(DESK_FAST + ["--solar", "2.0"]) == 2


def test_census_prints_counts(tmp_path, capsys):
    assert main(["census", "--preset", "desk", "--mix", "combined", "--out", str(tmp_path)]) == 0
    printed = json.loads(capsys.readouterr().out)
    golden = json.loads(GOLDEN.read_text())["desk/combined"]
    assert printed == golden
    assert json.loads((tmp_path / "census.json").read_text()) == printed


@pytest.fixture(scope="module")
def solved_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    assert main(DESK_FAST + ["--out", str(out)]) == 0
    return out


def test_solve_writes_outputs(solved_dir):
    names = {p.name for p in solved_dir.iterdir()}
    assert {"solution.json", "voltage.csv", "voltage_h18.csv", "costs.csv", "voltage_bus18.svg"} <= names


def test_validate_accepts_own_solution(solved_dir, capsys):
    assert main(["validate", str(solved_dir / "solution.json")]) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_rejects_tampered_solution(solved_dir, tmp_path, capsys):
    doc = json.loads((solved_dir / "solution.json").read_text())
    doc["x"][0] += 0.5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["validate", str(bad)]) == 5
    assert "INVALID" in capsys.readouterr().out


def test_validate_rejects_non_solution(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    assert main(["validate", str(p)]) == 2
    p.write_text("not json")
    assert main(["validate", str(p)]) == 2


def test_unrechargeable_fleet_exits_infeasible(tmp_path, capsys):
    prof = load_profiles(bundled_path("profiles24.csv"))
    starved = ProfileSet(prof.tou_price, prof.demand_shape, prof.solar_shape, prof.r_c * 1e-3, prof.r_d,
                         prof.p_travel_kw)
    path = tmp_path / "starved.csv"
    write_profiles(starved, path)
    assert main(DESK_FAST + ["--profiles", str(path)]) == 3
    assert "recharged" in capsys.readouterr().out


def test_seedless_check(capsys):
    assert main(["solve", "--preset", "desk", "--mix", "level2", "--threads", "2", "--seedless"]) == 0
    assert "determinism check ok" in capsys.readouterr().out
