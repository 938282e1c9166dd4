import csv
import io
import json

import pytest

from surfinv.cli import main, parse_complex, parse_complex_list, InputError
from surfinv.report import dumps, failed_checks


@pytest.fixture(scope="module")
def meshes(tmp_path_factory):
    d = tmp_path_factory.mktemp("meshes")
    t, g = d / "t.mesh", d / "g2.mesh"
    assert main(["surface", "torus", "--tau", "0.5+0.8i", "--n", "32", "-o", str(t),
                 "--report", str(d / "t.json")]) == 0
    assert main(["surface", "hyperelliptic", "--branch", "-2,-1,0,1,2,5", "--n", "12",
                 "-o", str(g), "--report", str(d / "g.json")]) == 0
    return d


@pytest.mark.parametrize("text,value", [("0.5+0.8i", 0.5 + 0.8j), ("2i", 2j), ("-1", -1),
                                        ("1-2j", 1 - 2j), ("-i", -1j), ("i", 1j)])
def test_parse_complex(text, value):
    assert parse_complex(text) == value


@pytest.mark.parametrize("text", ["", "abc", "1+", "1,,2"])
def test_parse_complex_list_rejects(text):
    with pytest.raises(InputError):
        parse_complex_list(text)


def test_surface_reports(meshes):
    t = json.loads((meshes / "t.json").read_text())
    g = json.loads((meshes / "g.json").read_text())
    assert t["mesh"]["euler_characteristic"] == 0 and t["mesh"]["valid"]
    assert g["mesh"]["euler_characteristic"] == -2 and g["mesh"]["genus"] == 2
    assert t["schema_version"] == 1


def test_malformed_branch_list_exit_2(tmp_path, capsys):
    assert main(["surface", "hyperelliptic", "--branch", "-2,-1,x", "--n", "8",
                 "-o", str(tmp_path / "m")]) == 2
    assert "error" in capsys.readouterr().err


def test_odd_branch_list_exit_2(tmp_path):
    assert main(["surface", "hyperelliptic", "--branch", "0,1,2,3,4", "--n", "8",
                 "-o", str(tmp_path / "m")]) == 2


def test_missing_argument_exit_2(tmp_path):
    assert main(["surface", "torus", "--n", "8", "-o", str(tmp_path / "m")]) == 2


def test_compute_torus_ag(meshes, tmp_path):
    out = tmp_path / "r.json"
    assert main(["compute", str(meshes / "t.mesh"), "--targets", "ag", "-o", str(out)]) == 0
    r = json.loads(out.read_text())
    chk = r["checks"]["ag_genus1_vanishing"]
    assert chk["pass"] and chk["value"] <= chk["tolerance"] == 5e-3
    assert "timings" not in r


def test_compute_genus_two_all_targets(meshes, tmp_path):
    out = tmp_path / "r.json"
    code = main(["compute", str(meshes / "g2.mesh"), "--targets",
                 "ag,green,periods,harmonic-volume,checks", "-o", str(out), "--timings"])
    r = json.loads(out.read_text())
    assert failed_checks(r["checks"]) == []
    assert code == 0
    assert r["checks"]["selfinters"]["computed"] == pytest.approx(-4.0, rel=0.02)
    assert r["invariants"]["ag_definition"]["value"] > 0
    assert "ag_green" in r["invariants"] and "ag_relative_gap" in r["invariants"]
    assert set(r["timings"]) >= {"hodge", "green_matrix"}
    assert r["solver"]["seeds"]["sample_seed"] == r["solver"]["tolerances"]["sample_seed"]
    for entry in r["checks"].values():
        assert "tolerance" in entry


def test_reports_byte_identical(meshes, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        main(["compute", str(meshes / "g2.mesh"), "--targets", "ag,checks", "-o", str(p),
              "--threads", "2"])
    assert a.read_bytes() == b.read_bytes()


def test_check_failure_exit_1(meshes, tmp_path):
    code = main(["compute", str(meshes / "g2.mesh"), "--targets", "ag",
                 "--tol", "cross_route_rel=1e-9", "-o", str(tmp_path / "r.json")])
    assert code == 1


def test_tolerance_profile_from_environment(meshes, tmp_path, monkeypatch):
    monkeypatch.setenv("SURFINV_TOL_PROFILE", "strict")
    out = tmp_path / "r.json"
    main(["compute", str(meshes / "t.mesh"), "--targets", "periods", "-o", str(out)])
    r = json.loads(out.read_text())
    assert r["solver"]["tolerances"]["profile"] == "strict"
    assert r["solver"]["tolerances"]["solver_rtol"] == 1e-12


@pytest.mark.parametrize("args", [["--profile", "nope"], ["--tol", "bogus=1"], ["--tol", "x"],
                                  ["--targets", "ag,zeta"]])
def test_bad_compute_options_exit_2(meshes, args):
    assert main(["compute", str(meshes / "t.mesh")] + args) == 2


def test_compute_missing_file_exit_2(tmp_path):
    assert main(["compute", str(tmp_path / "none.mesh")]) == 2


def test_green_spill(meshes, tmp_path):
    from surfinv.arakelov import GreenMatrix
    spill = tmp_path / "g.bin"
    main(["compute", str(meshes / "t.mesh"), "--targets", "green", "--spill", str(spill),
          "-o", str(tmp_path / "r.json")])
    G = GreenMatrix.load(spill)
    assert G.values.shape == (1024, 1024)


def test_study_convergence_oracle(capsys):
    assert main(["study", "convergence", "--surface", "torus", "--tau", "0.5+0.8i",
                 "--resolutions", "8,16,32", "--target", "green-oracle"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["n"] for r in rows] == ["8", "16", "32"]
    assert float(rows[-1]["order"]) > 1


def test_study_single_resolution_exit_2():
    assert main(["study", "convergence", "--surface", "torus", "--resolutions", "16"]) == 2


def test_study_nonmonotone_resolutions_exit_2():
    assert main(["study", "convergence", "--surface", "torus", "--resolutions", "16,8,32"]) == 2


def test_study_degeneration_below_scale(capsys):
    assert main(["study", "degeneration", "--family", "pair", "--t", "0.1,1e-9"]) == 2
    assert "minimum admissible t" in capsys.readouterr().err


def test_study_degeneration_increasing_t_exit_2():
    assert main(["study", "degeneration", "--t", "0.05,0.1,0.2"]) == 2


def test_study_degeneration_table(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["study", "degeneration", "--family", "cluster", "--t", "0.2,0.1", "--n", "8",
                 "-o", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 2 and rows[0]["slope"] == "" and float(rows[1]["slope"]) > 0


def test_dumps_handles_special_values():
    text = dumps({"z": 1 + 2j, "nan": float("nan"), "b": True})
    assert json.loads(text) == {"b": True, "nan": "nan", "z": {"im": 2.0, "re": 1.0}}
