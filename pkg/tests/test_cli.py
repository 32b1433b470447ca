"""End-to-end tests of the command pipeline.

Everything runs through main(argv) in-process: generate -> certify ->
search-even, the documented exit codes (0 success or empty search, 1
failing section or nonempty search, 2 usage error, 3 unreadable input),
canonical-JSON round trips, and byte-identical certificates under a fixed
seed.  The heavier numeric sections are exercised with small sample counts;
their numerical depth is covered by the module tests.
"""

import json

import pytest

from ecsforge.cli import DEFAULT_TOLERANCES, build_certificate, canonical_json, main
from ecsforge.model import ModelData, build_model
from ecsforge.spectral import standard_family

SECTION_ORDER = [
    "spectral-axioms",
    "model-identities",
    "eigenbasis",
    "omega-table",
    "condition-a",
    "condition-b",
    "condition-c",
    "condition-d",
    "condition-e",
    "lattice-intertwining",
    "isometry",
    "curvature",
    "canonicalize-orbit",
    "holonomy",
    "geodesic-witness",
]


def generate(tmp_path, *extra):
    out = tmp_path / "model.json"
    code = main(["generate", "--n", "5", "--p", "3", "--out", str(out), *extra])
    assert code == 0
    return out


# -- generate -----------------------------------------------------------------------


def test_generate_writes_the_r3_instance(tmp_path):
    out = generate(tmp_path)
    data = json.loads(out.read_text())
    assert data["schema"] == "ecs-forge/1"
    assert data["system"]["m"] == 3
    assert data["system"]["k"] == 5
    assert data["p"] == 3


def test_generate_writes_the_r4_instance(tmp_path):
    out = tmp_path / "model7.json"
    assert main(["generate", "--n", "7", "--p", "4", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["system"]["m"] == 5
    assert data["system"]["k"] == 7


def test_generate_rejects_even_dimension(tmp_path, capsys):
    code = main(["generate", "--n", "6", "--p", "3", "--out", str(tmp_path / "x.json")])
    assert code == 2
    err = capsys.readouterr().err
    assert "odd" in err
    assert not (tmp_path / "x.json").exists()


def test_generate_rejects_dimension_below_five(tmp_path):
    assert main(["generate", "--n", "3", "--p", "3", "--out", str(tmp_path / "x.json")]) == 2


def test_generate_default_filename(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["generate", "--n", "5", "--p", "3"]) == 0
    assert (tmp_path / "model-n5-p3.json").exists()


def test_model_round_trip_is_byte_identical(tmp_path):
    out = generate(tmp_path)
    text = out.read_text()
    model = ModelData.from_json_dict(json.loads(text))
    assert canonical_json(model.to_json_dict()) == text


# -- certify ------------------------------------------------------------------------


def test_certify_homogeneous_model_passes(tmp_path):
    out = generate(tmp_path)
    code = main(["certify", str(out), "--samples", "2", "--seed", "0"])
    assert code == 0
    cert = json.loads((tmp_path / "model.certificate.json").read_text())
    assert cert["overall_pass"] is True
    assert [s["name"] for s in cert["sections"]] == SECTION_ORDER
    assert cert["inputs"]["samples"] == 2
    assert cert["inputs"]["seed"] == 0
    assert cert["inputs"]["model"] == json.loads(out.read_text())


def test_exact_sections_report_the_literal_zero(tmp_path):
    out = generate(tmp_path)
    main(["certify", str(out), "--samples", "2"])
    cert = json.loads((tmp_path / "model.certificate.json").read_text())
    for section in cert["sections"]:
        if section["kind"] == "exact":
            assert section["residual"] == "0"
        else:
            assert isinstance(section["residual"], float)
        assert section["pass"] is True


def test_certificates_are_deterministic(tmp_path):
    out = generate(tmp_path)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["certify", str(out), "--samples", "2", "--seed", "7", "--out", str(a)])
    main(["certify", str(out), "--samples", "2", "--seed", "7", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_tampered_spectrum_fails_the_spectral_section(tmp_path):
    out = generate(tmp_path)
    data = json.loads(out.read_text())
    data["system"]["E"][0] += 1
    bad = tmp_path / "tampered.json"
    bad.write_text(json.dumps(data))
    code = main(["certify", str(bad), "--samples", "2"])
    assert code == 1
    cert = json.loads((tmp_path / "tampered.certificate.json").read_text())
    assert cert["overall_pass"] is False
    by_name = {s["name"]: s for s in cert["sections"]}
    assert by_name["spectral-axioms"]["pass"] is False
    assert by_name["spectral-axioms"]["details"]["failures"]
    # downstream sections are reported, not run
    assert by_name["curvature"]["pass"] is False
    assert "not run" in by_name["curvature"]["details"]["failures"][0]


def test_missing_file_exits_3(tmp_path, capsys):
    assert main(["certify", str(tmp_path / "nope.json")]) == 3
    assert "cannot read" in capsys.readouterr().err


def test_garbage_file_exits_3(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["certify", str(bad)]) == 3


def test_wrong_schema_exits_3(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": "other/9", "p": 3}))
    assert main(["certify", str(bad)]) == 3


def test_deformed_model_flags_dilational_not_homogeneous(tmp_path):
    out = tmp_path / "deformed.json"
    code = main(
        [
            "generate", "--n", "5", "--p", "3",
            "--deform-coeffs", "[[0.02, 0.01], [0.005, 0.0]]",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert json.loads(out.read_text())["f"]["variant"] == "deformed"
    assert main(["certify", str(out), "--samples", "2", "--seed", "3"]) == 0
    cert = json.loads((tmp_path / "deformed.certificate.json").read_text())
    assert cert["overall_pass"] is True
    by_name = {s["name"]: s for s in cert["sections"]}
    assert by_name["holonomy"]["details"]["dilational"] is True
    assert by_name["holonomy"]["details"]["homogeneous"] is False
    assert by_name["profile-transfer"]["pass"] is True


def test_tol_override_can_force_a_failure(tmp_path):
    out = generate(tmp_path)
    code = main(
        ["certify", str(out), "--samples", "2", "--tol-overrides", '{"isometry": 1e-30}']
    )
    assert code == 1
    cert = json.loads((tmp_path / "model.certificate.json").read_text())
    by_name = {s["name"]: s for s in cert["sections"]}
    assert by_name["isometry"]["pass"] is False
    assert by_name["isometry"]["details"]["tolerance"] == 1e-30


def test_unknown_tolerance_key_exits_2(tmp_path, capsys):
    out = generate(tmp_path)
    assert main(["certify", str(out), "--tol-overrides", '{"bogus": 1}']) == 2
    assert "unknown tolerance keys" in capsys.readouterr().err


def test_malformed_tolerance_json_exits_2(tmp_path, capsys):
    out = generate(tmp_path)
    assert main(["certify", str(out), "--tol-overrides", "not json"]) == 2
    assert "--tol-overrides" in capsys.readouterr().err


def test_build_certificate_rejects_unknown_keys_directly():
    model = build_model(standard_family(3), p=3)
    with pytest.raises(ValueError):
        build_certificate(model, samples=1, tolerances={"nope": 1e-3})


# -- search-even --------------------------------------------------------------------


def test_search_even_m2_is_empty_up_to_99(capsys):
    assert main(["search-even", "--m", "2", "--k-max", "99"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["count"] == 0
    assert report["systems"] == []


def test_search_even_m4_is_empty_up_to_15(capsys):
    assert main(["search-even", "--m", "4", "--k-max", "15"]) == 0
    assert json.loads(capsys.readouterr().out)["count"] == 0


def test_search_odd_m3_recovers_the_family_member(capsys):
    assert main(["search-even", "--m", "3", "--k-max", "15"]) == 1
    report = json.loads(capsys.readouterr().out)
    assert report["count"] >= 1
    assert any(system["k"] == 5 for system in report["systems"])


def test_default_tolerances_are_not_mutated_by_overrides(tmp_path):
    before = dict(DEFAULT_TOLERANCES)
    out = generate(tmp_path)
    main(["certify", str(out), "--samples", "2", "--tol-overrides", '{"isometry": 1e-3}'])
    assert DEFAULT_TOLERANCES == before
