"""Command-line contract: exit codes, report determinism, round trips."""

import json
import math

import numpy as np
import pytest

from hypnf.cli import main
from hypnf.jets import Jet
from hypnf.serialize import (
    canonical_json,
    jet_from_dict,
    jet_to_dict,
    parse_hamiltonian_spec,
)


@pytest.fixture()
def inputs(tmp_path):
    files = {}

    def write(name, payload):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        files[name] = str(path)

    write("saddle.json", {
        "n": 1, "N": 2,
        "terms": [{"alpha": [0], "beta": [2], "coeff": 1.0},
                  {"alpha": [2], "beta": [0], "coeff": -1.0}],
    })
    write("xix.json", {
        "n": 1, "N": 2,
        "terms": [{"alpha": [1], "beta": [1], "coeff": 1.0}],
        "chart": {"delta": 1.0},
    })
    write("elliptic.json", {
        "n": 1, "N": 2,
        "terms": [{"alpha": [2], "beta": [0], "coeff": 0.5},
                  {"alpha": [0], "beta": [2], "coeff": 0.5}],
    })
    write("cubic.json", {
        "n": 1, "N": 3,
        "terms": [{"alpha": [1], "beta": [1], "coeff": 1.0},
                  {"alpha": [3], "beta": [0], "coeff": 1.0}],
    })
    write("resonant.json", {
        "n": 2, "N": 3,
        "terms": [{"alpha": [1, 0], "beta": [1, 0], "coeff": 1.0},
                  {"alpha": [0, 1], "beta": [0, 1], "coeff": 2.0},
                  {"alpha": [2, 0], "beta": [0, 1], "coeff": 0.3}],
    })
    write("deform.json", {
        "n": 1, "N": 2,
        "terms": [{"alpha": [1], "beta": [1], "coeff": 1.0}],
        "flat_remainder": {
            "kind": "monomial-bump",
            "params": {"alpha": [3], "beta": [5], "coeff": 1e-3,
                       "support_radius": 0.5, "plateau_radius": 0.4}},
        "chart": {"delta": 0.3},
    })
    files["dir"] = str(tmp_path)
    return files


def run(argv):
    return main(argv)


def test_williamson_saddle(inputs, tmp_path):
    out = tmp_path / "out1"
    code = run(["williamson", "--input", inputs["saddle.json"],
                "--out", str(out)])
    assert code == 0
    report = json.loads((out / "williamson_report.json").read_text())
    assert report["result"]["a"] == pytest.approx([2.0])
    assert report["result"]["symplectic_defect"] < 1e-10
    assert report["exit_status"] == 0


def test_williamson_identity_frame(inputs, tmp_path):
    out = tmp_path / "out2"
    code = run(["williamson", "--input", inputs["xix.json"],
                "--out", str(out)])
    assert code == 0
    report = json.loads((out / "williamson_report.json").read_text())
    S = np.array(report["result"]["S"])
    assert S == pytest.approx(np.eye(2), abs=1e-12)


def test_williamson_elliptic_exit_code(inputs, capsys):
    code = run(["williamson", "--input", inputs["elliptic.json"]])
    assert code == 3
    assert "|Re|" in capsys.readouterr().err


def test_bnf_cubic(inputs, tmp_path):
    out = tmp_path / "out3"
    code = run(["bnf", "--input", inputs["cubic.json"], "--order", "3",
                "--out", str(out)])
    assert code == 0
    report = json.loads((out / "bnf_report.json").read_text())
    assert report["result"]["q0_actions"] == [
        {"exponents": [1], "coeff": 1.0}]
    assert report["result"]["verification"]["max_nonaction_coeff"] == 0.0


def test_bnf_resonant_exit_code(inputs, tmp_path, capsys):
    out = tmp_path / "out4"
    code = run(["bnf", "--input", inputs["resonant.json"], "--order", "3",
                "--out", str(out)])
    assert code == 4
    report = json.loads((out / "bnf_report.json").read_text())
    assert sorted(map(abs, report["result"]["k"])) == [1, 2]


def test_bnf_order_two_trivial(inputs, tmp_path):
    out = tmp_path / "out5"
    code = run(["bnf", "--input", inputs["cubic.json"], "--order", "2",
                "--out", str(out)])
    assert code == 0
    report = json.loads((out / "bnf_report.json").read_text())
    assert report["result"]["generators"] == []
    assert report["result"]["q0_actions"] == [
        {"exponents": [1], "coeff": 1.0}]


def test_flow_and_csv(inputs, tmp_path):
    out = tmp_path / "out6"
    csv_path = tmp_path / "traj.csv"
    code = run(["flow", "--input", inputs["xix.json"], "--rho", "1,1",
                "--t-span", "0,1", "--out", str(out),
                "--csv", str(csv_path)])
    assert code == 0
    report = json.loads((out / "flow_report.json").read_text())
    assert report["result"]["state_final"] == pytest.approx(
        [math.e, 1.0 / math.e], abs=1e-9)
    header = csv_path.read_text().splitlines()[0]
    assert header == "t,x1,xi1"


def test_hit_report(inputs, tmp_path):
    out = tmp_path / "out7"
    code = run(["hit", "--input", inputs["xix.json"], "--rho", "1,0.5",
                "--delta", "1.0", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "hit_report.json").read_text())
    assert report["result"]["t_minus_out"] == pytest.approx(
        math.log(2.0), abs=1e-9)


def test_hit_origin_exit_code(inputs, capsys):
    code = run(["hit", "--input", inputs["xix.json"], "--rho", "0,0",
                "--delta", "1.0"])
    assert code == 5
    assert "origin" in capsys.readouterr().err.lower()


def test_gronwall_determinism(inputs, tmp_path):
    out1, out2 = tmp_path / "g1", tmp_path / "g2"
    for out in (out1, out2):
        code = run(["gronwall", "--input", inputs["xix.json"],
                    "--delta", "0.5", "--samples", "6", "--seed", "3",
                    "--out", str(out)])
        assert code == 0
    b1 = (out1 / "gronwall_report.json").read_bytes()
    b2 = (out2 / "gronwall_report.json").read_bytes()
    assert b1 == b2


def test_homological_single_point(inputs, tmp_path):
    out = tmp_path / "out8"
    csv_path = tmp_path / "hom.csv"
    code = run(["homological", "--input", inputs["deform.json"],
                "--rho", "0.002,0.3", "--tol", "1e-8",
                "--residual-points", "1", "--out", str(out),
                "--csv", str(csv_path)])
    assert code == 0
    report = json.loads((out / "homological_report.json").read_text())
    row = report["result"]["points"][0]
    # rhs is 1e-3 x^3 xi^5; eigen-rate a - b = -2
    closed = -(0.002 ** 3) * 0.3 ** 5 * 1e-3 / 2.0
    assert row["f_value"] == pytest.approx(closed, rel=0.05)
    assert report["result"]["max_residual"] < 1e-6
    assert csv_path.read_text().splitlines()[0] == \
        "x1,xi1,f_value,tail_bound,panel_error,residual"


def test_verify_identity_equals_baseline(inputs, tmp_path):
    out = tmp_path / "out9"
    code = run(["verify", "--input", inputs["deform.json"],
                "--kappa", "identity", "--grid-count", "5",
                "--grid-extent", "0.2", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "verify_report.json").read_text())
    assert report["result"]["stats"] == report["result"]["baseline"]


def test_deform_cli_small_grid(inputs, tmp_path):
    out = tmp_path / "out10"
    code = run(["deform", "--input", inputs["deform.json"],
                "--grid-count", "3", "--grid-extent", "0.2",
                "--s-steps", "4", "--skip-rate-check", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "deform_report.json").read_text())
    assert report["result"]["improvement"] > 10.0
    assert report["result"]["diagnostics"]["accepted"] is True


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SystemExit):
        run(["williamson", "--input", str(bad)])


def test_jet_round_trip():
    jet = Jet(2, 4, {(1, 0, 1, 0): 1.5, (0, 2, 0, 1): -0.25})
    assert jet_from_dict(jet_to_dict(jet)) == jet


def test_emitted_jet_json_reparses(inputs, tmp_path):
    out = tmp_path / "out11"
    run(["bnf", "--input", inputs["cubic.json"], "--order", "3",
         "--out", str(out)])
    report = json.loads((out / "bnf_report.json").read_text())
    for gen in report["result"]["generators"]:
        jet = jet_from_dict(gen)
        assert jet_to_dict(jet) == gen


def test_parse_hamiltonian_spec_remainder():
    H, chart = parse_hamiltonian_spec({
        "n": 1, "N": 2,
        "terms": [{"alpha": [1], "beta": [1], "coeff": 1.0}],
        "flat_remainder": {"kind": "monomial-bump",
                           "params": {"alpha": [2], "beta": [2],
                                      "coeff": 0.5,
                                      "support_radius": 1.0}},
        "chart": {"delta": 0.4},
    })
    assert H.remainders[0].N_flat == 4
    assert chart["delta"] == 0.4


def test_canonical_json_stable():
    payload = {"b": 1.5, "a": [1, 2], "c": {"y": 0.1, "x": None}}
    assert canonical_json(payload) == canonical_json(
        json.loads(canonical_json(payload)))
