import json
import os

import numpy as np
import pytest

from ccdecomp import cli
from ccdecomp.extraction import extract_profiles
from ccdecomp.measures import DiscreteMeasure, MeasureSequence
from ccdecomp.sobolev import (GridFunction, SobolevParams, norm_expansion_check,
                              profile_extract)
from ccdecomp.synth import BumpSpec, gen_multibubble_sobolev


def run(argv, capsys=None):
    code = cli.main(argv)
    return code


def test_parse_phi_and_kmax():
    cfg = cli.parse_config(["extract", "--input", "x.csv", "--phi", "half", "--kmax", "4"])
    assert cfg.phi == "half" and cfg.kmax == 4
    ec = cfg.extraction_config()
    assert ec.k_max == 4 and float(ec.phis()[0](np.array(3.0))) == 1.5


def test_exponent_validation(capsys):
    with pytest.raises(cli.UsageError, match=r"q must lie in \(p, p\*\)"):
        cli.parse_config(["sobolev", "--input", "d", "--p", "2", "--q", "7", "--dim", "3"])
    assert cli.main(["sobolev", "--input", "d", "--p", "2", "--q", "7", "--dim", "3"]) == 1
    assert "q must lie in (p, p*)" in capsys.readouterr().err


def test_empty_args_prints_usage(capsys):
    assert cli.main([]) != 0
    assert "usage:" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert cli.main(["classify", "--input", "x", "--bogus", "1"]) == 1
    assert "unrecognized" in capsys.readouterr().err


def test_missing_required(capsys):
    assert cli.main(["classify"]) == 1
    assert "--input" in capsys.readouterr().err
    assert cli.main(["check", "--input", "x", "--p", "2"]) == 1


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"kmax": 3, "phi": "cuberoot", "alpha_tol": 0.05}))
    cfg = cli.parse_config(["extract", "--input", "x", "--config", str(conf), "--kmax", "5"])
    assert cfg.kmax == 5 and cfg.phi == "cuberoot" and cfg.alpha_tol == 0.05
    conf.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(cli.UsageError, match="nonsense"):
        cli.parse_config(["extract", "--input", "x", "--config", str(conf)])


def test_classify_vanishing(tmp_path):
    out = tmp_path / "v"
    assert cli.main(["gen", "--kind", "vanishing", "--out", str(out), "--seed", "2"]) == 0
    truth = json.loads((out / "truth.json").read_text())
    assert cli.main(["classify", "--input", str(out / "sequence.csv"), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["verdict"] == truth["verdict"] == "Vanishing"


def test_extract_two_bubbles(tmp_path):
    out = tmp_path / "d"
    assert cli.main(["gen", "--kind", "dichotomy", "--masses", "0.5,0.5", "--atoms", "4",
                     "--n-max", "20", "--out", str(out)]) == 0
    assert cli.main(["extract", "--input", str(out / "sequence.csv"), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["bubbles"]) == 2 and rep["disjointness_ok"] is True
    assert {"bubble_1.csv", "bubble_2.csv", "remainder.csv", "curves.csv"} <= set(os.listdir(out))


def test_extract_truncated_exit_code(tmp_path):
    out = tmp_path / "d"
    cli.main(["gen", "--kind", "dichotomy", "--masses", "0.4,0.3,0.3", "--n-max", "16",
              "--out", str(out)])
    assert cli.main(["extract", "--input", str(out / "sequence.csv"), "--out", str(out),
                     "--kmax", "1"]) == 2


def test_sobolev_planted(tmp_path):
    data, out = tmp_path / "u", tmp_path / "dec"
    assert cli.main(["gen", "--kind", "bumps", "--out", str(data)]) == 0
    assert cli.main(["sobolev", "--input", str(data), "--p", "2", "--q", "4",
                     "--out", str(out)]) == 0
    doc = json.loads((out / "decomposition.json").read_text())
    last = doc["norm_table"][-1]
    assert len(doc["profiles"]) == 2
    assert last["residual_iii"] <= 0.02 * last["u_lp"]
    assert (out / "profile_1.gfn").exists() and (out / "residuals.csv").exists()


def test_check_command(tmp_path):
    data = tmp_path / "u"
    cli.main(["gen", "--kind", "spreading", "--n-max", "6", "--out", str(data)])
    assert cli.main(["check", "--input", str(data), "--p", "2", "--q", "4",
                     "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "check.json").read_text())
    assert doc["count"] == 6 and doc["max_ratio"] > 0


def test_parse_error_reports_file_and_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("# dim=1\n1,0.0,1.0\n2,0.0,oops\n")
    assert cli.main(["classify", "--input", str(bad), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert f"{bad}:3" in err


def test_missing_input_is_an_error(tmp_path):
    assert cli.main(["extract", "--input", str(tmp_path / "none.csv"),
                     "--out", str(tmp_path)]) == 1


def test_reports_are_byte_identical(tmp_path):
    cli.main(["gen", "--kind", "dichotomy", "--masses", "0.6,0.4", "--atoms", "3",
              "--dust", "0.05", "--n-max", "16", "--seed", "5", "--out", str(tmp_path / "g")])
    blobs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        cli.main(["extract", "--input", str(tmp_path / "g" / "sequence.csv"), "--out", str(out)])
        blobs.append({f: (out / f).read_bytes() for f in sorted(os.listdir(out))})
    assert blobs[0] == blobs[1]


# ------------------------------------------------------------ plot data

def test_plot_data_files(tmp_path):
    items = [DiscreteMeasure([[0.0], [float(5 * n)]], [0.5, 0.5]) for n in range(1, 16)]
    rep = extract_profiles(MeasureSequence(tuple(items)))
    names = sorted(os.path.basename(p) for p in cli.emit_plot_data(rep, tmp_path / "a"))
    assert names == ["bubble_1.csv", "bubble_2.csv", "remainder.csv"]
    empty = extract_profiles(MeasureSequence((DiscreteMeasure.empty(1),) * 3))
    names = [os.path.basename(p) for p in cli.emit_plot_data(empty, tmp_path / "b")]
    assert names == ["remainder.csv"]
    head = (tmp_path / "a" / "bubble_1.csv").read_text().splitlines()[0]
    assert head.startswith("label,radius,inner_radius,inner_mass")


def test_residual_series_decreases(tmp_path):
    V = BumpSpec(1.0, 0.5)
    us, _ = gen_multibubble_sobolev([V], [lambda n: (-2.0 + 0.2 * n, 0.0)], 12, (96, 96), 0.1,
                                    origin=(-4.75, -4.75))
    us = [u * (1.0 + 1.0 / n) for n, u in enumerate(us, start=1)]
    dec = profile_extract(us, SobolevParams(2, 2))
    res = [norm_expansion_check(dec, n, 1) for n in dec.labels]
    cli.emit_plot_data(dec.report, tmp_path, residuals=res)
    rows = np.loadtxt(tmp_path / "residuals.csv", delimiter=",", skiprows=1)
    series = rows[:, 4]
    assert series[-1] <= series[0] and series[0] > 0
