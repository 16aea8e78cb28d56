import csv
import json

import numpy as np
import pytest

from studentrmt.cli import main
from studentrmt.dos import mp_edges
from studentrmt.output import read_manifest


def _rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_dos_gaussian_edges(tmp_path):
    out = tmp_path / "dos.csv"
    fig = tmp_path / "dos.png"
    assert main(["dos", "--law", "gaussian", "--Q", "2", "--points", "50", "--out", str(out), "--figure", str(fig)]) == 0
    meta = json.loads(out.with_suffix(".json").read_text())
    lo, hi = mp_edges(0.5)
    assert abs(meta["lambda_min"] - lo) < 1e-10 and abs(meta["lambda_max"] - hi) < 1e-10
    rows = _rows(out)
    assert len(rows) == 50 and all(float(r["rho"]) >= 0 for r in rows)
    assert read_manifest(out)["command"] == "dos"
    assert fig.stat().st_size > 0


def test_dos_student_writes_branch_labels(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["dos", "--mu", "4", "--Q", "2", "--lambda-range", "0.1,30", "--points", "40", "--out", str(out)]) == 0
    branches = {r["branch"] for r in _rows(out)}
    assert branches <= {"gap", "bulk", "tail-asymptotic"}
    assert "bulk" in branches


def test_dos_missing_mu_is_usage_error(tmp_path, capsys):
    out = tmp_path / "x.csv"
    assert main(["dos", "--law", "student", "--Q", "2", "--out", str(out)]) == 2
    assert not out.exists()
    assert "mu" in capsys.readouterr().err


def test_dos_rejects_bad_q(tmp_path):
    assert main(["dos", "--law", "gaussian", "--Q", "0.5", "--out", str(tmp_path / "x.csv")]) == 2


def test_sample_deterministic_across_threads(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    common = ["sample", "--mu", "5", "--N", "20", "--Q", "2", "--samples", "40", "--seed", "3", "--bins", "20"]
    assert main(common + ["--threads", "1", "--out", str(a)]) == 0
    assert main(common + ["--threads", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert read_manifest(a)["seed"] == 3


def test_sample_ks_and_mle(tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert main(["sample", "--mu", "4", "--N", "10", "--Q", "3", "--samples", "20", "--estimator", "mle",
                 "--ks", "--out", str(out)]) == 0
    meta = json.loads(out.with_suffix(".json").read_text())
    assert 0 <= meta["ks_distance"] <= 1
    assert "KS distance" in capsys.readouterr().out


def test_kl_table_single_cell_and_gaussian_row(tmp_path, capsys):
    out = tmp_path / "kl.csv"
    fig = tmp_path / "kl.png"
    assert main(["kl-table", "--mu-list", "4,inf", "--Q-list", "2", "--out", str(out), "--figure", str(fig)]) == 0
    rows = _rows(out)
    assert len(rows) == 2
    zp = {r["mu"]: float(r["Zprime_over_N"]) for r in rows}
    assert abs(zp["4.0"] - 0.568792) < 1e-4
    assert abs(zp["inf"] - 0.5) < 1e-12
    assert out.with_suffix(".txt").exists() and fig.exists()
    assert "gaussian" in capsys.readouterr().out


def test_kl_table_rejects_small_mu(tmp_path):
    assert main(["kl-table", "--mu-list", "2", "--Q-list", "2", "--out", str(tmp_path / "k.csv")]) == 2


@pytest.fixture(scope="module")
def synth_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("synth") / "returns.csv"
    assert main(["synth", "--N", "60", "--T", "300", "--mu", "3.5", "--rho", "0.2", "--seed", "1", "--out", str(p)]) == 0
    return p


def test_empirical_km0_and_rescale(synth_file, tmp_path):
    raw, resc = tmp_path / "raw.csv", tmp_path / "resc.csv"
    fig = tmp_path / "e.png"
    base = ["empirical", "--input", str(synth_file), "--window", "200", "--step", "50", "--mu", "3.5"]
    assert main(base + ["--Km", "1", "--out", str(raw), "--figure", str(fig)]) == 0
    assert main(base + ["--Km", "1", "--rescale-volatility", "--out", str(resc)]) == 0
    m_raw = json.loads(raw.with_suffix(".json").read_text())
    m_resc = json.loads(resc.with_suffix(".json").read_text())
    assert m_resc["ks_mp"] < m_raw["ks_mp"]
    assert fig.exists()
    k0 = tmp_path / "k0.csv"
    assert main(base + ["--Km", "0", "--out", str(k0)]) == 0
    m0 = json.loads(k0.with_suffix(".json").read_text())
    assert m0["renormalisation_factors"] == [1.0] * 3
    spectra = _rows(tmp_path / "k0_spectra.csv")
    assert len(spectra) == 60


def test_empirical_errors(tmp_path, synth_file):
    assert main(["empirical", "--window", "10"]) == 2
    assert main(["empirical", "--input", str(tmp_path / "none.csv"), "--window", "10"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("date,A,B\n2020-01-01,1,x\n")
    assert main(["empirical", "--input", str(bad), "--window", "1"]) == 2
    assert main(["empirical", "--input", str(synth_file), "--window", "100", "--Km", "60"]) == 2


def test_synth_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["synth", "--N", "5", "--T", "20", "--seed", "4", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_version_and_help(capsys):
    assert main(["--version"]) == 0
    assert main([]) == 2
    assert main(["dos", "--help"]) == 0
