import json
import math

import numpy as np
import pytest

from qdsps.analytics import hbt_g2, synth_histogram
from qdsps.cli import hbt_report, main, read_histogram, write_histogram
from qdsps.counting import photocount_distribution
from qdsps.models import PulseEnvelope, make_2ls
from qdsps.sweep import read_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_sweep_default_rows_and_monotone_g2(capsys):
    code, out, _ = run(capsys, "sweep")
    assert code == 0
    meta, cols, data = read_csv(out)
    assert meta["system"] == "2ls"
    assert data.shape[0] == 24
    g2 = data[:, cols.index("g2_moments")]
    assert np.all(np.diff(g2) > 0)
    assert np.allclose(data[:, cols.index("g2_correlator")], g2, rtol=1e-3)


def test_sweep_cascade_channels_share_mean(capsys, tmp_path):
    a, b = tmp_path / "x.csv", tmp_path / "2x.csv"
    assert main(["sweep", "--system", "3ls", "--channel", "X", "--grid", "0.01:3:5", "--out", str(a)]) == 0
    assert main(["sweep", "--system", "3ls", "--channel", "2X", "--grid", "0.01:3:5", "--out", str(b)]) == 0
    _, ca, da = read_csv(a.read_text())
    _, cb, db = read_csv(b.read_text())
    assert np.all(np.abs(da[:, ca.index("mean_n")] - db[:, cb.index("mean_n")]) < 1e-6)
    assert np.all(np.isnan(da[:, ca.index("analytic_P2")]))
    assert np.all(np.isfinite(db[:, cb.index("analytic_P2")]))


def test_sweep_rejects_nonpositive_grid(capsys):
    code, _, err = run(capsys, "sweep", "--grid", "0,0.1")
    assert code == 2
    assert "> 0" in err


def test_config_file_errors_name_the_line(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("# comment\nsystem = 3ls\nnmax = lots\n")
    code, _, err = run(capsys, "sweep", "--config", str(cfg))
    assert code == 2
    assert f"{cfg}:3" in err
    cfg.write_text("colour = blue\n")
    code, _, err = run(capsys, "sweep", "--config", str(cfg))
    assert code == 2 and f"{cfg}:1" in err and "colour" in err


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("system = 3ls\nchannel = 2X\ngrid = 0.01, 0.1\nnmax = 4\n")
    code, out, _ = run(capsys, "sweep", "--config", str(cfg), "--nmax", "5")
    assert code == 0
    meta, cols, data = read_csv(out)
    assert meta["system"] == "3ls" and meta["nmax"] == "5"
    assert "P5" in cols and data.shape[0] == 2


def test_sweep_is_byte_identical(capsys, tmp_path):
    args = ["sweep", "--grid", "0.01:1:4", "--mc", "--ntraj", "2000", "--seed", "7"]
    outs = []
    for jobs in ("1", "1", "2"):
        path = tmp_path / f"run{len(outs)}.csv"
        assert main(args + ["--jobs", jobs, "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    def body(b):  # output path and job count are echoed in the header
        return [l for l in b.splitlines() if not l.startswith((b"# jobs", b"# out"))]

    assert body(outs[0]) == body(outs[1]) == body(outs[2])
    _, cols, data = read_csv(outs[0].decode())
    assert "mc_P2_se" in cols and np.all(data[:, cols.index("mc_P1")] > 0.5)


def test_sweep_json(capsys):
    code, out, _ = run(capsys, "sweep", "--grid", "0.01,0.1", "--format", "json")
    assert code == 0
    payload = json.loads(out)
    assert payload["format_version"] == 1
    assert len(payload["rows"]) == 2 and payload["columns"][0] == "gamma_T"


def test_hbt_matches_library(capsys, tmp_path):
    d = photocount_distribution(make_2ls(), PulseEnvelope(0.5))
    h = synth_histogram(d, 200_000, 0.01, seed=4)
    path = tmp_path / "h.txt"
    write_histogram(h, path)
    h2 = read_histogram(path)
    assert np.array_equal(h2.counts, h.counts) and h2.center_index == h.center_index
    code, out, _ = run(capsys, "hbt", str(path), "--json")
    assert code == 0
    report = json.loads(out)
    assert report == hbt_report(h)
    r = hbt_g2(h)
    assert report["g2_corr"] == r.g2 and report["g2_corr_err"] == r.g2_err


def test_hbt_side_peak_error(capsys, tmp_path):
    d = photocount_distribution(make_2ls(), PulseEnvelope(1.0))
    h = synth_histogram(d, 100_000, 0.0, seed=3)
    path = tmp_path / "h.txt"
    write_histogram(h, path)
    code, out, _ = run(capsys, "hbt", str(path), "--json", "--bg", "none")
    report = json.loads(out)
    assert report["N1_err"] == pytest.approx(math.sqrt(report["N1"]) / 4)


def test_hbt_error_paths(capsys, tmp_path):
    path = tmp_path / "zero.txt"
    path.write_text("# bin_width=0.1 period=5.0 center_index=200 n_side=4 window=1.0\n" + "0\n" * 400)
    code, _, err = run(capsys, "hbt", str(path))
    assert code == 1 and "undefined" in err
    path.write_text("0\n1\n")
    code, _, err = run(capsys, "hbt", str(path))
    assert code == 2 and "header" in err
    code, _, err = run(capsys, "hbt", str(tmp_path / "missing.txt"))
    assert code == 1


def test_synth_command(capsys, tmp_path):
    out = tmp_path / "s.txt"
    code, _, _ = run(capsys, "synth", "--gamma-t", "0.1", "--pulses", "1e5", "--seed", "2", "--out", str(out))
    assert code == 0
    h = read_histogram(out)
    assert h.n_side == 16 and h.counts.sum() > 0
