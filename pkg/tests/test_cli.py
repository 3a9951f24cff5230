import json

import pytest

from dlorenz.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_henon_classify(capsys):
    code, out, _ = run(capsys, "henon", "--m1", "0", "--m2", "0.85", "--b", "0.7", "classify")
    assert code == 0 and json.loads(out)["label"] == "lorenz-candidate"


def test_henon_missing_flag(capsys):
    with pytest.raises(SystemExit) as err:
        main(["henon", "--m1", "0", "--m2", "0.85", "classify"])
    assert err.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_henon_inverse_needs_invertible_map(capsys):
    code, _, err = run(capsys, "henon", "--m1", "0", "--m2", "0.85", "--b", "0", "--inverse", "classify")
    assert code == 2 and "inverse" in err


def test_inverse_orbit_retraces_forward_orbit(tmp_path, capsys):
    fwd, back = tmp_path / "f.csv", tmp_path / "b.csv"
    common = ["henon", "--m1", "0", "--m2", "0.85", "--b", "0.7", "--n-transient", "0", "--n-keep", "5"]
    assert main(common + ["--out", str(fwd), "orbit"]) == 0
    last = [float(v) for v in fwd.read_text().splitlines()[-1].split(",")[1:]]
    assert main(common + ["--s0", *map(str, last), "--n-keep", "4", "--out", str(back), "--inverse",
                          "orbit"]) == 0
    f_rows = [[float(v) for v in r.split(",")[1:]] for r in fwd.read_text().splitlines()[1:]]
    b_rows = [[float(v) for v in r.split(",")[1:]] for r in back.read_text().splitlines()[1:]]
    for got, want in zip(b_rows, reversed(f_rows[:-1])):
        assert got == pytest.approx(want, abs=1e-12)


def test_henon_lyapunov_diverged_exit_code(capsys):
    code, _, err = run(capsys, "henon", "--m1", "5", "--m2", "0", "--b", "0.5", "--s0", "100", "100", "100",
                       "lyapunov")
    assert code == 3 and "diverged" in err


def test_powers(capsys):
    assert run(capsys, "powers")[0] == 0
    assert run(capsys, "powers", "--k-max", "64")[0] == 0
    assert run(capsys, "powers", "--mu2", "0.5", "--lambda", "0.5")[0] == 2
    code, _, err = run(capsys, "powers", "--float64")
    assert code == 3 and "float64" in err


def test_sweep_config_and_rerun(tmp_path, capsys):
    cfg = tmp_path / "s.ini"
    out = tmp_path / "g.csv"
    cfg.write_text("[grid]\nM1 = -0.1 0.1 3\nM2 = 0.8 0.9 2\nB = 0.7\n\n[protocol]\nn = 3000\n"
                   "n_transient = 500\n\n[run]\nthreads = 2\n")
    assert run(capsys, "sweep", "--config", str(cfg), "--out", str(out))[0] == 0
    first = out.read_bytes()
    assert run(capsys, "sweep", "--config", str(cfg), "--out", str(out), "--threads", "1")[0] == 0
    assert out.read_bytes() == first
    assert first.decode().splitlines()[0] == "M1,M2,B,label,L1,L2,L3,sumL,n,flags"
    assert len(first.decode().splitlines()) == 7


def test_sweep_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "s.ini"
    out = tmp_path / "g.csv"
    cfg.write_text("[grid]\nM1 = -0.1 0.1 3\nM2 = 0.85\nB = 0.7\n[protocol]\nn = 3000\n")
    assert run(capsys, "sweep", "--config", str(cfg), "--axis", "M1=0,0.1,2", "--n", "2000",
               "--out", str(out))[0] == 0
    rows = out.read_text().splitlines()[1:]
    assert len(rows) == 2 and rows[0].split(",")[-2] == "2000"


@pytest.mark.parametrize("text", ["[grid]\nM9 = 1\n", "[grid]\nM1 = 1 2\n", "[wat]\nx = 1\n",
                                  "[grid]\nM1 = 0 1 2\nM2 = 1\nB = 1\n[protocol]\nspeed = 3\n", "garbage"])
def test_sweep_bad_config(tmp_path, capsys, text):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    assert run(capsys, "sweep", "--config", str(cfg))[0] == 2


def test_sweep_missing_config(capsys):
    assert run(capsys, "sweep", "--config", "/nonexistent/s.ini")[0] == 2


def test_sweep_empty_grid(tmp_path, capsys):
    out = tmp_path / "e.csv"
    assert run(capsys, "sweep", "--axis", "M1=0,1,0", "--fixed", "M2=0.8", "--fixed", "B=0.7",
               "--out", str(out))[0] == 0
    assert out.read_text().splitlines() == ["M1,M2,B,label,L1,L2,L3,sumL,n,flags"]


def test_sweep_unwritable_output(capsys):
    code = run(capsys, "sweep", "--axis", "M1=0,1,1", "--fixed", "M2=0.8", "--fixed", "B=0.7",
               "--out", "/nonexistent/dir/x.csv", "--n", "100")[0]
    assert code == 4


def test_rescale_ladders(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert run(capsys, "rescale", "--case", "IIa", "--k", "10", "13", "--samples", "5", "--out", str(out))[0] == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("case,k,j,mu1") and len(rows) == 3
    assert rows[1].split(",")[2] == "4"
    code, out_text, _ = run(capsys, "rescale", "--mu2-positive", "--k", "10", "12", "--n", "2000")
    lines = out_text.splitlines()
    assert code == 0 and lines[0].startswith("k,j,mu2,x1_sup") and lines[1].endswith("diverged")


def test_rescale_rejects_degenerate_family(tmp_path, capsys):
    fam = tmp_path / "f.ini"
    fam.write_text("[family]\ncase = I\nb2 = 0\n")
    code, _, err = run(capsys, "rescale", "--config", str(fam), "--k", "10")
    assert code == 2 and "simple:b2" in err


def test_scan_delta(capsys):
    code, out, _ = run(capsys, "scan-delta", "--k-range", "11", "12", "--m1", "0", "--m2", "0.85",
                       "--n", "50000")
    rep = json.loads(out)
    assert code == 0 and rep["boxes"][0]["hits"] == 1 and rep["boxes"][1]["skipped"]
