import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from dajc import cli
from dajc.config import RunConfig
from dajc.corpus import load_image
from dajc.errors import ConfigError
from dajc.plot import plot_csv
from dajc.stream import Frame, save_pgm


@pytest.fixture
def small_pgm(tmp_path):
    cam = load_image("camera")
    path = tmp_path / "cam.pgm"
    save_pgm(Frame.from_array(cam.pixels[128:256, 128:256]), path)
    return path


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def parse_kv(text):
    kv = {}
    for line in text.splitlines():
        for part in line.split():
            if "=" in part:
                k, v = part.split("=", 1)
                kv[k] = v
    return kv


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- encode / decode --------------------------------------------------------

def test_encode_decode_round_trip(tmp_path, capsys, small_pgm):
    out = tmp_path / "cam.dajc"
    code, text, _ = run(capsys, "encode", small_pgm, "-o", out)
    assert code == 0 and out.exists()
    kv = parse_kv(text)
    assert float(kv["significant_fraction"]) <= 0.1
    manifest = json.loads((tmp_path / "cam.dajc.manifest.json").read_text())
    assert manifest["command"] == "encode" and manifest["seeds"]["seed"] == 0
    assert manifest["inputs"] == [str(small_pgm)]
    assert manifest["config"] == RunConfig().to_dict()

    rows = tmp_path / "q.csv"
    code, text, _ = run(capsys, "decode", out, "-o", tmp_path / "back.pgm", "--ref", small_pgm, "--csv", rows)
    assert code == 0
    assert float(parse_kv(text)["psnr_db"]) >= 25
    (row,) = read_rows(rows)
    assert set(row) == {"input", "reference", "psnr_db", "ssim", "mse"}
    assert 0 < float(row["ssim"]) <= 1
    assert (tmp_path / "back.pgm.manifest.json").exists()


def test_encode_is_deterministic(tmp_path, capsys, small_pgm):
    a, b, c = tmp_path / "a.dajc", tmp_path / "b.dajc", tmp_path / "c.dajc"
    run(capsys, "encode", small_pgm, "-o", a, "--seed", 3)
    run(capsys, "encode", small_pgm, "-o", b, "--seed", 3)
    run(capsys, "encode", small_pgm, "-o", c, "--seed", 4)
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()


def test_thresh_zero_keeps_everything(tmp_path, capsys, small_pgm):
    code, text, _ = run(capsys, "encode", small_pgm, "-o", tmp_path / "z.dajc", "--thresh-mv", 0)
    assert code == 0
    assert float(parse_kv(text)["significant_fraction"]) == 1.0


def test_bundled_image_encodes(tmp_path, capsys):
    path = tmp_path / "coins.pgm"
    save_pgm(load_image("coins"), path)
    assert run(capsys, "encode", path)[0] == 0
    assert (tmp_path / "coins.dajc").exists()


def test_config_file_drives_encoder(tmp_path, capsys, small_pgm):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"thresh_mv": 10, "seed": 9, "noise": False}))
    code, text, _ = run(capsys, "encode", small_pgm, "--config", cfg, "-o", tmp_path / "x.dajc")
    assert code == 0
    m = json.loads((tmp_path / "x.dajc.manifest.json").read_text())
    assert m["config_path"] == str(cfg) and m["config"]["thresh_mv"] == 10 and m["seeds"]["seed"] == 9


# -- exit codes -------------------------------------------------------------

def test_exit_codes(tmp_path, capsys, small_pgm):
    assert run(capsys, "encode", tmp_path / "missing.pgm")[0] == 1
    bad = tmp_path / "bad.dajc"
    bad.write_bytes(b"NOPE" + bytes(20))
    code, _, err = run(capsys, "decode", bad)
    assert code == 2 and "magic" in err
    p2 = tmp_path / "ascii.pgm"
    p2.write_text("P2\n1 1\n255\n0\n")
    assert run(capsys, "encode", p2)[0] == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"thresh_mv": 28, "bogus": 1}))
    code, _, err = run(capsys, "encode", small_pgm, "--config", cfg)
    assert code == 3 and "bogus" in err
    cfg.write_text("{not json")
    assert run(capsys, "encode", small_pgm, "--config", cfg)[0] == 3
    assert run(capsys, "encode", small_pgm, "--thresh-mv", -1)[0] == 3
    assert run(capsys, "sweep", "--kind", "nope")[0] == 3
    assert run(capsys, "decode", bad, "--calib", tmp_path / "missing.json")[0] in (1, 2)


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "dajc", "encode", str(tmp_path / "missing.pgm")],
        capture_output=True, text=True,
    )
    assert r.returncode == 1
    r = subprocess.run([sys.executable, "-m", "dajc"], capture_output=True, text=True)
    assert r.returncode == 3


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"unknown": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"v_min": 0.9, "v_max": 0.1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"seed": "zero"})
    cfg = RunConfig.from_dict({"thresh_mv": 12.5})
    assert cfg.v_thresh == pytest.approx(0.0125)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_threads_env(monkeypatch):
    monkeypatch.setenv("DAJC_THREADS", "2")
    assert cli.worker_count() == 2
    assert cli.parallel_map(lambda v: v * v, range(10)) == [v * v for v in range(10)]
    monkeypatch.setenv("DAJC_THREADS", "0")
    with pytest.raises(ConfigError):
        cli.worker_count()
    monkeypatch.setenv("DAJC_THREADS", "many")
    with pytest.raises(ConfigError):
        cli.worker_count()


# -- calibrate --------------------------------------------------------------

def test_calibrate_without_mismatch(tmp_path, capsys, small_pgm):
    out = tmp_path / "cal.json"
    code, text, _ = run(
        capsys, "calibrate", "-o", out, "--mismatch-sigma", 0, "--parasitic-ff", 0,
        "--images", small_pgm, "-N", 4,
    )
    assert code == 0
    (row,) = read_rows(tmp_path / "cal.report.csv")
    assert abs(float(row["delta_db"])) < 0.1
    assert abs(float(parse_kv(text)["median_delta_db"])) < 0.1
    meta = json.loads(out.read_text())["meta"]
    assert meta["noise_averaging"] == 4 and meta["mismatch_sigma"] == 0


def test_calibration_file_reloads_in_decode(tmp_path, capsys, small_pgm):
    cal = tmp_path / "cal.json"
    run(capsys, "calibrate", "-o", cal, "--images", small_pgm, "-N", 2, "--no-noise")
    enc = tmp_path / "x.dajc"
    assert run(capsys, "encode", small_pgm, "-o", enc, "--calib", cal)[0] == 0
    code, text, _ = run(capsys, "decode", enc, "--calib", cal, "--ref", small_pgm, "-o", tmp_path / "y.pgm")
    assert code == 0 and float(parse_kv(text)["psnr_db"]) > 20


def test_calibrate_mismatched_chip_corpus(tmp_path, capsys):
    """Noise-free 5% mismatch chip: calibration lifts the median PSNR by at least 5 dB."""
    out = tmp_path / "cal.json"
    code, text, _ = run(
        capsys, "calibrate", "-o", out, "--mismatch-sigma", 0.05, "--parasitic-ff", 1, "--no-noise",
    )
    assert code == 0
    rows = read_rows(tmp_path / "cal.report.csv")
    assert len(rows) == 10
    assert float(parse_kv(text)["median_delta_db"]) >= 5


# -- sweep ------------------------------------------------------------------

def test_thresh_sweep_monotone(tmp_path, capsys, small_pgm):
    code, _, _ = run(
        capsys, "sweep", "--kind", "thresh", "--images", small_pgm, "--out-dir", tmp_path,
        "--values", 0, 5, 10, 20, 28, 40, 80,
    )
    assert code == 0
    rows = read_rows(tmp_path / "sweep_thresh.csv")
    assert list(rows[0]) == cli.SWEEP_COLUMNS["thresh"]
    frac = [float(r["significant_fraction"]) for r in rows]
    assert frac[0] == 1.0
    assert all(a >= b for a, b in zip(frac, frac[1:]))
    assert (tmp_path / "sweep_thresh.svg").read_text().lstrip().startswith("<?xml")
    assert (tmp_path / "sweep_thresh.manifest.json").exists()


def test_framesize_sweep_constant_baseline(tmp_path, capsys, small_pgm):
    code, _, _ = run(
        capsys, "sweep", "--kind", "framesize", "--images", small_pgm, "--out-dir", tmp_path,
        "--values", 16, 32, 64, 128,
    )
    assert code == 0
    rows = read_rows(tmp_path / "sweep_framesize.csv")
    assert [int(r["blocks"]) for r in rows] == [4, 16, 64, 256]
    per_sample = {float(r["baseline_energy_per_sample_j"]) for r in rows}
    assert len(per_sample) == 1
    baseline = [float(r["baseline_energy_j"]) for r in rows]
    assert np.allclose(np.diff(np.log2(baseline)), 2.0)


def test_noise_sweep(tmp_path, capsys, small_pgm):
    code, _, _ = run(
        capsys, "sweep", "--kind", "noise", "--images", small_pgm, "--out-dir", tmp_path,
        "--values", 300, 1200,
    )
    assert code == 0
    rows = read_rows(tmp_path / "sweep_noise.csv")
    noise = [float(r["input_noise_uv"]) for r in rows]
    assert noise[1] == pytest.approx(2 * noise[0], rel=1e-4)


def test_plot_is_pure_function_of_csv(tmp_path):
    src = tmp_path / "rows.csv"
    src.write_text("x,y\n1,2\n2,3\n3,5\n")
    plot_csv(src, tmp_path / "a.svg", "x", ["y"])
    plot_csv(src, tmp_path / "b.svg", "x", ["y"])
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
