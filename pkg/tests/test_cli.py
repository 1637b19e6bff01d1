import csv
import json

import numpy as np
import pytest

from csdip import io
from csdip.cli import main
from synthetic import digit_image


@pytest.fixture
def digit_png(tmp_path):
    path = tmp_path / "digit.png"
    io.save_image(path, digit_image(3, 0))
    return path


def test_pixel_round_trip_all_levels():
    v = np.arange(256)
    assert np.array_equal(io.signal_to_pixels(io.pixels_to_signal(v)), v)
    assert io.pixels_to_signal(0) == -1.0 and io.pixels_to_signal(255) == 1.0


def test_mse():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((3, 5)), rng.standard_normal((3, 5))
    loop = sum((a[i, j] - b[i, j]) ** 2 for i in range(3) for j in range(5)) / 15
    assert abs(io.mse(a, b) - loop) <= 1e-12
    assert io.mse(a, a) == 0.0
    ones = np.ones((4, 4))
    assert io.mse(-ones, ones) == 4.0
    with pytest.raises(ValueError):
        io.mse(a, b.T)


def test_container_round_trip(tmp_path):
    arrays = {"y": np.arange(5.0), "m": np.eye(2)}
    io.write_container(tmp_path / "c.bin", {"kind": "x"}, arrays)
    header, back = io.read_container(tmp_path / "c.bin")
    assert header["dtype"] == "f64le" and header["kind"] == "x"
    assert all(np.array_equal(back[k], v) for k, v in arrays.items())
    raw = (tmp_path / "c.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="truncated"):
        io.read_container(tmp_path / "t.bin")


def test_image_io(tmp_path, digit_png):
    x = io.load_image(digit_png)
    assert x.shape == (1, 28, 28) and x.min() >= -1 and x.max() <= 1
    rgb = np.random.default_rng(0).uniform(-1, 1, (3, 5, 4))
    io.save_image(tmp_path / "rgb.png", rgb)
    assert np.abs(io.load_image(tmp_path / "rgb.png") - rgb).max() <= 1 / 255 + 1e-12


def test_measure_recover_lasso_compare(tmp_path, digit_png):
    meas = tmp_path / "y.bin"
    assert main(["measure", "--image", str(digit_png), "--kind", "gaussian", "--m", "200",
                 "--seed", "1", "--out", str(meas)]) == 0
    header, arrays = io.read_container(meas)
    assert header["m"] == 200 and arrays["y"].shape == (200,)
    assert io.read_manifest(f"{meas}.manifest.json")["operator"]["seed"] == 1

    dip = tmp_path / "dip"
    assert main(["recover", "--measurements", str(meas), "--steps", "25", "--seed", "3",
                 "--out", str(dip)]) == 0
    for name in ("image.png", "trace.csv", "manifest.json", "recon.bin", "weights.bin"):
        assert (dip / name).exists()
    manifest = io.read_manifest(dip / "manifest.json")
    assert manifest["solver"]["seed"] == 3 and 5 <= manifest["chosen_step"] < 25
    with open(dip / "trace.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 25 and set(rows[0]) == {"step", "measurement_loss", "objective"}

    # bit-exact rerun from the same inputs
    again = tmp_path / "dip2"
    main(["recover", "--measurements", str(meas), "--steps", "25", "--seed", "3",
          "--out", str(again)])
    assert (again / "recon.bin").read_bytes() == (dip / "recon.bin").read_bytes()

    las = tmp_path / "lasso"
    assert main(["baseline-lasso", "--measurements", str(meas), "--lambda", "0.01",
                 "--iterations", "50", "--out", str(las)]) == 0
    table = tmp_path / "cmp.csv"
    assert main(["compare", "--runs", str(dip), str(las), "--truth", str(digit_png),
                 "--out", str(table)]) == 0
    with open(table) as f:
        rows = list(csv.DictReader(f))
    assert {r["method"] for r in rows} == {"cs-dip", "lasso-dct"}
    assert all(r["m"] == "200" and float(r["mse"]) >= 0 for r in rows)


def test_fourier_measure_and_prior(tmp_path, digit_png):
    meas = tmp_path / "f.bin"
    assert main(["measure", "--image", str(digit_png), "--kind", "fourier", "--lines", "4",
                 "--sigma2", "0.5", "--out", str(meas)]) == 0
    out = tmp_path / "run"
    assert main(["recover", "--measurements", str(meas), "--steps", "20", "--out", str(out)]) == 0
    prior = tmp_path / "prior.json"
    assert main(["estimate-prior", "--weights", str(tmp_path / "*" / "weights.bin"),
                 "--S", "50", "--T", "5", "--out", str(prior)]) == 0
    stats = json.loads(prior.read_text())
    assert stats["L"] == 4 and len(stats["sigma_diag"]) == 4
    assert main(["recover", "--measurements", str(meas), "--steps", "20", "--ll", "1",
                 "--prior", str(prior), "--out", str(tmp_path / "lr")]) == 0


def test_theory_verify_outputs(tmp_path):
    out = tmp_path / "th"
    assert main(["theory-verify", "--n", "3", "--d", "200", "--k", "4", "--trials", "2",
                 "--tau-max", "50", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["checks"]["residual_decay"]["trials"] == 2
    with open(out / "sign_changes.csv") as f:
        assert next(csv.reader(f)) == ["trial", "quantity", "bound", "pass"]


def test_errors(tmp_path, capsys, digit_png):
    assert main(["recover", "--measurements", str(tmp_path / "missing.bin"),
                 "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: FileNotFoundError:")
    assert main(["measure", "--image", str(digit_png), "--kind", "fourier", "--m", "10",
                 "--out", str(tmp_path / "y")]) == 1
    assert capsys.readouterr().err.startswith("error: ValueError: --lines")
    with pytest.raises(SystemExit) as exc:
        main(["measure", "--bogus"])
    assert exc.value.code != 0
