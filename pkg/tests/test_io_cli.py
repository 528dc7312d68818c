import json

import numpy as np
import pytest

from steplearn import io
from steplearn.cli import main
from steplearn.core import GridSpec
from steplearn.mra import db4
from steplearn.stepreg import StepRegularizer


def test_regularizer_roundtrip(tmp_path, rng):
    grid = GridSpec(-1, 2, 3)
    reg = StepRegularizer(grid, np.sort(rng.uniform(0, 1, (5, grid.n_bins)))[:, ::-1].copy())
    for filt, lv in ((None, 0), (db4(), 2)):
        io.write_regularizer(tmp_path / "r.txt", reg, filt, lv)
        back, f2, l2 = io.read_regularizer(tmp_path / "r.txt")
        assert np.array_equal(back.coeffs, reg.coeffs) and back.grid == grid
        assert l2 == lv and (f2 is None if filt is None else f2.taps == filt.taps)


def test_other_roundtrips(tmp_path, rng):
    lam, p, w = rng.uniform(size=2), np.array([1.0, 1.5]), rng.uniform(size=(2, 7))
    io.write_lambdas(tmp_path / "l.txt", lam, p, w)
    l2, p2, w2, f, lv = io.read_lambdas(tmp_path / "l.txt")
    assert np.array_equal(l2, lam) and np.array_equal(p2, p) and np.array_equal(w2, w) and f is None
    io.write_filter(tmp_path / "f.txt", db4(), 3)
    f, lv = io.read_filter(tmp_path / "f.txt")
    assert f.taps == db4().taps and lv == 3
    a = rng.normal(size=(4, 6))
    io.write_array(tmp_path / "a.txt", a)
    assert np.array_equal(io.read_array(tmp_path / "a.txt"), a)
    img = rng.integers(0, 256, (9, 13)) / 255
    io.write_pgm(tmp_path / "i.pgm", img)
    assert np.allclose(io.read_pgm(tmp_path / "i.pgm"), img, atol=1e-12)


def test_wrong_kind_rejected(tmp_path):
    io.write_filter(tmp_path / "f.txt", db4())
    with pytest.raises(io.FormatError, match="expected 'step'"):
        io.read_regularizer(tmp_path / "f.txt")


def _config(tmp_path, **kw):
    cfg = {"scene": {"side": 8, "n_squares": 2, "size_range": [1, 3]}, "m": 3, "held_out": 2,
           "grid": {"m1": -1, "m2": 2, "n": 3}, "out": str(tmp_path / "run")}
    cfg.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_gen_deterministic_and_guarded(tmp_path):
    c = _config(tmp_path)
    assert main(["gen", "--config", c]) == 0
    cdir = tmp_path / "run" / "corpus"
    before = {p: p.read_bytes() for p in cdir.rglob("*") if p.is_file()}
    assert main(["gen", "--config", c]) == 0
    assert {p: p.read_bytes() for p in cdir.rglob("*") if p.is_file()} == before
    assert main(["gen", "--config", c, "--seed", "7"]) == 2
    (cdir / "train" / "pair_000_noisy.txt").write_text("shape 1\n0\n")
    assert main(["gen", "--config", c]) == 2
    assert main(["train", "--config", c]) == 2
    assert main(["gen", "--config", c, "--force"]) == 0
    assert main(["train", "--config", c]) == 0


def test_invalid_config(tmp_path):
    assert main(["gen", "--config", _config(tmp_path, transform={"filter": 3.141592653589793, "levels": 1})]) == 2
    assert main(["gen", "--config", _config(tmp_path, bogus=1)]) == 2
    assert main(["train", "--config", _config(tmp_path, data={"clean": [[5.0]], "noisy": [[5.0]]})]) == 2


def test_zero_noise_train(tmp_path):
    c = _config(tmp_path, noise={"kind": "gaussian", "params": {"sigma": 0.0}})
    assert main(["gen", "--config", c]) == 0
    assert main(["train", "--config", c]) == 0
    _, rows = io.read_csv(tmp_path / "run" / "metrics.csv")
    assert float(rows[-1][2]) == 0.0


def test_params_route_scalar(tmp_path, capsys):
    c = _config(tmp_path, route="params", data={"clean": [[1.0]], "noisy": [[2.0]]})
    assert main(["train", "--config", c]) == 0
    lam, *_ = io.read_lambdas(tmp_path / "run" / "lambdas.txt")
    assert lam[0] == pytest.approx(1.0, abs=1e-6)


def test_zero_regularizer_passthrough(tmp_path, rng):
    grid = GridSpec(-1, 2, 3)
    io.write_regularizer(tmp_path / "zero.txt", StepRegularizer.zero(grid, 6))
    sig = rng.uniform(-0.9, 1.9, 6)
    io.write_array(tmp_path / "sig.txt", sig)
    c = _config(tmp_path)
    assert main(["denoise", "--config", c, "--reg", str(tmp_path / "zero.txt"),
                 "--input", str(tmp_path / "sig.txt")]) == 0
    assert np.array_equal(io.read_array(tmp_path / "run" / "denoised" / "pair_000.txt"), sig)
    io.write_array(tmp_path / "far.txt", np.full(6, 9.0))
    assert main(["denoise", "--config", c, "--reg", str(tmp_path / "zero.txt"),
                 "--input", str(tmp_path / "far.txt")]) == 2


def test_eval_and_operator_mode(tmp_path, rng):
    c = _config(tmp_path)
    assert main(["gen", "--config", c]) == 0
    assert main(["train", "--config", c]) == 0
    run = tmp_path / "run"
    assert main(["eval", "--config", c, "--reg", str(run / "regularizer.txt")]) == 0
    _, rows = io.read_csv(run / "eval.csv")
    assert [r[0] for r in rows] == ["none", "regularizer.txt"]
    io.write_lambdas(tmp_path / "lam.txt", [0.1], [1.0], np.ones((1, 4)))
    io.write_array(tmp_path / "g.txt", rng.normal(size=4))
    c2 = _config(tmp_path, operator=[0.5, 0.6, 0.7, 0.8])
    assert main(["denoise", "--config", c2, "--reg", str(tmp_path / "lam.txt"),
                 "--input", str(tmp_path / "g.txt")]) == 0
    header, mon = io.read_csv(run / "denoised" / "monitor_000.csv")
    assert header == ["iteration", "step_norm", "objective", "surrogate"]
    obj = [float(r[2]) for r in mon]
    assert all(b <= a + 1e-10 for a, b in zip(obj, obj[1:]))
    c3 = _config(tmp_path, operator=[1.5, 0.6, 0.7, 0.8])
    assert main(["denoise", "--config", c3, "--reg", str(tmp_path / "lam.txt"),
                 "--input", str(tmp_path / "g.txt")]) == 2


def test_path_command(tmp_path):
    assert main(["path", "--config", _config(tmp_path)]) == 0
    _, rows = io.read_csv(tmp_path / "run" / "path.csv")
    errs = [float(r[2]) for r in rows]
    assert errs == sorted(errs, reverse=True)
