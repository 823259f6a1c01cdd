import json

import numpy as np
import pytest

from fdmnet.cli import main
from fdmnet.fileio import load_hsic, load_mosa

MICRO_CFG = "bands=4\nwidth=8\nperiod=2\nwindow=4\ndepths=1,1,1,1\nheads=2\nmlp_ratio=2\n" \
            "patch_size=32\nbatch_size=1\n"


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["synth", "--seed", "2", "--size", "32", "32", "--out", "a.hsic"]) == 0
    assert main(["mosaic", "a.hsic", "--out", "a.mosa"]) == 0
    return tmp_path


def test_synth_mosaic_demosaic_pipeline(work):
    cube = load_hsic("a.hsic")
    assert cube.shape == (32, 32, 16)
    assert load_mosa("a.mosa").pattern.p == 4
    for method in ("bilinear", "lowpass"):
        assert main(["demosaic", "--method", method, "a.mosa", "--out", f"{method}.hsic"]) == 0
        assert load_hsic(f"{method}.hsic").shape == cube.shape


def test_demosaic_is_deterministic(work):
    main(["demosaic", "a.mosa", "--out", "x.hsic"])
    main(["demosaic", "a.mosa", "--out", "y.hsic"])
    assert (work / "x.hsic").read_bytes() == (work / "y.hsic").read_bytes()


def test_eval_text_and_json(work, capsys):
    capsys.readouterr()
    assert main(["eval", "a.hsic"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    fields = dict(kv.split("=") for kv in lines[0].split())
    assert set(fields) == {"file", "method", "psnr", "ssim", "sam", "mrae"}
    assert main(["eval", "a.hsic", "--json", "--method", "lowpass", "--out", "m.json"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert set(obj) == {"psnr", "ssim", "sam", "mrae", "method", "file"}
    assert obj["method"] == "lowpass"
    assert json.loads((work / "m.json").read_text()) == obj


def test_train_then_fdm_demosaic(work, capsys):
    (work / "micro.cfg").write_text(MICRO_CFG)
    assert main(["synth", "--seed", "3", "--size", "32", "32", "--bands", "4", "--out", "s.hsic"]) == 0
    assert main(["mosaic", "s.hsic", "--out", "s.mosa"]) == 0
    args = ["train", "s.hsic", "--config", "micro.cfg", "--steps", "2", "--seed", "4"]
    assert main(args + ["--out", "m1.ckpt", "--trace", "t1.csv"]) == 0
    assert main(args + ["--out", "m2.ckpt", "--trace", "t2.csv"]) == 0
    assert (work / "m1.ckpt").read_bytes() == (work / "m2.ckpt").read_bytes()
    assert (work / "t1.csv").read_text() == (work / "t2.csv").read_text()
    assert main(["demosaic", "--method", "fdm", "--checkpoint", "m1.ckpt", "s.mosa",
                 "--out", "f.hsic"]) == 0
    assert load_hsic("f.hsic").shape == (32, 32, 4)
    capsys.readouterr()
    assert main(["eval", "s.hsic", "--checkpoint", "m1.ckpt", "--method", "fdm"]) == 0
    assert "method=fdm" in capsys.readouterr().out


def test_export_falsecolor(work):
    assert main(["export-falsecolor", "a.hsic", "--out", "a.png"]) == 0
    assert main(["export-falsecolor", "a.hsic", "--bands", "1,2,3", "--out", "a.ppm"]) == 0
    assert main(["export-falsecolor", "a.hsic", "--bands", "0,2,3", "--out", "b.png"]) == 1


def test_usage_errors(work, capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["demosaic", "a.mosa", "--bogus"]) == 2
    assert main(["demosaic", "--method", "fdm", "a.mosa", "--out", "z.hsic"]) == 2
    assert main(["mosaic", "a.hsic"]) == 2  # missing --out
    (work / "bad.cfg").write_text("colour=red\n")
    assert main(["demosaic", "a.mosa", "--config", "bad.cfg", "--out", "z.hsic"]) == 2
    assert "usage" in capsys.readouterr().err


def test_runtime_errors(work):
    (work / "junk.hsic").write_bytes(b"HSIC 1 4 4 1\n" + bytes(3))
    assert main(["mosaic", "junk.hsic", "--out", "j.mosa"]) == 1
    assert main(["demosaic", "missing.mosa", "--out", "z.hsic"]) == 1


def test_gradcheck_exit_codes(monkeypatch, capsys):
    from fdmnet import gradsuite
    from fdmnet.gradcheck import GradcheckReport

    monkeypatch.setattr(gradsuite, "run_suite", lambda **kw: iter([
        ("good", GradcheckReport(1e-8, 1e-4, 3)), ("bad", GradcheckReport(1e-2, 1e-4, 3))]))
    assert main(["gradcheck"]) == 1
    assert "bad: FAIL" in capsys.readouterr().out
    monkeypatch.setattr(gradsuite, "run_suite", lambda **kw: iter([
        ("good", GradcheckReport(1e-8, 1e-4, 3))]))
    assert main(["gradcheck", "--no-network"]) == 0


def test_console_script_help():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "fdmnet.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "demosaic" in out.stdout
