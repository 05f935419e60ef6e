import json

import numpy as np
import pytest

from rawhdr.cli import main
from rawhdr.formats import read_hdr, write_json


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def ds(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--scenes", "2", "--size", "32x32", "--seed", "1", "--out", str(out / "ds")]) == 0
    return out


def test_synth_eval_untrained(ds, capsys):
    ck = ds / "ck" / "model.rhnp"
    assert run(capsys, "init", "--seed", "0", "--out", str(ck))[0] == 0
    code, _, _ = run(capsys, "eval", "--manifest", str(ds / "ds" / "manifest.json"), "--checkpoint", str(ck),
                     "--mu", "5000", "--report", str(ds / "report.json"))
    assert code == 0
    report = json.loads((ds / "report.json").read_text())
    assert len(report["records"]) == 2
    for rec in report["records"]:
        assert all(np.isfinite(rec[k]) for k in ("psnr", "psnr_mu", "ssim"))
        assert rec["mu"] == 5000


def test_infer_and_merge(ds, capsys):
    ck = ds / "ck2" / "model.rhnp"
    net = ds / "net.json"
    write_json(net, {"base_width": 4, "unet_depth": 1, "gsg_stages": 2, "window_size": 4, "heads": 2, "mask_width": 4})
    assert run(capsys, "init", "--net-config", str(net), "--out", str(ck))[0] == 0
    raw = ds / "ds" / "scene_0000_ev+0.pgm"
    assert run(capsys, "infer", "--checkpoint", str(ck), "--raw", str(raw), "--out", str(ds / "o.rhdr"))[0] == 0
    assert read_hdr(ds / "o.rhdr").shape == (16, 16, 4)
    stack = [str(ds / "ds" / f"scene_0000_ev{e}.pgm") for e in ("-3", "+0", "+3")]
    code, out, _ = run(capsys, "merge", "--stack", *stack, "--evs=-3,0,3", "--out", str(ds / "m.rhdr"))
    assert code == 0 and json.loads(out)["coverage"] > 0
    assert np.array_equal(read_hdr(ds / "m.rhdr"), read_hdr(ds / "ds" / "scene_0000.rhdr"))


def test_train_and_resume(ds, capsys):
    net, tc = ds / "net_t.json", ds / "train.json"
    write_json(net, {"base_width": 4, "unet_depth": 1, "gsg_stages": 2, "window_size": 4, "heads": 2, "mask_width": 4})
    write_json(tc, {"epochs": 2, "crop_size": 32})
    args = ["train", "--manifest", str(ds / "ds" / "manifest.json"), "--net-config", str(net),
            "--train-config", str(tc), "--out", str(ds / "run")]
    assert run(capsys, *args)[0] == 0
    write_json(tc, {"epochs": 3, "crop_size": 32})
    code, out, _ = run(capsys, *args, "--resume")
    assert code == 0 and json.loads(out)["epochs"] == 3


def test_analyze(ds, capsys):
    code, out, _ = run(capsys, "analyze-channels", "--manifest", str(ds / "ds" / "manifest.json"), "--out", str(ds / "an"))
    assert code == 0 and json.loads(out)["ordering"] == "G>B>R"


def test_grad_check(capsys):
    code, out, _ = run(capsys, "grad-check", "--op", "lewin_block", "--seed", "0")
    assert code == 0 and json.loads(out)["pass"] is True


@pytest.mark.parametrize("argv", [
    ["synth", "--bogus"],
    ["frobnicate"],
    ["grad-check", "--op", "nope"],
    ["infer", "--checkpoint", "/nonexistent", "--raw", "/nonexistent", "--out", "x"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    line = json.loads(err.strip().splitlines()[-1])
    assert line["error"] == "usage" and line["message"]


def test_runtime_error(tmp_path, capsys):
    bad = tmp_path / "bad.rhnp"
    bad.write_bytes(b"garbage")
    write_json(tmp_path / "bad.json", {})
    raw = tmp_path / "r.pgm"
    raw.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
    write_json(tmp_path / "r.json", {"black_level": 0})
    code, _, err = run(capsys, "infer", "--checkpoint", str(bad), "--raw", str(raw), "--out", str(tmp_path / "o"))
    assert code == 1
    assert json.loads(err.strip())["error"] == "FormatError"
