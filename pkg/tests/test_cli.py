import json

import numpy as np
import pytest

from densecorr.cli import main
from densecorr.correspondences import read_correspondences


def test_synth_train_match_eval(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--n-pairs", "2", "--size", "16", "16", "--n-correspondences", "40",
                 "--translation", "2", "--seed", "3", "--out", str(data)]) == 0
    assert sorted(p.name for p in data.iterdir()) == ["pair_0000", "pair_0001"]
    ckpt = tmp_path / "net.ckpt"
    trace = tmp_path / "trace.csv"
    assert main(["train", "--data", str(data), "--steps", "2", "--radius", "4", "--ckpt", str(ckpt),
                 "--trace", str(trace)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["steps"] == 2
    assert trace.read_text().startswith("step,loss,n_pos,n_neg\n")
    matches = tmp_path / "m.txt"
    pair = data / "pair_0000"
    assert main(["match", "--ckpt", str(ckpt), "--pair", str(pair), "--out", str(matches)]) == 0
    m = read_correspondences(matches)
    assert len(m) == 40 and set(m.extra) == {"d1", "d2"}
    curve = tmp_path / "curve.csv"
    assert main(["eval-pck", "--pred", str(matches), "--gt", str(pair / "pairs.txt"),
                 "--alpha", "0.1", "--image-size", "16", "16", "--curve", str(curve)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"pck@5", "pck@10", "pck_alpha@0.1"}
    assert len(curve.read_text().splitlines()) == 101
    # filtered predictions are aligned to ground truth by query point
    assert main(["match", "--ckpt", str(ckpt), "--pair", str(pair), "--ratio-test", "0.9",
                 "--out", str(matches)]) == 0
    assert main(["eval-pck", "--pred", str(matches), "--gt", str(pair / "pairs.txt")]) == 0


def test_eval_pck_perfect(tmp_path, capsys):
    assert main(["synth", "--n-pairs", "1", "--size", "32", "32", "--out", str(tmp_path)]) == 0
    gt = tmp_path / "pair_0000" / "pairs.txt"
    curve = tmp_path / "c.csv"
    assert main(["eval-pck", "--pred", str(gt), "--gt", str(gt), "--T", "1", "5", "10",
                 "--curve", str(curve)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert all(v == 1.0 for v in report.values())
    rows = curve.read_text().splitlines()[1:]
    assert all(r.endswith(",1.0") for r in rows)


def test_pose_noiseless_scene(tmp_path, capsys):
    assert main(["synth", "--scene", "--points", "60", "--seed", "4", "--out", str(tmp_path)]) == 0
    out = tmp_path / "pose.json"
    assert main(["pose", "--matches", str(tmp_path / "matches.txt"),
                 "--intrinsics", str(tmp_path / "intrinsics.json"),
                 "--gt-pose", str(tmp_path / "gt_pose.json"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["rotation_deviation_deg"] < 1e-6
    assert report["translation_deviation_deg"] < 1e-6
    assert len(report["R"]) == 9 and report["inliers"] == 60


def test_grad_check_exit_zero(capsys):
    assert main(["grad-check", "--seeds", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 9 and all(line.startswith("PASS") for line in lines)


def test_usage_error_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["train", "--ckpt", "x", "--st", "maybe"])
    assert exc.value.code == 2


def test_runtime_error_exit_one(tmp_path, capsys):
    assert main(["match", "--ckpt", str(tmp_path / "missing.ckpt"), "--pair", str(tmp_path),
                 "--out", str(tmp_path / "m.txt")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("densecorr match: error:")
    assert main(["train", "--data", str(tmp_path), "--ckpt", str(tmp_path / "c")]) == 1


def test_synth_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--size", "32", "32", "--seed", "9", "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "pair_0000" / "img2.cnt1").read_bytes()
    b = (tmp_path / "b" / "pair_0000" / "img2.cnt1").read_bytes()
    assert a == b
