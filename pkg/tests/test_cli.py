import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from segncc.cli import main
from segncc.imagecore import GrayImage, SyntheticSpec, generate_synthetic, load_image, plant_template, save_png
from segncc.segmentation import coverage, segments_from_json


@pytest.fixture
def scene(tmp_path):
    t = generate_synthetic(SyntheticSpec(16, 16, "block-mosaic", block_size=4, seed=9))
    f = plant_template(generate_synthetic(SyntheticSpec(64, 64, "gradient")), t, 10, 7)
    save_png(t, tmp_path / "t.png")
    save_png(f, tmp_path / "f.png")
    return tmp_path


def test_match_json(scene, capsys):
    assert main(["match", "--source", str(scene / "f.png"), "--template", str(scene / "t.png")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"matches", "stats"}
    assert set(doc["stats"]) == {"positions", "slow_evals"}
    assert doc["stats"]["positions"] == 49 * 49
    assert {"u": 10, "v": 7} in [{"u": m["u"], "v": m["v"]} for m in doc["matches"]]
    for m in doc["matches"]:
        assert isinstance(m["u"], int) and isinstance(m["v"], int) and isinstance(m["rho"], float)


def test_match_csv_to_file_with_overlay(scene):
    out, overlay = scene / "m.csv", scene / "o.png"
    code = main([
        "match", "--source", str(scene / "f.png"), "--template", str(scene / "t.png"),
        "--format", "csv", "-o", str(out), "--overlay", str(overlay), "--nms",
    ])
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["u", "v", "rho"]
    assert ["10", "7"] == rows[1][:2]
    from PIL import Image

    img = np.asarray(Image.open(overlay))
    assert img.shape == (64, 64, 3)
    assert tuple(img[7, 10]) == (255, 0, 0) and tuple(img[22, 25]) == (255, 0, 0)


def test_match_usage_errors(scene):
    assert main(["match", "--source", str(scene / "f.png")]) == 1
    assert main(["match", "--source", str(scene / "f.png"), "--template", str(scene / "t.png"), "--precision", "2"]) == 1
    assert main(["match", "--source", str(scene / "f.png"), "--template", str(scene / "t.png"), "--format", "xml"]) == 1


def test_match_data_errors(scene):
    save_png(GrayImage(np.full((4, 4), 3, dtype=np.uint8)), scene / "flat.png")
    (scene / "junk.png").write_bytes(b"not an image")
    f, t = str(scene / "f.png"), str(scene / "t.png")
    assert main(["match", "--source", f, "--template", str(scene / "flat.png")]) == 2
    assert main(["match", "--source", f, "--template", str(scene / "junk.png")]) == 2
    assert main(["match", "--source", t, "--template", f]) == 2
    assert main(["match", "--source", f, "--template", str(scene / "missing.png")]) == 2


def test_segment(scene):
    out, render = scene / "s.json", scene / "r.png"
    assert main(["segment", "--template", str(scene / "t.png"), "--out", str(out), "--render", str(render)]) == 0
    segs = segments_from_json(out.read_text())
    assert (coverage(segs, 16, 16) == 1).all()
    assert load_image(render) == load_image(scene / "t.png")


def test_segment_kmax_and_errors(scene, capsys):
    assert main(["segment", "--template", str(scene / "t.png"), "--kmax", "2"]) == 0
    assert len(segments_from_json(capsys.readouterr().out)) <= 2
    assert main(["segment", "--template", str(scene / "t.png"), "--sigma", "-1"]) == 1


def test_bench_csv(scene):
    out = scene / "b.csv"
    code = main([
        "bench", "--source", str(scene / "f.png"), "--template", str(scene / "t.png"),
        "--template", str(scene / "t.png"), "--repeats", "1", "--out", str(out),
    ])
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 3 and all(len(r) == 14 for r in rows)
    assert rows[1][:4] == ["f", "t", "64x64", "16x16"]


def test_bench_json_stdout_and_engines(scene, capsys):
    code = main([
        "bench", "--source", str(scene / "f.png"), "--template", str(scene / "t.png"),
        "--repeats", "1", "--engines", "fft",
    ])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["rows"][0]["k_fast"] is None
    assert main(["bench", "--source", str(scene / "f.png"), "--template", str(scene / "t.png"), "--engines", "gpu"]) == 1


def test_synth_and_plant(tmp_path):
    assert main(["synth", "--kind", "uniform-noise", "--width", "8", "--height", "6", "--seed", "3", "--out", str(tmp_path / "t.pgm")]) == 0
    t = load_image(tmp_path / "t.pgm")
    assert t == generate_synthetic(SyntheticSpec(8, 6, "uniform-noise", seed=3))
    code = main([
        "synth", "--kind", "gradient", "--width", "30", "--height", "20",
        "--plant", str(tmp_path / "t.pgm"), "--at", "5", "4", "--out", str(tmp_path / "f.png"),
    ])
    assert code == 0
    assert load_image(tmp_path / "f.png").extract(5, 4, 8, 6) == t


def test_synth_errors(tmp_path):
    assert main(["synth", "--width", "8", "--height", "8", "--block-size", "0", "--out", str(tmp_path / "x.png")]) == 1
    assert main(["synth", "--kind", "plasma", "--width", "8", "--height", "8", "--out", str(tmp_path / "x.png")]) == 1


def test_no_command_is_usage_error():
    assert main([]) == 1


def test_module_entry_point(scene):
    proc = subprocess.run(
        [sys.executable, "-m", "segncc", "-v", "match", "--source", str(scene / "f.png"), "--template", str(scene / "t.png")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "best match u=10 v=7" in proc.stderr
    assert json.loads(proc.stdout)["matches"]
