from __future__ import annotations

import subprocess
import sys

import numpy as np
import pytest

from fporient.cli import main
from fporient.errors import DimensionMismatch, InvalidParameter
from fporient.fileio import (parse_keyvalues, read_field, read_image, read_mask, write_field,
                             write_pgm)
from fporient.orientation import from_angle
from fporient.overlay import overlay_segments, render_overlay, segment_pixels
from fporient.pipeline import ARTIFACTS


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert run_cli("synth", "--width", 256, "--height", 256, "--loop", "128,100", "--seed", 3, "-o", d) == 0
    return d


@pytest.fixture(scope="module")
def run_dirs(synth_dir, tmp_path_factory):
    outs = []
    for k in range(2):
        d = tmp_path_factory.mktemp(f"run{k}")
        code = run_cli("run", synth_dir / "image.pgm", "-o", d, "--truth", synth_dir / "truth.orf",
                       "--no-figure" if k else "--figure")
        outs.append((code, d))
    return outs


class TestRun:
    def test_blank_image_exit_3(self, tmp_path):
        write_pgm(tmp_path / "white.pgm", np.full((96, 96), 255, np.uint8))
        assert run_cli("run", tmp_path / "white.pgm", "-o", tmp_path / "out") == 3

    def test_unreadable_exit_2(self, tmp_path):
        (tmp_path / "bad.pgm").write_bytes(b"not an image")
        assert run_cli("run", tmp_path / "bad.pgm", "-o", tmp_path / "out") == 2
        assert run_cli("run", tmp_path / "missing.pgm", "-o", tmp_path / "out") == 2

    @pytest.mark.slow
    def test_artifacts(self, run_dirs):
        code, d = run_dirs[0]
        assert code == 0
        for name in ARTIFACTS:
            assert (d / name).is_file(), name
        assert (d / "report.png").is_file()
        report = parse_keyvalues((d / "report").read_text())
        assert float(report["T_s"]) > 0
        assert int(report["iterations"]) >= 1
        assert all(float(v) >= 0 for k, v in report.items() if k.startswith("time_"))
        assert float(report["refined_mean_deg"]) < 10

    @pytest.mark.slow
    def test_deterministic(self, run_dirs):
        (_, a), (_, b) = run_dirs
        for name in ARTIFACTS:
            if name.endswith((".orf", ".pgm", ".png")):
                assert (a / name).read_bytes() == (b / name).read_bytes(), name


class TestSubcommands:
    def test_synth_outputs(self, synth_dir):
        img = read_image(synth_dir / "image.pgm")
        assert img.shape == (256, 256)
        assert read_mask(synth_dir / "footprint.pgm").any()
        assert read_field(synth_dir / "truth.orf")[100, 128] == 0

    def test_synth_corrupt(self, tmp_path):
        assert run_cli("synth", "--width", 96, "--height", 96, "--corrupt", 48, 48, 10, "-o", tmp_path) == 0
        truth = read_field(tmp_path / "truth.orf")
        bad = read_field(tmp_path / "corrupted.orf")
        assert (truth[48, 40:57] != bad[48, 40:57]).all()
        assert (truth[0] == bad[0]).all()

    def test_preprocess_and_extract(self, synth_dir, tmp_path, capsys):
        assert run_cli("preprocess", synth_dir / "image.pgm", "-o", tmp_path) == 0
        for name in ("equalized.pgm", "mask.pgm", "amplified.pgm"):
            assert (tmp_path / name).is_file()
        assert "threshold" in parse_keyvalues(capsys.readouterr().out)
        assert run_cli("extract", tmp_path / "amplified.pgm", "-o", tmp_path / "o.orf") == 0
        assert read_field(tmp_path / "o.orf").shape == (256, 256)
        assert run_cli("period", tmp_path / "o.orf", tmp_path / "amplified.pgm") == 0
        assert 5 < float(parse_keyvalues(capsys.readouterr().out)["T_s"]) < 14

    def test_eval_self(self, synth_dir, capsys):
        t = synth_dir / "truth.orf"
        assert run_cli("eval", t, t) == 0
        stats = parse_keyvalues(capsys.readouterr().out)
        assert float(stats["mean_deg"]) == 0 and float(stats["max_deg"]) == 0

    def test_eval_conjugate_45(self, tmp_path, capsys):
        f = np.full((16, 16), from_angle(np.pi / 4))
        write_field(tmp_path / "a.orf", f)
        write_field(tmp_path / "b.orf", np.conj(f))
        assert run_cli("eval", tmp_path / "a.orf", tmp_path / "b.orf") == 0
        stats = parse_keyvalues(capsys.readouterr().out)
        assert float(stats["mean_deg"]) == pytest.approx(90)
        assert float(stats["max_deg"]) == pytest.approx(90)

    def test_eval_mask(self, tmp_path, capsys):
        f = np.full((8, 8), from_angle(0.2))
        write_field(tmp_path / "a.orf", f)
        write_pgm(tmp_path / "m.pgm", np.zeros((8, 8), bool))
        assert run_cli("eval", tmp_path / "a.orf", tmp_path / "a.orf", "--mask", tmp_path / "m.pgm") == 2

    def test_render(self, tmp_path):
        write_field(tmp_path / "f.orf", np.full((32, 40), 1 + 0j))
        assert run_cli("render", tmp_path / "f.orf", "-o", tmp_path / "o.png") == 0
        assert read_image(tmp_path / "o.png").shape == (32, 40)

    def test_config_and_override(self, tmp_path, synth_dir, capsys):
        (tmp_path / "cfg").write_text("segment_length = 40\ngrid_step = 24\n")
        write_field(tmp_path / "f.orf", np.full((256, 256), 1 + 0j))
        assert run_cli("period", tmp_path / "f.orf", synth_dir / "image.pgm", "--config", tmp_path / "cfg",
                       "--segment_length", 32) == 0
        out = parse_keyvalues(capsys.readouterr().out)
        assert float(out["T_s"]) == pytest.approx(32 / float(out["f_s"]))
        assert int(out["grid_segments"]) == len(range(12, 256, 24)) ** 2

    def test_bad_parameter_exit_2(self, tmp_path, synth_dir):
        assert run_cli("extract", synth_dir / "image.pgm", "-o", tmp_path / "x.orf", "--r", 14) == 2

    def test_low_reliability_exit_4(self, tmp_path, synth_dir):
        write_field(tmp_path / "weak.orf", np.full((256, 256), 0.1 + 0j))
        assert run_cli("period", tmp_path / "weak.orf", synth_dir / "image.pgm") == 4

    def test_console_script(self):
        res = subprocess.run([sys.executable, "-m", "fporient.cli", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "synth" in res.stdout


class TestOverlay:
    def test_count(self):
        f = np.ones((50, 70), complex)
        assert len(overlay_segments(f, 8)) == (70 // 8) * (50 // 8)

    def test_zero_field_transparent(self, rng):
        img = rng.integers(0, 256, (40, 40)).astype(np.uint8)
        out = render_overlay(img, np.zeros((40, 40), complex), 8)
        np.testing.assert_array_equal(out[..., 0], img)
        assert (out[..., 1] == 255).all()

    def test_phase_zero_horizontal(self):
        img = np.full((40, 40), 255, np.uint8)
        out = render_overlay(img, np.ones((40, 40), complex), 8)[..., 0]
        for (i, j), angle, alpha in overlay_segments(np.ones((40, 40), complex), 8):
            assert angle == 0 and alpha == 1
            rows, cols = segment_pixels((i, j), angle, 6.4, img.shape)
            assert (rows == i).all()
            assert (out[i, cols] == 0).all()
        dark_rows = np.unique(np.nonzero(out < 255)[0])
        np.testing.assert_array_equal(dark_rows, np.arange(4, 40, 8))

    def test_opacity_from_magnitude(self):
        img = np.full((16, 16), 200, np.uint8)
        out = render_overlay(img, np.full((16, 16), 0.5 + 0j), 8)[..., 0]
        assert out[4, 4] == 100

    def test_errors(self):
        with pytest.raises(InvalidParameter):
            overlay_segments(np.ones((8, 8), complex), 3)
        with pytest.raises(DimensionMismatch):
            render_overlay(np.zeros((8, 8)), np.ones((8, 9), complex))


def test_cap_exit_5_writes_artifacts(synth_dir, tmp_path, monkeypatch):
    import fporient.pipeline as pipeline
    from fporient.errors import IterationCapExceeded

    def capped(image, M_F, T_s, params, field=None):
        raise IterationCapExceeded("cap", field=field, iterations=params.iteration_cap)

    monkeypatch.setattr(pipeline, "refine", capped)
    assert run_cli("run", synth_dir / "image.pgm", "-o", tmp_path, "--no-figure") == 5
    for name in ARTIFACTS:
        assert (tmp_path / name).is_file()
    report = parse_keyvalues((tmp_path / "report").read_text())
    assert report["capped"] == "true" and report["iterations"] == "100"
