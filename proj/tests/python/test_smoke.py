import json

import numpy as np
import pytest

import thermopipe as tp


def test_calibration_flattens_uniform_scene():
    cold = tp.synth_uniform_frames(7, 64, 48, 20.0, count=4, gain_quantum=0.02)
    hot = tp.synth_uniform_frames(7, 64, 48, 40.0, count=4, gain_quantum=0.02)
    cal = tp.build_two_point(cold, 20.0, hot, 40.0)
    assert cal.gain.shape == (48, 64)
    assert cal.bad_count == 0
    check = tp.synth_uniform_frames(7, 64, 48, 30.0, gain_quantum=0.02)[0]
    flat = tp.apply_nuc(cal, check)
    stats = tp.frame_stats(flat)
    assert stats["stddev"] < 1e-6 * stats["mean"]


def test_calibration_rejects_flat_references():
    frame = np.full((10, 10), 1000, dtype=np.uint16)
    with pytest.raises(ValueError):
        tp.build_two_point([frame], 20.0, [frame], 40.0)


def test_pipeline_and_agc(tmp_path):
    cold = tp.synth_uniform_frames(3, 32, 24, 20.0)
    hot = tp.synth_uniform_frames(3, 32, 24, 40.0)
    cal = tp.build_two_point(cold, 20.0, hot, 40.0)
    cal.save(tmp_path / "cal.json")
    pipe = tp.CorrectionPipeline(tp.CalibrationSet.load(tmp_path / "cal.json"))
    corrected, display = pipe.process(tp.synth_uniform_frames(3, 32, 24, 30.0)[0])
    assert corrected.shape == (24, 32)
    assert display.dtype == np.uint8
    ramp = np.array([[0.0, 100.0, 200.0]])
    assert tp.agc_display(ramp, 0, 100).tolist() == [[0, 128, 255]]


def test_frame_round_trip(tmp_path):
    frame = np.arange(12, dtype=np.uint16).reshape(3, 4) * 1000
    tp.store_frame_16(frame, tmp_path / "f.pgm")
    assert np.array_equal(tp.load_frame_16(tmp_path / "f.pgm"), frame)


def test_metrics_and_bench():
    assert tp.average_precision([True, False, True], 2) == pytest.approx(5 / 6, abs=1e-15)
    assert tp.average_precision([], 0) is None
    assert tp.share_percent(17740, 39770) == 44.61
    assert tp.bench_report(402, 35090)["fps_rounded"] == 11
    assert tp.bench_report(402, 6675)["fps_rounded"] == 60
    status = tp.thermal_status("CPU-therm 55000\nGPU-therm 89000\n")
    assert status["overall"] == "critical"


def test_cli_end_to_end(tmp_path):
    code, out, err = tp.run_cli(["synth", "--seed", "5", "--out-dir", str(tmp_path / "gen"),
                                 "--width", "64", "--height", "48", "--images", "6"])
    assert code == 0, err
    code, _, err = tp.run_cli(["calibrate", "--cold", str(tmp_path / "gen/refs/cold"),
                               "--hot", str(tmp_path / "gen/refs/hot"), "--output", str(tmp_path / "cal.json")])
    assert code == 0, err
    code, _, err = tp.run_cli(["correct", "--calibration", str(tmp_path / "cal.json"),
                               "--input", str(tmp_path / "gen/dataset"), "--output", str(tmp_path / "out")])
    assert code == 0, err
    stats = tp.dataset_stats(tmp_path / "out")
    assert stats["image_count"] == 6
    report = tp.evaluate_stub(tmp_path / "out", stub="drop=0,seed=1", strategy="tta", conf=0.1)
    assert report["recall"] == 1.0 if stats["box_count"] else True
    code, _, err = tp.run_cli(["bogus"])
    assert code == 2 and "unknown subcommand" in err


def test_cli_reports_are_json(tmp_path):
    code, out, err = tp.run_cli(["synth", "--seed", "1", "--out-dir", str(tmp_path / "g"),
                                 "--width", "32", "--height", "24", "--images", "2"])
    assert code == 0, err
    json.loads(out)
