"""Tests for the command line interface of via_inspector."""

import json
from pathlib import Path
from unittest.mock import MagicMock

import numpy as np
import pytest

import via_inspector
from via_inspector.config import LightConfig, load_scene
from via_inspector.formats import load_depth_map, read_summary, save_depth_map
import via_inspector.main as main
from via_inspector.synthetic import analytic_depth, nominal_diameter


SCENES = Path(via_inspector.__file__).parent / "scenes"


@pytest.fixture
def rendered(tmp_path, gentle_scene, seven_lights):
    """Render the gentle scene under seven lights and return the output directory."""
    scene_path = tmp_path / "scene.json"
    scene_path.write_text(gentle_scene.model_dump_json(), encoding="utf-8")
    lights_path = tmp_path / "lights_in.json"
    lights_path.write_text(LightConfig.from_light_set(seven_lights).model_dump_json(), encoding="utf-8")
    out_dir = tmp_path / "render"
    assert main.run_cli(["render", str(scene_path), "--lights", str(lights_path), "--out-dir", str(out_dir)]) == 0
    return out_dir


def _frames(directory):
    return [str(path) for path in sorted(directory.glob("frame_*.pgm"))]


def test_lightcheck_prints_range(capsys):
    """Test lightcheck prints both heights with six significant digits."""
    assert main.run_cli(["lightcheck", "--na", "0.25", "--n-substrate", "1.5", "--offset-mm", "10"]) == 0
    assert capsys.readouterr().out == "11.1803 18.0739\n"


def test_lightcheck_prints_empty(capsys):
    """Test lightcheck prints EMPTY when no height is admissible."""
    assert main.run_cli(["lightcheck", "--na", "0.4", "--n-substrate", "1.5", "--offset-mm", "10"]) == 0
    assert capsys.readouterr().out == "EMPTY\n"


def test_lightcheck_invalid_na(monkeypatch):
    """Test an NA at the immersion index is an input error."""
    monkeypatch.setattr(main.logger, "error", MagicMock())
    assert main.run_cli(["lightcheck", "--na", "1.0", "--n-substrate", "1.5", "--offset-mm", "10"]) == 1
    assert "InvalidNA" in main.logger.error.call_args.args[0]


@pytest.mark.parametrize(
    "argv",
    [[], ["reconstruct"], ["inspect", "--in", "depth.fdm1"], ["lightcheck", "--na", "abc"], ["teleport"]],
)
def test_usage_errors(monkeypatch, argv):
    """Test malformed command lines exit with 1 instead of raising SystemExit."""
    monkeypatch.setattr(main.logger, "error", MagicMock())
    assert main.run_cli(argv) == 1
    main.logger.error.assert_called_once()


def test_render_outputs(rendered, gentle_scene):
    """Test render writes one frame per light, the true depth and the light layout."""
    assert len(_frames(rendered)) == 7
    truth = load_depth_map(rendered / "truth.fdm1")
    assert truth.pixel_pitch == gentle_scene.pixel_pitch
    assert truth.z.min() == -10.0
    assert LightConfig.from_json(rendered / "lights.json").to_light_set().count == 7


def test_reconstruct_needs_three_images(monkeypatch, rendered, tmp_path):
    """Test two frames are rejected with exit code 1 and no output file."""
    monkeypatch.setattr(main.logger, "error", MagicMock())
    out = tmp_path / "depth.fdm1"
    argv = ["reconstruct", "--lights", str(rendered / "lights.json"), "--pitch", "0.5", "--out", str(out)]
    assert main.run_cli(argv + _frames(rendered)[:2]) == 1
    assert "at least 3 images" in main.logger.error.call_args.args[0]
    assert not out.exists()


def test_missing_input_file(monkeypatch, tmp_path):
    """Test a missing depth map is an input error."""
    monkeypatch.setattr(main.logger, "error", MagicMock())
    argv = ["inspect", "--in", str(tmp_path / "missing.fdm1"), "--out", str(tmp_path / "m.csv")]
    assert main.run_cli(argv) == 1


def test_flat_map_is_numerical_failure(monkeypatch, tmp_path):
    """Test inspecting a map without a via exits with 2 and writes nothing."""
    monkeypatch.setattr(main.logger, "error", MagicMock())
    flat = tmp_path / "flat.fdm1"
    flat.write_bytes(b"FDM1\nwidth 4\nheight 4\npitch_um 1.0\n" + bytes(64))
    out = tmp_path / "metrics.csv"
    assert main.run_cli(["inspect", "--in", str(flat), "--out", str(out)]) == 2
    assert "NoVia" in main.logger.error.call_args.args[0]
    assert not out.exists()


def test_full_chain(rendered, tmp_path, gentle_scene):
    """Test render, reconstruct, level, inspect and compare chained through files."""
    depth = tmp_path / "depth.fdm1"
    leveled = tmp_path / "leveled.fdm1"
    metrics = tmp_path / "metrics.csv"
    summary = tmp_path / "summary.csv"
    reference = tmp_path / "reference.csv"
    report = tmp_path / "report.csv"
    via = gentle_scene.vias[0]
    reference.write_text(f"via_id,depth_um,diameter_um\n1,{via.depth},{nominal_diameter(via)}\n", encoding="utf-8")

    lights = str(rendered / "lights.json")
    reconstruct_argv = ["reconstruct", "--lights", lights, "--pitch", "0.5", "--out", str(depth)]
    assert main.run_cli(reconstruct_argv + _frames(rendered)) == 0
    assert load_depth_map(depth).z.min() == 0.0
    assert main.run_cli(["level", "--in", str(depth), "--out", str(leveled)]) == 0
    inspect_argv = ["inspect", "--in", str(leveled), "--out", str(metrics), "--summary", str(summary), "--slices", "5"]
    assert main.run_cli(inspect_argv) == 0
    assert main.run_cli(["compare", "--reference", str(reference), "--in", str(summary), "--out", str(report)]) == 0

    lines = metrics.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "via_id,level_um,center_x_um,center_y_um,radius_um,roundness_um"
    assert len(lines) == 6
    measured = read_summary(summary)[0]
    assert measured.depth == pytest.approx(via.depth, rel=0.1)
    assert measured.diameter == pytest.approx(nominal_diameter(via), rel=0.1)
    row = report.read_text(encoding="utf-8").splitlines()[1].split(",")
    assert row[0] == "1"
    assert abs(float(row[3])) < 10.0
    assert abs(float(row[6])) < 10.0


def test_outputs_are_deterministic(tmp_path, gentle_scene, seven_lights):
    """Test repeated runs of the whole chain with the same seed write byte-identical files and CSV tables."""
    scene_path = tmp_path / "scene.json"
    scene_path.write_text(gentle_scene.model_copy(update={"noise_sigma": 0.01}).model_dump_json(), encoding="utf-8")
    lights_path = tmp_path / "lights.json"
    lights_path.write_text(LightConfig.from_light_set(seven_lights).model_dump_json(), encoding="utf-8")

    outputs = []
    for run in ("a", "b"):
        out_dir = tmp_path / run
        render = ["render", str(scene_path), "--lights", str(lights_path), "--out-dir", str(out_dir), "--seed", "5"]
        assert main.run_cli(render) == 0
        depth = out_dir / "depth.fdm1"
        reconstruct = ["reconstruct", "--lights", str(lights_path), "--pitch", "0.5", "--out", str(depth)]
        assert main.run_cli(reconstruct + _frames(out_dir)) == 0
        leveled = out_dir / "leveled.fdm1"
        assert main.run_cli(["level", "--in", str(depth), "--out", str(leveled)]) == 0
        inspect = ["inspect", "--in", str(leveled), "--out", str(out_dir / "metrics.csv")]
        assert main.run_cli(inspect + ["--summary", str(out_dir / "summary.csv")]) == 0
        outputs.append({path.name: path.read_bytes() for path in sorted(out_dir.iterdir())})
    assert outputs[0] == outputs[1]
    assert {"metrics.csv", "summary.csv", "leveled.fdm1"} <= set(outputs[0])


def test_pipeline_job(rendered, tmp_path, gentle_scene):
    """Test a JSON job runs every stage and writes every requested file."""
    via = gentle_scene.vias[0]
    job = {
        "lights": "render/lights.json",
        "pixel_pitch": 0.5,
        "images": [f"render/frame_{index:02d}.pgm" for index in range(7)],
        "depth_out": "out/depth.fdm1",
        "leveled_out": "out/leveled.fdm1",
        "metrics_out": "out/metrics.csv",
        "summary_out": "out/summary.csv",
        "slice_count": 4,
        "via_prefix": "G",
        "reference": [{"depth": via.depth, "diameter": nominal_diameter(via)}],
        "report_out": "out/report.csv",
    }
    job_path = tmp_path / "job.json"
    job_path.write_text(json.dumps(job), encoding="utf-8")
    assert main.run_cli(["--verbose", "pipeline", "--job", str(job_path)]) == 0
    main.set_level("INFO")

    out = tmp_path / "out"
    assert sorted(path.name for path in out.iterdir()) == [
        "depth.fdm1",
        "leveled.fdm1",
        "metrics.csv",
        "report.csv",
        "summary.csv",
    ]
    assert np.isclose(load_depth_map(out / "leveled.fdm1").z.min(), 0.0)
    assert read_summary(out / "summary.csv")[0].via_id == "G1"
    assert len((out / "metrics.csv").read_text(encoding="utf-8").splitlines()) == 5
    assert (out / "report.csv").read_text(encoding="utf-8").splitlines()[1].startswith("G1,")


def test_failed_render_leaves_no_frames(monkeypatch, tmp_path, gentle_scene, seven_lights):
    """Test a render whose fourth frame cannot be written exits with 1 and writes none of the others."""
    monkeypatch.setattr(main.logger, "error", MagicMock())
    scene_path = tmp_path / "scene.json"
    scene_path.write_text(gentle_scene.model_dump_json(), encoding="utf-8")
    lights_path = tmp_path / "lights.json"
    lights_path.write_text(LightConfig.from_light_set(seven_lights).model_dump_json(), encoding="utf-8")
    out_dir = tmp_path / "render"
    (out_dir / "frame_03.pgm").mkdir(parents=True)
    assert main.run_cli(["render", str(scene_path), "--lights", str(lights_path), "--out-dir", str(out_dir)]) == 1
    assert [path.name for path in out_dir.iterdir()] == ["frame_03.pgm"]


def test_failed_rename_rolls_back(monkeypatch, tmp_path):
    """Test a failure while moving outputs into place removes the placed files and the created directories."""
    monkeypatch.setattr(main.logger, "error", MagicMock())
    replace = main.os.replace

    def failing_replace(source, target):
        if str(target).endswith("c.csv"):
            raise PermissionError(f"cannot write {target}")
        replace(source, target)

    monkeypatch.setattr(main.os, "replace", failing_replace)
    nested = tmp_path / "new" / "deeper"
    outputs = {nested / "a.csv": b"a", nested / "b.csv": b"b", tmp_path / "c.csv": b"c"}
    with pytest.raises(PermissionError):
        main._write_outputs(outputs)
    assert sorted(path.name for path in tmp_path.iterdir()) == []


def test_inspect_measures_every_via(tmp_path):
    """Test inspect writes one summary row per via of a 2x2 array, numbered in reading order."""
    scene = load_scene(SCENES / "tgv_array.json")
    depth = tmp_path / "array.fdm1"
    save_depth_map(analytic_depth(scene), depth)
    summary = tmp_path / "summary.csv"
    argv = ["inspect", "--in", str(depth), "--out", str(tmp_path / "metrics.csv"), "--summary", str(summary)]
    assert main.run_cli(argv + ["--via-prefix", "V", "--slices", "3"]) == 0
    values = read_summary(summary)
    assert [value.via_id for value in values] == ["V1", "V2", "V3", "V4"]
    for value, via in zip(values, scene.vias, strict=True):
        assert value.depth == pytest.approx(via.depth, rel=0.02)
    rows = (tmp_path / "metrics.csv").read_text(encoding="utf-8").splitlines()[1:]
    assert len(rows) == 12


def test_trials_statistics(tmp_path, gentle_scene, five_lights):
    """Test trials writes the mean and spread of each via over the requested seeds."""
    scene_path = tmp_path / "scene.json"
    scene_path.write_text(gentle_scene.model_dump_json(), encoding="utf-8")
    lights_path = tmp_path / "lights.json"
    lights_path.write_text(LightConfig.from_light_set(five_lights).model_dump_json(), encoding="utf-8")
    out = tmp_path / "trials.csv"
    argv = ["trials", str(scene_path), "--lights", str(lights_path), "--seeds", "3", "--noise", "0.01"]
    assert main.run_cli(argv + ["--slices", "2", "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "via_id,trials,depth_mean_um,depth_std_um,diam_mean_um,diam_std_um"
    fields = lines[1].split(",")
    assert fields[:2] == ["1", "3"]
    assert float(fields[2]) == pytest.approx(gentle_scene.vias[0].depth, rel=0.1)
    assert 0.0 < float(fields[3]) < 1.0


def test_trials_needs_a_seed(monkeypatch, tmp_path):
    """Test a zero seed count is an input error."""
    monkeypatch.setattr(main.logger, "error", MagicMock())
    argv = ["trials", "scene.json", "--lights", "lights.json", "--seeds", "0", "--out", str(tmp_path / "t.csv")]
    assert main.run_cli(argv) == 1
    assert "seeds" in main.logger.error.call_args.args[0]
