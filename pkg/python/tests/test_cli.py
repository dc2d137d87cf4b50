"""
Tests for the pxs command line tool.
"""
import json

import numpy as np
import pytest
from PIL import Image

from pxs.codec import write_archive
from pxs.proxy import SceneState
from pxstool import ReportWriter, build_parser, main, read_reports

SCENE = """
@name = "probe"
@frames = 3
shape plane wall {
    origin = 0 2 0;
    normal = 0 -1 0;
    x_axis = 1 0 0;
    u = -3 3;
    v = -3 3;
}
path static { eye = 0 0 0; target = 0 2 0; }
"""

FAST_CONFIG = """
keep_threshold = 20
min_inliers_floor = 30
visit_window = 10
subset_size = 2000
"""

SMALL = ["--width", "80", "--height", "60"]


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "probe.scene"
    path.write_text(SCENE)
    return path


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "fast.conf"
    path.write_text(FAST_CONFIG)
    return path


def _records(capsys):
    return [json.loads(line) for line in capsys.readouterr().out.splitlines() if line.strip()]


class TestParser:
    """Tests for argument parsing."""

    def test_version(self, capsys):
        """--version prints and exits cleanly."""
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("pxs ")

    def test_command_required(self):
        """A subcommand is mandatory."""
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_sources_exclusive(self, tmp_path):
        """--dataset and --synth cannot be combined."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["bench", "--dataset", str(tmp_path), "--synth", "x.scene"])


class TestCommands:
    """Tests for the subcommands."""

    def test_synth_compress_decompress_mesh(self, tmp_path, scene_file, config_file, capsys):
        """A rendered dataset can be compressed, re-synthesized and meshed."""
        dataset = tmp_path / "rec"
        archive = tmp_path / "scene.prxy"
        assert main(["synth", str(scene_file), "-o", str(dataset)] + SMALL) == 0
        synth = _records(capsys)[0]
        assert synth == {"report": "synth", "scene": "probe", "frames": 3, "output": str(dataset)}

        assert main(["--config", str(config_file), "compress", "--dataset", str(dataset), "-o", str(archive)]) == 0
        compress = _records(capsys)[0]
        assert compress["frames"] == 3
        assert compress["proxies"] >= 1
        assert compress["bytes"] == archive.stat().st_size
        assert compress["filled_cells"] is None

        png = tmp_path / "frame0.png"
        assert main(["decompress", str(archive), "--dataset", str(dataset), "--frame", "0", "-o", str(png)]) == 0
        decompress = _records(capsys)[0]
        assert decompress["valid_pixels"] > 0
        with Image.open(png) as img:
            depth = np.array(img)
        assert depth.shape == (60, 80)
        assert np.all(depth[depth > 0] == 2000)

        assert main(["mesh", str(archive), "-o", str(tmp_path / "mesh"), "--name", "probe"]) == 0
        mesh = _records(capsys)[0]
        assert mesh["meshes"] >= 1
        assert mesh["quads"] > 0
        assert (tmp_path / "mesh" / "probe.obj").exists()

    def test_run_with_report_file(self, tmp_path, scene_file, config_file):
        """Per-frame, run and shape reports are appended to --report."""
        report = tmp_path / "reports" / "run.jsonl"
        code = main(
            ["--config", str(config_file), "--report", str(report), "run", "--synth", str(scene_file),
             "--metrics", "--per-frame"] + SMALL
        )
        assert code == 0
        records = read_reports(report)
        kinds = [r["report"] for r in records]
        assert kinds == ["frame", "frame", "frame", "run", "shape"]
        run = records[3]
        assert run["frames"] == 3
        assert run["psnr"] is not None
        assert records[4]["name"] == "wall"
        assert records[4]["detected"]

    def test_metrics(self, tmp_path, scene_file, config_file, capsys):
        """metrics compares an archive with its source frames."""
        archive = tmp_path / "scene.prxy"
        base = ["--config", str(config_file)]
        assert main(base + ["compress", "--synth", str(scene_file), "-o", str(archive)] + SMALL) == 0
        capsys.readouterr()
        assert main(base + ["metrics", str(archive), "--synth", str(scene_file)] + SMALL) == 0
        records = _records(capsys)
        assert records[0]["report"] == "metrics"
        assert records[0]["scene_ratio"] > 0
        assert records[1]["report"] == "shape"

    def test_bench(self, scene_file, config_file, capsys):
        """bench reports per-stage timings."""
        assert main(["--config", str(config_file), "bench", "--synth", str(scene_file), "--frames", "2"] + SMALL) == 0
        record = _records(capsys)[0]
        assert record["report"] == "bench"
        assert record["frames"] == 2
        assert "track" in record["stages"]


class TestErrors:
    """Tests for error reporting."""

    def test_missing_dataset(self, tmp_path, capsys):
        """A missing dataset fails with a message on stderr."""
        assert main(["bench", "--dataset", str(tmp_path / "none")]) == 1
        assert capsys.readouterr().err.startswith("Error:")

    def test_decompress_needs_pose(self, tmp_path, capsys):
        """decompress without a pose source fails."""
        archive = tmp_path / "empty.prxy"
        write_archive(archive, SceneState())
        assert main(["decompress", str(archive), "-o", str(tmp_path / "d.png")]) == 1
        assert "--pose" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, scene_file, capsys):
        """Config errors are reported with the file position."""
        bad = tmp_path / "bad.conf"
        bad.write_text("no_such_key = 1\n")
        assert main(["--config", str(bad), "bench", "--synth", str(scene_file)]) == 1
        assert "bad.conf:1" in capsys.readouterr().err


class TestReportWriter:
    """Tests for JSON-lines reports."""

    def test_values_cleaned(self, tmp_path):
        """Numpy values, paths and non-finite floats stay strict JSON."""
        path = tmp_path / "r.jsonl"
        with ReportWriter(path) as out:
            out.write("x", {"a": np.float64(1.5), "b": float("inf"), "c": np.arange(2), "d": tmp_path})
        (record,) = read_reports(path)
        assert record == {"report": "x", "a": 1.5, "b": "inf", "c": [0, 1], "d": str(tmp_path)}

    def test_appends(self, tmp_path):
        """Reports accumulate across writers."""
        path = tmp_path / "r.jsonl"
        for k in range(2):
            with ReportWriter(path) as out:
                out.write("n", {"k": k})
        assert [r["k"] for r in read_reports(path)] == [0, 1]
