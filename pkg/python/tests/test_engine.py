"""
Tests for pxs.engine (per-frame pipeline, driver, benchmark).
"""
import numpy as np
import pytest

from pxs.codec import read_archive
from pxs.dataset import Dataset
from pxs.engine import (
    STAGES,
    PipelineOutputs,
    ProxyEngine,
    bench,
    run_pipeline,
)
from pxs.frame import CameraIntrinsics
from pxs.shape import signed_distance
from pxs.synth import SceneStream, plane_scene
from pxs.types import PxsValidationError, ShapeKind

from tests.conftest import flat_frame


@pytest.fixture
def wall_frames(small_intrinsics):
    return list(SceneStream(plane_scene(frames=4), small_intrinsics))


class TestProxyEngine:
    """Tests for frame processing."""

    def test_first_frame_creates_wall(self, small_intrinsics, fast_config, wall_frames):
        """The wall becomes a plane proxy on the first frame."""
        created = []
        with ProxyEngine(small_intrinsics, fast_config) as engine:
            engine.on_proxy_created(created.append)
            result = engine.process_frame(wall_frames[0])
        assert result.index == 0
        assert result.created == [p.id for p in created]
        assert created and created[0].kind == ShapeKind.PLANE
        wall = created[0]
        assert abs(wall.shape.normal[1]) == pytest.approx(1.0, abs=1e-6)
        assert signed_distance(wall.shape, np.array([0.0, 2.0, 0.0])) == pytest.approx(0.0, abs=0.01)
        assert engine.state.manhattan_ok
        assert np.any(result.owner == wall.id)

    def test_later_frames_track(self, small_intrinsics, fast_config, wall_frames):
        """A static camera keeps supporting the same proxies."""
        with ProxyEngine(small_intrinsics, fast_config) as engine:
            first = engine.process_frame(wall_frames[0])
            later = engine.process(wall_frames[1:])
        assert engine.frames_processed == 4
        for result in later:
            assert result.created == []
            assert set(first.created) <= set(result.supported)
            assert result.proxy_count == first.proxy_count
        assert set(result.timings) == set(STAGES)
        labels = later[-1].labels(small_intrinsics)
        assert labels.shape == small_intrinsics.shape
        assert np.any(labels == first.created[0])

    def test_frame_callbacks(self, small_intrinsics, fast_config, wall_frames):
        """Frame callbacks see every result; failing callbacks are contained."""
        seen = []
        with ProxyEngine(small_intrinsics, fast_config) as engine:

            @engine.on_frame
            def broken(result):
                raise RuntimeError("boom")

            engine.on_frame(lambda r: seen.append(r.index))
            engine.process(wall_frames[:2])
        assert seen == [0, 1]

    def test_manhattan_warmup(self, small_intrinsics, fast_config, wall_frames):
        """Warm-up frames are only collected."""
        config = fast_config.replace(manhattan_frames=2)
        with ProxyEngine(small_intrinsics, config) as engine:
            first = engine.process_frame(wall_frames[0])
            second = engine.process_frame(wall_frames[1])
        assert first.created == []
        assert first.timings["track"] == 0.0
        assert first.proxy_count == 0
        assert second.created

    def test_threads_match_serial(self, small_intrinsics, fast_config, wall_frames):
        """A thread pool does not change the outcome."""
        states = []
        for threads in (1, 2):
            with ProxyEngine(small_intrinsics, fast_config.replace(threads=threads)) as engine:
                engine.process(wall_frames[:2])
                states.append(engine.state)
        serial, parallel = states
        assert [p.id for p in serial.proxies] == [p.id for p in parallel.proxies]
        for a, b in zip(serial.proxies, parallel.proxies):
            np.testing.assert_allclose(a.shape.params(), b.shape.params())

    def test_intrinsics_mismatch(self, small_intrinsics, fast_config):
        """Frames from another camera are rejected."""
        other = CameraIntrinsics.from_degrees(60.0, 45.0, 40, 30)
        with ProxyEngine(small_intrinsics, fast_config) as engine:
            with pytest.raises(PxsValidationError):
                engine.process_frame(flat_frame(other))

    def test_closed_engine(self, small_intrinsics, fast_config, wall_frame):
        """A closed engine refuses frames; closing twice is fine."""
        engine = ProxyEngine(small_intrinsics, fast_config.replace(threads=2))
        engine.close()
        engine.close()
        with pytest.raises(PxsValidationError):
            engine.process_frame(wall_frame)

    def test_result_dict(self, small_intrinsics, fast_config, wall_frames):
        """Frame results serialize to plain values."""
        with ProxyEngine(small_intrinsics, fast_config) as engine:
            data = engine.process_frame(wall_frames[0]).to_dict()
        assert data["frame"] == 0
        assert data["points"] > 0
        assert set(data["timings_ms"]) == set(STAGES)


class TestRunPipeline:
    """Tests for the whole-stream driver."""

    def test_outputs(self, small_intrinsics, fast_config, wall_frames, tmp_path):
        """Archive, meshes, enhanced frames and metrics are produced."""
        outputs = PipelineOutputs(
            enhanced=tmp_path / "enhanced",
            archive=tmp_path / "scene.pxa",
            mesh=tmp_path / "mesh",
            fill=True,
            metrics=True,
        )
        state, report = run_pipeline(wall_frames, fast_config, outputs)
        assert report.frames == 4
        assert report.proxies == len(state.proxies) >= 1
        assert report.archive_bytes == (tmp_path / "scene.pxa").stat().st_size
        assert len(read_archive(tmp_path / "scene.pxa").proxies) == report.proxies
        assert (tmp_path / "mesh" / "scene.obj").exists()
        assert len(Dataset(tmp_path / "enhanced")) == 4
        assert report.filled is not None
        assert report.psnr is not None and report.psnr > 40.0
        assert report.frame_ratio > 0.0
        assert report.scene_ratio > 0.0
        assert len(report.frame_reports) == 4
        assert report.to_dict()["frames"] == 4

    def test_metrics_need_reiterable_source(self, fast_config, wall_frames):
        """One-shot iterators cannot be measured."""
        with pytest.raises(PxsValidationError):
            run_pipeline(iter(wall_frames), fast_config, PipelineOutputs(metrics=True))

    def test_stream_source(self, small_intrinsics, fast_config):
        """Lazy streams are accepted and their intrinsics used."""
        stream = SceneStream(plane_scene(frames=2), small_intrinsics)
        state, report = run_pipeline(stream, fast_config)
        assert report.frames == 2
        assert state.intrinsics == small_intrinsics

    def test_empty_source(self, fast_config):
        """No frames give an empty superstructure."""
        state, report = run_pipeline([], fast_config)
        assert report.frames == 0
        assert state.proxies == []


class TestBench:
    """Tests for the benchmark."""

    def test_stage_timings(self, fast_config, wall_frames):
        """Every stage is timed for every frame."""
        report = bench(wall_frames[:2], fast_config)
        assert report.frames == 2
        assert set(report.stages) == set(STAGES)
        assert report.total.mean > 0.0
        assert report.total.p95 >= report.total.median
        assert set(report.to_dict()["total"]) == {"mean_ms", "median_ms", "p95_ms"}

    def test_empty(self, fast_config):
        """An empty source gives an empty report."""
        report = bench([], fast_config)
        assert report.frames == 0
        assert report.total is None
