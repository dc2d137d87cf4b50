"""
Tests for pxs.dataset.
"""
import numpy as np
import pytest

from pxs.dataset import Dataset, load_dataset, write_dataset
from pxs.frame import CameraPose
from pxs.types import PxsDatasetError, PxsValidationError

from tests.conftest import flat_frame


@pytest.fixture
def dataset_dir(tmp_path, small_intrinsics):
    poses = [CameraPose.look_at((0.0, 0.0, 1.0), (1.0, float(i), 1.0)) for i in range(3)]
    frames = [flat_frame(small_intrinsics, 1.5 + 0.25 * i, poses[i], i) for i in range(3)]
    frames[1].depth[10:20, 10:20] = 0.0
    return write_dataset(tmp_path / "ds", small_intrinsics, frames)


class TestDataset:
    """Tests for reading dataset directories."""

    def test_written_dataset_loads(self, dataset_dir, small_intrinsics):
        """A written dataset opens with the same intrinsics and frame count."""
        ds = load_dataset(dataset_dir)
        assert len(ds) == 3
        assert ds.intrinsics.shape == small_intrinsics.shape
        assert ds.intrinsics.fov_h == pytest.approx(small_intrinsics.fov_h)

    def test_depth_in_meters(self, dataset_dir):
        """Stored millimeters are converted back to meters."""
        frame = Dataset(dataset_dir).frame(2)
        np.testing.assert_allclose(frame.depth, 2.0)
        assert frame.index == 2

    def test_invalid_pixels_kept(self, dataset_dir):
        """Zero depth survives as invalid."""
        frame = Dataset(dataset_dir).frame(1)
        assert not frame.valid[10:20, 10:20].any()
        assert frame.valid[30, 40]

    def test_poses(self, dataset_dir):
        """Poses are read back per frame."""
        ds = Dataset(dataset_dir)
        expected = CameraPose.look_at((0.0, 0.0, 1.0), (1.0, 2.0, 1.0))
        np.testing.assert_allclose(ds.frame(2).pose.rotation, expected.rotation, atol=1e-9)

    def test_iteration(self, dataset_dir):
        """Iterating yields every frame in order."""
        assert [f.index for f in Dataset(dataset_dir)] == [0, 1, 2]

    def test_frame_out_of_range(self, dataset_dir):
        """Frame indices outside the dataset raise."""
        with pytest.raises(PxsValidationError):
            Dataset(dataset_dir).frame(3)

    def test_missing_directory(self, tmp_path):
        """A missing root raises PxsDatasetError."""
        with pytest.raises(PxsDatasetError):
            Dataset(tmp_path / "nope")

    def test_missing_intrinsics(self, dataset_dir):
        """The error names the missing file."""
        (dataset_dir / "intrinsics.txt").unlink()
        with pytest.raises(PxsDatasetError, match="intrinsics.txt"):
            Dataset(dataset_dir)

    def test_pose_count_mismatch(self, dataset_dir):
        """Fewer poses than frames raises and names poses.txt."""
        lines = (dataset_dir / "poses.txt").read_text().splitlines()
        (dataset_dir / "poses.txt").write_text("\n".join(lines[:2]) + "\n")
        with pytest.raises(PxsDatasetError, match="poses.txt"):
            Dataset(dataset_dir)

    def test_color_count_mismatch(self, dataset_dir):
        """A missing color frame raises."""
        (dataset_dir / "color" / "000002.png").unlink()
        with pytest.raises(PxsDatasetError, match="color"):
            Dataset(dataset_dir)

    def test_bad_pose_line(self, dataset_dir):
        """Malformed pose rows name the line."""
        (dataset_dir / "poses.txt").write_text("1 2 3\n")
        with pytest.raises(PxsDatasetError, match="poses.txt:1"):
            Dataset(dataset_dir)

    def test_bad_intrinsics(self, dataset_dir):
        """Malformed intrinsics raise."""
        (dataset_dir / "intrinsics.txt").write_text("60 45 80\n")
        with pytest.raises(PxsDatasetError):
            Dataset(dataset_dir)
