"""
Tests for pxs.stats (visitation, smoothed histograms, colors, moments).
"""
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from pxs.frame import CameraIntrinsics
from pxs.shape import GridSpec
from pxs.stats import (
    Cell,
    ColorGrid,
    RunningMoments,
    SmoothedHistogram,
    VisitWindow,
    color_neighborhood,
    color_update,
    color_weights,
    slh_insert,
    slh_mode_count,
    splat_colors,
    visit_and_activate,
)
from pxs.types import PxsValidationError


class TestVisitWindow:
    """Tests for visitation and activation."""

    def test_activation_threshold(self):
        """A cell activates once a quarter of the window was visited."""
        cell = VisitWindow(length=100, ratio=0.25)
        assert cell.required == 25
        for _ in range(24):
            visit_and_activate(cell, True)
        assert not cell.activated
        visit_and_activate(cell, True)
        assert cell.activated

    def test_activation_monotone(self):
        """Activation survives a window with no visits."""
        cell = VisitWindow(length=8, ratio=0.25)
        cell.push(True).push(True)
        assert cell.activated
        for _ in range(20):
            cell.push(False)
        assert cell.visits == 0
        assert cell.activated

    def test_old_flags_drop_out(self):
        """Only the last ``length`` frames count."""
        cell = VisitWindow(length=4, ratio=1.0)
        cell.push(True)
        for _ in range(4):
            cell.push(False)
        assert cell.visits == 0
        assert cell.pushed == 5

    def test_merge(self):
        """Merging ORs the flags."""
        a = VisitWindow(length=10, ratio=0.2).push(True).push(False)
        b = VisitWindow(length=10, ratio=0.2).push(False).push(True)
        a.merge(b)
        assert a.visits == 2
        assert a.activated


class TestSmoothedHistogram:
    """Tests for smoothed local histograms."""

    def test_empty(self):
        """An empty histogram has no modes and mean 0."""
        hist = SmoothedHistogram(0.003)
        assert len(hist) == 0
        assert hist.mode_count == 0
        assert hist.mean_distance == 0.0

    def test_close_samples_fold(self):
        """Samples within the merge width share a kernel."""
        hist = SmoothedHistogram(0.003)
        slh_insert(hist, 0.0)
        slh_insert(hist, 0.001)
        assert len(hist) == 1
        assert hist.means[0] == pytest.approx(0.0005)
        assert hist.total_weight == 2.0
        assert hist.mode_count == 1

    def test_two_modes(self):
        """Two separated clusters give two modes."""
        hist = SmoothedHistogram(0.003)
        hist.insert_many(np.array([0.0, 0.001, -0.001, 0.05, 0.051, 0.049]))
        assert len(hist) == 2
        assert hist.mode_count == 2
        assert slh_mode_count(hist) == 2
        assert hist.mean_distance == pytest.approx(0.025)

    def test_prominence(self):
        """Tiny side peaks are not counted as modes."""
        hist = SmoothedHistogram.from_kernels([0.0, 0.05], [100.0, 1.0], 0.003)
        assert hist.mode_count == 1

    def test_merge_compacts(self):
        """Merged kernels closer than the merge width are folded."""
        a = SmoothedHistogram.from_kernels([0.0, 0.01], [1.0, 1.0], 0.003)
        b = SmoothedHistogram.from_kernels([0.005], [1.0], 0.003)
        a.merge(b)
        assert len(a) == 2
        assert a.total_weight == 3.0

    def test_density_integrates_to_weight(self):
        """The kernel sum integrates to the total weight."""
        hist = SmoothedHistogram.from_kernels([0.0, 0.02], [2.0, 3.0], 0.003)
        s = np.linspace(-0.05, 0.07, 4001)
        assert trapezoid(hist.density(s), s) == pytest.approx(5.0, rel=1e-4)

    def test_invalid(self):
        """Bad bandwidths, weights and samples raise."""
        with pytest.raises(PxsValidationError):
            SmoothedHistogram(0.0)
        with pytest.raises(PxsValidationError):
            SmoothedHistogram.from_kernels([0.0], [0.5], 0.003)
        with pytest.raises(PxsValidationError):
            SmoothedHistogram(0.003).insert(float("inf"))


class TestColors:
    """Tests for color points."""

    def test_accumulate_weighted_mean(self):
        """Colors are running weighted means."""
        grid = ColorGrid(4)
        grid.accumulate(np.array([1, 1]), np.array([2, 2]), np.array([[0, 0, 0], [100, 100, 100]]), np.array([1.0, 3.0]))
        np.testing.assert_allclose(grid.means[1, 2], [75.0, 75.0, 75.0])
        assert grid.observed.sum() == 1

    def test_to_uint8_unobserved_black(self):
        """Unobserved points export as black."""
        grid = ColorGrid(2)
        grid.accumulate(np.array([0]), np.array([0]), np.array([[10.4, 20.6, 300.0]]), np.array([1.0]))
        out = grid.to_uint8()
        assert out[0, 0].tolist() == [10, 21, 255]
        assert out[1, 1].tolist() == [0, 0, 0]

    def test_neighborhood(self):
        """The influence radius follows the pixel footprint."""
        intr = CameraIntrinsics.from_degrees(60.0, 45.0, 80, 60)
        rho, n = color_neighborhood(2.0, GridSpec(0.05, color_res_log2=2), intr)
        assert rho == pytest.approx(math.tan(math.radians(60.0) / 80))
        assert n == int(math.floor(rho * 4 / 0.05))

    @pytest.mark.parametrize("z, rho, n", [(2.0, 0.00327, 0), (8.0, 0.01309, 1), (1e-6, 0.0, 0)])
    def test_neighborhood_follows_grid(self, z, rho, n):
        """Radius and point count at 320x240 for 5 cm cells with 4x4 color points."""
        intr = CameraIntrinsics.from_degrees(60.0, 45.0, 320, 240)
        got_rho, got_n = color_neighborhood(z, GridSpec(0.05, color_res_log2=2), intr)
        assert got_rho == pytest.approx(rho, abs=1e-5)
        assert got_n == n

    def test_neighborhood_uses_grid_resolution(self):
        """Finer color grids widen the neighborhood."""
        intr = CameraIntrinsics.from_degrees(60.0, 45.0, 320, 240)
        _, coarse = color_neighborhood(8.0, GridSpec(0.05, color_res_log2=2), intr)
        _, fine = color_neighborhood(8.0, GridSpec(0.05, color_res_log2=4), intr)
        assert (coarse, fine) == (1, 4)

    def test_weights_single_point(self):
        """n = 0 touches only the hit point with weight 1."""
        offsets, weights = color_weights(0, 2)
        assert offsets.tolist() == [[0, 0]]
        assert weights.tolist() == [1.0]

    def test_update_clipped_to_cell(self):
        """Neighborhoods are clipped at the cell border."""
        grid = color_update(ColorGrid(4), (0, 0), (50, 60, 70), 1)
        assert grid.observed.sum() == 4
        np.testing.assert_allclose(grid.means[1, 1], [50.0, 60.0, 70.0])

    def test_update_negative_radius(self):
        """Negative neighborhoods raise."""
        with pytest.raises(PxsValidationError):
            color_update(ColorGrid(4), (0, 0), (0, 0, 0), -1)

    def test_splat_crosses_cells(self):
        """Splatting reaches color points of the neighboring cell."""
        cells = {
            (0, 0): Cell(VisitWindow(), SmoothedHistogram(0.003), ColorGrid(4)),
            (1, 0): Cell(VisitWindow(), SmoothedHistogram(0.003), ColorGrid(4)),
        }
        table = {1: color_weights(1, 2)}
        splat_colors(cells, 4, np.array([3]), np.array([1]), np.array([[200.0, 0.0, 0.0]]), np.array([1]), table)
        assert cells[(0, 0)].colors.observed[3, 1]
        assert cells[(1, 0)].colors.observed[0, 1]
        assert not cells[(1, 0)].colors.observed[1, 1]

    def test_splat_wraps_period(self):
        """Periodic grids wrap the color index."""
        cells = {(0, 0): Cell(VisitWindow(), None, ColorGrid(2))}
        table = {0: color_weights(0, 1)}
        splat_colors(cells, 2, np.array([5]), np.array([0]), np.array([[9.0, 9.0, 9.0]]), np.array([0]), table, period_points=4)
        assert cells[(0, 0)].colors.observed[1, 0]


class TestCell:
    """Tests for cell summaries."""

    def test_filled_cell(self):
        """Filled cells emit and read as (0, 1)."""
        cell = Cell(VisitWindow(), None, ColorGrid(4), filled=True)
        assert cell.emitting
        assert not cell.active
        assert cell.mean_distance == 0.0
        assert cell.mode_count == 1

    def test_decoded_summary(self):
        """Decoded cells report their stored summary."""
        cell = Cell(VisitWindow(activated=True), None, ColorGrid(4), summary=(0.004, 2))
        assert cell.mean_distance == 0.004
        assert cell.mode_count == 2

    def test_merge_clears_fill_when_active(self):
        """An activated merge result is no longer marked filled."""
        a = Cell(VisitWindow(), None, ColorGrid(2), filled=True)
        b = Cell(VisitWindow(activated=True), SmoothedHistogram(0.003).insert(0.001), ColorGrid(2))
        a.merge(b)
        assert a.active
        assert not a.filled
        assert a.mean_distance == pytest.approx(0.001)


class TestRunningMoments:
    """Tests for Welford accumulators."""

    def test_mean_variance(self, rng):
        """Streaming moments match numpy."""
        data = rng.normal(size=(50, 4))
        acc = RunningMoments(4)
        for row in data:
            acc.push(row)
        np.testing.assert_allclose(acc.mean, data.mean(axis=0))
        np.testing.assert_allclose(acc.variance, data.var(axis=0, ddof=1))

    def test_merge(self, rng):
        """Merging two accumulators equals pushing everything into one."""
        data = rng.normal(size=(30, 2))
        a, b = RunningMoments(2), RunningMoments(2)
        for row in data[:10]:
            a.push(row)
        for row in data[10:]:
            b.push(row)
        a.merge(b)
        assert a.count == 30
        np.testing.assert_allclose(a.mean, data.mean(axis=0))
        np.testing.assert_allclose(a.variance, data.var(axis=0, ddof=1))

    def test_single_sample(self):
        """Fewer than two samples have zero variance."""
        acc = RunningMoments(3)
        acc.push([1.0, 2.0, 3.0])
        np.testing.assert_allclose(acc.std, 0.0)
