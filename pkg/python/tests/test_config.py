"""
Tests for pxs.config.
"""
import math

import pytest

from pxs.config import DEFAULT_CONFIG, PipelineConfig, load_config, parse_config_text
from pxs.detect import DetectionParams
from pxs.frame import NoiseModel
from pxs.types import PxsConfigError


class TestPipelineConfig:
    """Tests for defaults and validation."""

    def test_defaults(self):
        """Defaults carry the documented thresholds."""
        cfg = PipelineConfig()
        assert cfg.cell_size == 0.05
        assert cfg.keep_threshold == 50
        assert cfg.purge_after == 30
        assert cfg.quant_step == 0.0005
        assert cfg.up_hint == (0.0, 0.0, 1.0)

    @pytest.mark.parametrize(
        "changes",
        [
            {"cell_size": 0.0},
            {"keep_threshold": 0},
            {"success_probability": 1.0},
            {"activation_ratio": 1.5},
            {"up_hint": (0.0, 0.0, 0.0)},
            {"extrapolate_min_deg": 130.0},
            {"threads": 0},
        ],
    )
    def test_invalid_values(self, changes):
        """Out-of-range values raise PxsConfigError."""
        with pytest.raises(PxsConfigError):
            PipelineConfig(**changes)

    def test_replace_unknown_key(self):
        """replace rejects unknown keys."""
        with pytest.raises(PxsConfigError, match="no_such_key"):
            DEFAULT_CONFIG.replace(no_such_key=1)

    def test_replace_validates(self):
        """replace returns a validated copy."""
        cfg = DEFAULT_CONFIG.replace(cell_size=0.1)
        assert cfg.cell_size == 0.1
        assert DEFAULT_CONFIG.cell_size == 0.05
        with pytest.raises(PxsConfigError):
            DEFAULT_CONFIG.replace(cell_size=-1.0)

    def test_to_dict(self):
        """to_dict lists every field."""
        d = DEFAULT_CONFIG.to_dict()
        assert d["visit_window"] == 100
        assert "seed" in d

    def test_noise_model(self):
        """noise_model builds a NoiseModel from the coefficients."""
        model = DEFAULT_CONFIG.replace(noise_a=0.002).noise_model()
        assert isinstance(model, NoiseModel)
        assert model.a == 0.002

    def test_min_inliers(self):
        """min_inliers is a fraction of the cloud with a floor."""
        cfg = PipelineConfig(min_inlier_ratio=0.5, min_inliers_floor=30)
        assert cfg.min_inliers(40) == 30
        assert cfg.min_inliers(1000) == 500

    def test_detection_params(self):
        """detection_params converts degrees to radians."""
        params = DEFAULT_CONFIG.detection_params(4000)
        assert isinstance(params, DetectionParams)
        assert params.normal_epsilon == pytest.approx(math.radians(20.0))
        assert params.min_inliers == 100


class TestParseConfigText:
    """Tests for the key = value parser."""

    def test_parse(self):
        """Values get their declared types."""
        values = parse_config_text(
            "# comment\ncell_size = 0.1\nkeep_threshold = 12  # trailing\nup_hint = 0, 1, 0\n"
        )
        assert values == {"cell_size": 0.1, "keep_threshold": 12, "up_hint": (0.0, 1.0, 0.0)}
        assert isinstance(values["keep_threshold"], int)

    def test_unknown_key_names_line(self):
        """Unknown keys are reported with their line number."""
        with pytest.raises(PxsConfigError, match=r"test.conf:2"):
            parse_config_text("cell_size = 0.1\nbogus = 3\n", "test.conf")

    def test_missing_equals(self):
        """Lines without '=' raise."""
        with pytest.raises(PxsConfigError):
            parse_config_text("cell_size 0.1")

    def test_missing_value(self):
        """Empty values raise."""
        with pytest.raises(PxsConfigError):
            parse_config_text("cell_size =")

    def test_bad_int(self):
        """Integer keys reject floats."""
        with pytest.raises(PxsConfigError, match="keep_threshold"):
            parse_config_text("keep_threshold = 1.5")

    def test_bad_vector(self):
        """Vector keys need three numbers."""
        with pytest.raises(PxsConfigError):
            parse_config_text("up_hint = 0 1")


class TestLoadConfig:
    """Tests for load_config."""

    def test_defaults_without_file(self):
        """No file and no overrides gives the defaults."""
        assert load_config() == PipelineConfig()

    def test_file_and_overrides(self, tmp_path):
        """Overrides win over the file; None overrides are ignored."""
        path = tmp_path / "p.conf"
        path.write_text("seed = 4\nthreads = 2\ncell_size = 0.08\n")
        cfg = load_config(path, {"seed": 9, "threads": None})
        assert cfg.seed == 9
        assert cfg.threads == 2
        assert cfg.cell_size == 0.08

    def test_missing_file(self, tmp_path):
        """A missing file raises PxsConfigError."""
        with pytest.raises(PxsConfigError):
            load_config(tmp_path / "absent.conf")

    def test_shipped_default_file(self, scenes_dir):
        """The shipped default.conf matches the built-in defaults."""
        assert load_config(scenes_dir / "default.conf") == PipelineConfig()
