"""Tests for settings and flat run configuration."""
from pathlib import Path
from unittest.mock import patch

import pytest

from dmt.errors import ConfigError
from dmt.settings import CONFIG_KEYS, ConfigManager, DmtSettings, LossConfig, TrainConfig, format_value


@pytest.fixture
def manager():
    return ConfigManager(DmtSettings(path=[]))


class TestDmtSettings:
    """Test environment settings."""

    def test_path_from_environment(self):
        """Test a colon-separated DMT_PATH."""
        with patch.dict("os.environ", {"DMT_PATH": "/a:/b/c"}):
            assert DmtSettings().path == [Path("/a"), Path("/b/c")]

    def test_log_level_from_environment(self):
        """Test DMT_LOG_LEVEL."""
        with patch.dict("os.environ", {"DMT_LOG_LEVEL": "DEBUG"}):
            assert DmtSettings().log_level == "DEBUG"

    def test_presetd_paths_exist(self, tmp_path):
        """Test that only existing preset.d directories are searched."""
        (tmp_path / "one" / "preset.d").mkdir(parents=True)
        settings = DmtSettings(path=[tmp_path / "one", tmp_path / "two"])
        assert settings.get_presetd_paths() == [tmp_path / "one" / "preset.d"]

    def test_default_includes_contrib(self, monkeypatch):
        """Test that the shipped presets are on the default path."""
        monkeypatch.delenv("DMT_PATH", raising=False)
        paths = DmtSettings().get_presetd_paths()
        assert any(p.parent.name == "contrib" for p in paths)


class TestModels:
    """Test configuration models."""

    def test_defaults(self):
        """Test the documented defaults."""
        cfg = TrainConfig()
        assert cfg.epochs == 500
        assert cfg.dims == [-1, 600, 500, 400, 300, 200, 2]
        assert cfg.loss.nu_start == 0.001
        assert cfg.loss.latent_perplexity == 40.0

    def test_latent_perplexity_override(self):
        """Test that q_latent overrides q for layer similarities."""
        assert LossConfig(q=40.0, q_latent=10.0).latent_perplexity == 10.0

    def test_nu_order(self):
        """Test that ν may not decrease over training."""
        with pytest.raises(ValueError):
            LossConfig(nu_start=10.0, nu_end=1.0)

    def test_layer_zero(self):
        """Test that the input layer cannot be compared with itself."""
        with pytest.raises(ValueError):
            LossConfig(layers=[0])

    @pytest.mark.parametrize("dims", [[2], [-1, 0, 2], [-2, 2]])
    def test_bad_dims(self, dims):
        """Test that invalid widths are refused."""
        with pytest.raises(ValueError):
            TrainConfig(dims=dims)

    def test_unknown_field(self):
        """Test that extra fields are refused."""
        with pytest.raises(ValueError):
            TrainConfig(epoch=3)

    def test_keys_are_unique(self):
        """Test that flat keys do not collide."""
        assert len(CONFIG_KEYS) == len(set(CONFIG_KEYS))
        assert set(TrainConfig().flat()) == set(CONFIG_KEYS)


class TestFormatValue:
    """Test flat value text."""

    @pytest.mark.parametrize("value, text", [
        (None, "none"),
        (True, "true"),
        (0.1, "0.1"),
        (100.0, "100.0"),
        (7, "7"),
        ([-1, 600, 2], "-1,600,2"),
        ("lgp", "lgp"),
    ])
    def test_values(self, value, text):
        """Test each kind of value."""
        assert format_value(value) == text


class TestConfigManager:
    """Test parsing, merging and validation."""

    def test_parse(self, manager):
        """Test comments, blank lines and list values."""
        entries = manager.parse("# swiss roll\n\nq = 40\ndims = -1, 8, 2  # widths\n", "run.conf")
        assert entries["q"].raw == "40"
        assert entries["q"].origin == "run.conf:3"
        assert entries["dims"].value == ["-1", "8", "2"]

    def test_all_problems_reported(self, manager):
        """Test that unknown, duplicate and malformed lines are collected together."""
        text = "q = 40\nbogus = 1\nq = 30\njust words\n"
        with pytest.raises(ConfigError) as info:
            manager.parse(text, "bad.conf")

        problems = info.value.problems
        assert len(problems) == 3
        assert problems[0].startswith("bad.conf:2: unknown key 'bogus'")
        assert problems[1].startswith("bad.conf:3: duplicate key 'q'")
        assert problems[2].startswith("bad.conf:4: expected 'key = value'")

    def test_invalid_values_reported(self, manager):
        """Test that validation errors name their source line."""
        entries = manager.parse("epochs = zero\nlr = -1\n", "bad.conf")
        with pytest.raises(ConfigError) as info:
            manager.resolve(entries)
        text = str(info.value)
        assert "bad.conf:1: epochs = 'zero'" in text
        assert "bad.conf:2: lr = '-1'" in text

    def test_resolution_order(self, manager):
        """Test that later sources override earlier ones key by key."""
        preset = manager.parse("q = 40\nnu_end = 100\n", "preset")
        config = manager.parse("q = 20\n", "file")
        flags = manager.overrides({"nu_end": 10.0, "epochs": None})
        cfg = manager.resolve(preset, config, flags)
        assert cfg.loss.q == 20.0
        assert cfg.loss.nu_end == 10.0
        assert cfg.epochs == 500

    def test_flag_origin(self, manager):
        """Test that flag entries name their flag."""
        assert manager.overrides({"nu_end": 10.0})["nu_end"].origin == "flag --nu-end"

    def test_unknown_override(self, manager):
        """Test that unknown flag keys are refused."""
        with pytest.raises(ConfigError):
            manager.overrides({"speed": 1})

    def test_none_words(self, manager):
        """Test that 'none' clears an optional value."""
        cfg = manager.resolve(manager.parse("q_latent = none\nn_neighbors = 30\n"))
        assert cfg.loss.q_latent is None
        assert cfg.n_neighbors == 30

    def test_format_round_trip(self, manager):
        """Test that formatted text parses back to an equal configuration."""
        cfg = TrainConfig(epochs=7, lr=0.0003, dims=[-1, 16, 2], loss=LossConfig(mode="lis", nu_end=3.5, q_latent=12.0, layers=[1, -1]))
        assert manager.resolve(manager.parse(ConfigManager.format(cfg))) == cfg

    def test_read_missing(self, manager, tmp_path):
        """Test that an unreadable config file raises ConfigError."""
        with pytest.raises(ConfigError):
            manager.read(tmp_path / "absent.conf")
