"""Tests for configuration parsing and environment settings."""

import json

import pytest

from outflux.config import THREADS_ENV, load_config, parse_config, thread_count
from outflux.exceptions import ConfigError


class TestParseConfig:
    """Test validation of run configuration documents."""

    def test_minimal_config(self, channel_config_data):
        """Test that the channel config validates with aliases and defaults."""
        config = parse_config(channel_config_data)
        assert config.r0 == 2.0
        assert config.r_star == 0.0
        assert config.holes[0].axes == (0.4, 0.4)
        assert config.force.kind == "none"
        assert config.solve.homotopy == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert config.verify.epsilons == [0.2, 0.1, 0.05]
        assert config.ladder.K == 3

    def test_missing_gamma_names_field(self, channel_config_data):
        """Test that a missing field yields a pointer to it."""
        del channel_config_data["gamma"]
        with pytest.raises(ConfigError, match="gamma") as exc_info:
            parse_config(channel_config_data)
        assert exc_info.value.pointer == "/gamma"
        assert exc_info.value.exit_code == 2

    def test_unknown_field_rejected(self, channel_config_data):
        """Test that unknown top-level fields are rejected."""
        channel_config_data["viscosity"] = 1.0
        with pytest.raises(ConfigError) as exc_info:
            parse_config(channel_config_data)
        assert exc_info.value.pointer == "/viscosity"

    def test_hole_needs_one_shape(self, channel_config_data):
        """Test that a hole with radius and semi_axes is rejected."""
        channel_config_data["holes"] = [{"center": 1.0, "radius": 0.4, "semi_axes": [0.4, 0.3]}]
        with pytest.raises(ConfigError) as exc_info:
            parse_config(channel_config_data)
        assert exc_info.value.pointer == "/holes/0"

    def test_ellipse_hole(self, channel_config_data):
        """Test semi_axes holes."""
        channel_config_data["holes"] = [{"center": 1.0, "semi_axes": [0.5, 0.4]}]
        config = parse_config(channel_config_data)
        assert config.holes[0].axes == (0.5, 0.4)

    def test_hole_flux_count_mismatch(self, channel_config_data):
        """Test that hole fluxes must match the hole count."""
        channel_config_data["boundary"]["hole_fluxes"] = [1.0, 2.0]
        with pytest.raises(ConfigError, match="hole_fluxes"):
            parse_config(channel_config_data)

    def test_homotopy_must_end_at_one(self, channel_config_data):
        """Test that the homotopy ladder must end at 1."""
        channel_config_data["solve"]["homotopy"] = [0.0, 0.5]
        with pytest.raises(ConfigError) as exc_info:
            parse_config(channel_config_data)
        assert exc_info.value.pointer == "/solve"

    def test_too_few_trials(self, channel_config_data):
        """Test that fewer than 20 trials are rejected."""
        channel_config_data["verify"]["trials"] = 5
        with pytest.raises(ConfigError) as exc_info:
            parse_config(channel_config_data)
        assert exc_info.value.pointer == "/verify/trials"

    def test_unknown_profile_kind(self, channel_config_data):
        """Test that only power and constant profiles are accepted."""
        channel_config_data["profile"]["kind"] = "exponential"
        with pytest.raises(ConfigError) as exc_info:
            parse_config(channel_config_data)
        assert exc_info.value.pointer == "/profile/kind"


class TestConfigHash:
    """Test the canonical config hash."""

    def test_hash_is_stable(self, channel_config_data):
        """Test that equal documents hash equally regardless of key order."""
        first = parse_config(channel_config_data)
        reordered = dict(reversed(list(channel_config_data.items())))
        second = parse_config(reordered)
        assert first.config_hash == second.config_hash
        assert len(first.config_hash) == 64

    def test_hash_includes_defaults(self, channel_config_data):
        """Test that an explicit default does not change the hash."""
        first = parse_config(channel_config_data)
        channel_config_data["x_left"] = 0.0
        assert parse_config(channel_config_data).config_hash == first.config_hash

    def test_hash_changes_with_content(self, channel_config_data):
        """Test that a changed value changes the hash."""
        first = parse_config(channel_config_data)
        channel_config_data["solve"]["nu"] = 2.0
        assert parse_config(channel_config_data).config_hash != first.config_hash


class TestLoadConfig:
    """Test reading configuration files."""

    def test_load_valid_file(self, config_file, log_capture):
        """Test loading a valid file logs the hash."""
        config = load_config(config_file)
        assert config.gamma == 0.5
        assert config.config_hash[:12] in log_capture.text

    def test_missing_file(self, tmp_path):
        """Test that a missing file is a config error."""
        with pytest.raises(ConfigError, match="Cannot read config file"):
            load_config(tmp_path / "missing.json")

    def test_invalid_json(self, tmp_path):
        """Test that malformed JSON is a config error."""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_schema_error_in_file(self, tmp_path, channel_config_data):
        """Test that schema errors in files carry the pointer."""
        del channel_config_data["outlet"]
        path = tmp_path / "run.json"
        path.write_text(json.dumps(channel_config_data))
        with pytest.raises(ConfigError) as exc_info:
            load_config(path)
        assert exc_info.value.pointer == "/outlet"


class TestThreadCount:
    """Test the OUTFLUX_THREADS setting."""

    def test_default(self, monkeypatch):
        """Test that the default is one worker."""
        monkeypatch.delenv(THREADS_ENV, raising=False)
        assert thread_count() == 1

    def test_explicit(self, monkeypatch):
        """Test an explicit worker count."""
        monkeypatch.setenv(THREADS_ENV, "4")
        assert thread_count() == 4

    @pytest.mark.parametrize("value", ["0", "-2", "many"])
    def test_invalid(self, monkeypatch, value):
        """Test that non-positive or non-integer values are rejected."""
        monkeypatch.setenv(THREADS_ENV, value)
        with pytest.raises(ConfigError, match=THREADS_ENV):
            thread_count()
