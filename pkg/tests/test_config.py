"""INI config parsing: schema enforcement and value conversion."""

import pytest

from rrloc import (
    ConfigError,
    ExperimentConfig,
    IndexFamily,
    default_config_text,
    load_config,
    parse_config,
)


class TestParseConfig:
    def test_empty_text_gives_defaults(self):
        assert parse_config("") == ExperimentConfig()

    def test_defaults_roundtrip(self):
        assert parse_config(default_config_text()) == ExperimentConfig()

    def test_typed_sections(self):
        cfg = parse_config(
            "[experiment]\n"
            "m = 16\n"
            "snr_grid_db = -5, 5\n"
            "[generator]\n"
            "coherence = 0.9\n"
            "[signals]\n"
            "exact_covariances = true\n"
            "[indices]\n"
            "families = mai, mpz\n"
        )
        assert cfg.m == 16
        assert cfg.snr_grid_db == (-5.0, 5.0)
        assert cfg.coherence == 0.9
        assert cfg.exact_covariances is True
        assert cfg.indices == (IndexFamily.MAI, IndexFamily.MPZ)

    def test_families_all_keyword(self):
        cfg = parse_config("[indices]\nfamilies = all\n")
        assert len(cfg.indices) == 6

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("[experiments]\nm = 8\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("[experiment]\nn_sensors = 8\n")

    def test_bad_value_type_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config("[experiment]\nm = eight\n")

    def test_bad_family_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[indices]\nfamilies = mai, nonsense\n")

    def test_bad_bool_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[signals]\nexact_covariances = maybe\n")

    def test_inconsistent_values_rejected(self):
        # parses fine, fails dataclass validation: l0 > m
        with pytest.raises(ConfigError, match="inconsistent"):
            parse_config("[experiment]\nm = 4\nl0 = 6\n")

    def test_malformed_ini_rejected(self):
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_config("not an ini file at all\n")


class TestLoadConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.cfg")

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "x.cfg"
        path.write_text("[experiment]\nruns = 2\n")
        assert load_config(path).runs == 2


class TestDefaultConfigText:
    def test_mentions_every_schema_key(self):
        from rrloc.config import SCHEMA
        text = default_config_text()
        for section, keys in SCHEMA.items():
            assert f"[{section}]" in text
            for key in keys:
                assert key in text
