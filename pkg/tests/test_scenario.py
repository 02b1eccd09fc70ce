import json

import pytest

from nvmagsim.errors import ConfigError
from nvmagsim.scenario import (
    default_scenario_dict,
    derive_seed,
    load_scenario,
    scenario_from_dict,
)


def small_doc(seed=42):
    doc = default_scenario_dict(seed=seed)
    doc["adc"]["sample_rate"] = 250_000.0
    doc["duration"] = 2.0
    return doc


class TestValidation:
    def test_defaults_build(self):
        sc = scenario_from_dict(small_doc())
        assert sc.seed == 42
        assert sc.mw.f_m == 1000.0
        assert sc.lockin.f_m == sc.mw.f_m  # tied, not separately configurable

    def test_seed_mandatory(self):
        doc = small_doc()
        del doc["seed"]
        with pytest.raises(ConfigError, match="seed"):
            scenario_from_dict(doc)

    def test_unknown_key_rejected_with_path(self):
        doc = small_doc()
        doc["noise"]["laser_rin"] = 1.0
        with pytest.raises(ConfigError, match="noise.laser_rin"):
            scenario_from_dict(doc)

    def test_type_error_reports_path(self):
        doc = small_doc()
        doc["adc"]["bits"] = "fourteen"
        with pytest.raises(ConfigError, match="adc.bits"):
            scenario_from_dict(doc)

    def test_sample_rate_must_be_multiple_of_2fm(self):
        doc = small_doc()
        doc["adc"]["sample_rate"] = 250_001.0
        with pytest.raises(ConfigError, match="sample_rate"):
            scenario_from_dict(doc)

    def test_sample_rate_must_exceed_20fm(self):
        doc = small_doc()
        doc["mw"]["f_m"] = 12_500.0  # 250 kHz = 20 * f_m exactly: rejected
        with pytest.raises(ConfigError, match="sample_rate"):
            scenario_from_dict(doc)

    def test_dwell_must_be_whole_fsk_periods(self):
        doc = small_doc()
        doc["sweep"]["dwell"] = 0.0205
        with pytest.raises(ConfigError, match="dwell"):
            scenario_from_dict(doc)

    def test_output_rate_must_divide(self):
        doc = small_doc()
        doc["lockin"]["output_rate"] = 333.0
        with pytest.raises(ConfigError, match="output_rate"):
            scenario_from_dict(doc)

    def test_field_must_be_3_vector(self):
        doc = small_doc()
        doc["field"] = [1.0e-5, 2.0e-5]
        with pytest.raises(ConfigError, match="field"):
            scenario_from_dict(doc)

    def test_k2_null_means_auto(self):
        sc = scenario_from_dict(small_doc())
        assert sc.balance_k2 is None
        assert sc.balance_pinned() is None

    def test_k2_pinned(self):
        doc = small_doc()
        doc["balance"]["k2"] = 930.0
        sc = scenario_from_dict(doc)
        assert sc.balance_pinned().k2 == 930.0

    def test_load_with_seed_override(self, tmp_path):
        path = tmp_path / "sc.json"
        path.write_text(json.dumps(small_doc(seed=1)))
        sc = load_scenario(path, seed_override=77)
        assert sc.seed == 77
        assert sc.noise.seed == 77

    def test_invalid_json_reported(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            load_scenario(path)


class TestSeedDerivation:
    def test_deterministic(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)

    def test_distinct_across_tags_and_indices(self):
        seeds = {derive_seed(9, tag, idx) for tag in range(6) for idx in range(50)}
        assert len(seeds) == 300

    def test_64_bit_range(self):
        s = derive_seed(2**63, 1, 0)
        assert 0 <= s < 2**64
