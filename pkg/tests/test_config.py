"""Config schema, validation diagnostics, and seed-stream independence."""

import numpy as np
import pytest

from alphamix.config import (
    ConfigError,
    RunConfig,
    component_rng,
    dump_yaml,
    from_mapping,
    load_yaml,
)


class TestValidation:
    def test_defaults_validate(self):
        RunConfig().validate()

    def test_uncertainty_needs_multiple_experts(self):
        with pytest.raises(ConfigError, match="uncertainty"):
            RunConfig(n_experts=1, router=False).validate()

    def test_uncertainty_needs_multi_task(self):
        with pytest.raises(ConfigError, match="multi_task"):
            RunConfig(multi_task=False, router=False).validate()

    def test_router_needs_multi_task(self):
        with pytest.raises(ConfigError, match="router"):
            RunConfig(multi_task=False, uncertainty=False).validate()

    def test_single_expert_without_extras_is_fine(self):
        RunConfig(n_experts=1, uncertainty=False, router=False).validate()

    def test_message_names_field(self):
        with pytest.raises(ConfigError, match="'top_k'"):
            RunConfig(top_k=0).validate()
        with pytest.raises(ConfigError, match="'epochs'"):
            RunConfig(epochs=0).validate()

    def test_data_source_exclusive(self):
        with pytest.raises(ConfigError, match="data"):
            RunConfig(csv_path="x.csv", use_synth=True).validate()


class TestYaml:
    def test_mapping_roundtrip(self, tmp_path):
        cfg = RunConfig(n_experts=5, lam=0.5, seeds=(1, 2)).validate()
        path = tmp_path / "cfg.yaml"
        dump_yaml(cfg, path)
        again = load_yaml(path)
        assert again == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="'bogus'"):
            from_mapping({"bogus": 1})

    def test_csv_source(self, tmp_path):
        cfg = from_mapping({
            "data": {"csv": "prices/"},
            "split": {"train_end": "2015-12-31", "valid_end": "2016-06-30"},
        })
        assert cfg.csv_path == "prices/"
        assert not cfg.use_synth
        assert cfg.train_frac is None

    def test_bad_date_names_field(self):
        with pytest.raises(ConfigError, match="split.train_end"):
            from_mapping({"data": {"synth": {}},
                          "split": {"train_end": "yesterday", "valid_end": "2016-06-30"}})

    def test_synth_settings(self):
        cfg = from_mapping({"data": {"synth": {"seed": 3, "stocks": 5,
                                               "days": 120, "regime": "noise"}}})
        assert (cfg.synth_seed, cfg.synth_stocks, cfg.synth_days, cfg.synth_regime) == \
            (3, 5, 120, "noise")


class TestSeedStreams:
    def test_components_are_independent(self):
        a = component_rng(0, "model-init").normal(size=4)
        b = component_rng(0, "stage1-batches").normal(size=4)
        assert not np.allclose(a, b)

    def test_streams_are_stable(self):
        a = component_rng(123, "model-init").normal(size=8)
        b = component_rng(123, "model-init").normal(size=8)
        assert np.array_equal(a, b)

    def test_one_component_does_not_shift_another(self):
        # drawing from one stream leaves the other stream untouched
        init_then = component_rng(7, "model-init").normal(size=4)
        _ = component_rng(7, "stage1-batches").normal(size=100)
        init_now = component_rng(7, "model-init").normal(size=4)
        assert np.array_equal(init_then, init_now)

    def test_different_masters_differ(self):
        a = component_rng(0, "model-init").normal(size=4)
        b = component_rng(1, "model-init").normal(size=4)
        assert not np.allclose(a, b)
