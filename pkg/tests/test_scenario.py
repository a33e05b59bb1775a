"""Scenario loading, validation and unit conversions."""

import json

import numpy as np
import pytest

from simdd.scenario import (DEFAULT_SEED, SEED_ENV_VAR, SPEED_OF_LIGHT,
                            GridSpec, ScenarioError, SystemParams, TargetTruth,
                            afdm_chirp_rate, default_otfs_factors,
                            default_scenario, denormalize_target, load_scenario,
                            normalize_target, scenario_from_dict, seeded_rng,
                            target_delay_doppler)

FULL_SCALE_SYSTEM = SystemParams(
    carrier_frequency_hz=28e9, bandwidth_hz=20e6, sampling_rate_hz=20e6,
    subcarrier_count=144, otfs_factors=(12, 12),
)


def full_scale_dict():
    return {
        "system": {
            "carrier_frequency_hz": 28e9,
            "bandwidth_hz": 20e6,
            "subcarrier_count": 144,
            "otfs_factors": [12, 12],
        },
        "tx_sim": {"layers": 3, "grid_dims": [10, 10]},
        "rx_sim": {"layers": 3, "grid_dims": [10, 10]},
        "targets": [
            {"range_m": 37.5, "velocity_mps": -54.0},
            {"range_m": 97.5, "velocity_mps": 54.0},
        ],
        "grid": {"delay_bins": 32, "doppler_bins": 32,
                 "tau_max_s": 0.5e-6, "nu_max_hz": 6e3},
        "seed": 99,
    }


class TestNormalizeTarget:
    def test_full_scale_first_target(self):
        # Independent arithmetic: tau = range / c, ell = tau Fs,
        # nu = v fc / c, f = N nu / Fs.
        target = TargetTruth(range_m=37.5, velocity_mps=-54.0)
        tau_expected = 37.5 / SPEED_OF_LIGHT
        nu_expected = -54.0 * 28e9 / SPEED_OF_LIGHT
        ell, f = normalize_target(target, FULL_SCALE_SYSTEM)
        assert ell == pytest.approx(tau_expected * 20e6, rel=1e-12)
        assert f == pytest.approx(144 * nu_expected / 20e6, rel=1e-12)
        # Headline values: tau ~ 125.09 ns, ell ~ 2.5017, nu ~ -5043.5 Hz,
        # f ~ -0.03631.
        tau, nu = target_delay_doppler(target, FULL_SCALE_SYSTEM)
        assert tau == pytest.approx(125.09e-9, rel=1e-4)
        assert ell == pytest.approx(2.5017, rel=1e-4)
        assert nu == pytest.approx(-5043.5, rel=1e-4)
        assert f == pytest.approx(-0.03631, rel=1e-4)

    def test_full_scale_second_target(self):
        target = TargetTruth(range_m=97.5, velocity_mps=54.0)
        ell, f = normalize_target(target, FULL_SCALE_SYSTEM)
        assert ell == pytest.approx(6.5045, rel=1e-4)
        assert f == pytest.approx(0.03631, rel=1e-4)

    def test_zero_target(self):
        ell, f = normalize_target(TargetTruth(0.0, 0.0), FULL_SCALE_SYSTEM)
        assert ell == 0.0 and f == 0.0

    def test_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            target = TargetTruth(range_m=float(rng.uniform(0, 500)),
                                 velocity_mps=float(rng.uniform(-300, 300)))
            ell, f = normalize_target(target, FULL_SCALE_SYSTEM)
            range_m, velocity = denormalize_target(ell, f, FULL_SCALE_SYSTEM)
            assert range_m == pytest.approx(target.range_m, rel=1e-12)
            if target.velocity_mps != 0:
                assert velocity == pytest.approx(target.velocity_mps, rel=1e-12)


class TestSeededRng:
    def test_same_seed_same_label(self):
        a = seeded_rng(42, "paths").standard_normal(8)
        b = seeded_rng(42, "paths").standard_normal(8)
        assert np.array_equal(a, b)

    def test_label_separation(self):
        a = seeded_rng(42, "paths").standard_normal(8)
        b = seeded_rng(42, "noise").standard_normal(8)
        assert not np.array_equal(a, b)

    def test_seed_separation(self):
        a = seeded_rng(42, "paths").standard_normal(8)
        b = seeded_rng(43, "paths").standard_normal(8)
        assert not np.array_equal(a, b)


class TestLoadScenario:
    def test_full_scale_profile(self, tmp_path):
        path = tmp_path / "fullscale.json"
        path.write_text(json.dumps(full_scale_dict()))
        spec = load_scenario(str(path))
        assert spec.system.carrier_frequency_hz == 28e9
        assert spec.system.bandwidth_hz == 20e6
        assert spec.system.subcarrier_count == 144
        assert spec.tx_sim.layers == 3 and spec.rx_sim.layers == 3
        assert spec.tx_sim.meta_atoms == 100 and spec.rx_sim.meta_atoms == 100
        assert len(spec.targets) == 2

    def test_bad_otfs_factors(self, tmp_path):
        data = full_scale_dict()
        data["system"]["otfs_factors"] = [7, 13]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        with pytest.raises(ScenarioError, match="otfs_factors"):
            load_scenario(str(path))

    def test_minimal_file_gets_defaults(self, tmp_path):
        data = {"targets": [{"range_m": 300.0, "velocity_mps": 100.0}],
                "grid": {"tau_max_s": 2e-6, "nu_max_hz": 2e4}}
        path = tmp_path / "minimal.json"
        path.write_text(json.dumps(data))
        spec = load_scenario(str(path))
        assert spec.grid.delay_bins == 16 and spec.grid.doppler_bins == 16
        assert spec.optimizer.inner_iterations == 25
        assert spec.pda.max_iterations == 50 and spec.pda.damping == 0.5
        assert spec.system.sampling_rate_hz == spec.system.bandwidth_hz
        assert spec.system.afdm_c1 is not None

    def test_two_loads_compare_equal(self, tmp_path):
        path = tmp_path / "fullscale.json"
        path.write_text(json.dumps(full_scale_dict()))
        assert load_scenario(str(path)) == load_scenario(str(path))

    def test_malformed_document(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioError, match="parse"):
            load_scenario(str(path))

    def test_missing_file_names_path(self):
        with pytest.raises(ScenarioError, match="no/such/file.json"):
            load_scenario("no/such/file.json")

    def test_unknown_key_rejected(self):
        data = full_scale_dict()
        data["system"]["bandwdith_hz"] = 1.0
        with pytest.raises(ScenarioError, match="bandwdith_hz"):
            scenario_from_dict(data)

    def test_target_outside_grid(self):
        data = full_scale_dict()
        data["targets"][0]["range_m"] = 5e4   # delay beyond tau_max
        with pytest.raises(ScenarioError, match="targets"):
            scenario_from_dict(data)

    def test_env_seed_override(self, monkeypatch):
        data = full_scale_dict()
        del data["seed"]
        monkeypatch.setenv(SEED_ENV_VAR, "777")
        assert scenario_from_dict(data).seed == 777
        monkeypatch.delenv(SEED_ENV_VAR)
        assert scenario_from_dict(data).seed == DEFAULT_SEED

    def test_explicit_seed_beats_env(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "777")
        assert scenario_from_dict(full_scale_dict()).seed == 99


class TestOnGridSnapping:
    def test_desk_targets_land_exactly_on_grid(self):
        spec = default_scenario(seed=1)
        tau_axis = spec.grid.tau_s
        nu_axis = spec.grid.nu_hz
        for target in spec.targets:
            tau, nu = target_delay_doppler(target, spec.system)
            k = int(np.argmin(np.abs(tau_axis - tau)))
            d = int(np.argmin(np.abs(nu_axis - nu)))
            # Snapped truth must reproduce the grid cell's physical value
            # bit for bit, so a perfect estimate scores an exact zero.
            assert target.range_m == tau_axis[k] * SPEED_OF_LIGHT
            assert target.velocity_mps == (
                nu_axis[d] * SPEED_OF_LIGHT / spec.system.carrier_frequency_hz)

    def test_off_grid_target_rejected_in_on_grid_mode(self):
        data = {
            "system": {"bandwidth_hz": 240e3, "subcarrier_count": 48},
            "targets": [{"range_m": 1000.0, "velocity_mps": 100.0},
                        {"range_m": 3747.4057, "velocity_mps": -401.5}],
            "grid": {"mode": "on_grid", "nu_max_hz": 37.5e3},
        }
        with pytest.raises(ScenarioError, match="targets\\[0\\]"):
            scenario_from_dict(data)


class TestConfigs:
    def test_grid_invariants(self):
        with pytest.raises(ScenarioError):
            GridSpec(delay_bins=1, doppler_bins=4, tau_max_s=1e-6, nu_max_hz=1e3)
        with pytest.raises(ScenarioError):
            GridSpec(delay_bins=4, doppler_bins=4, tau_max_s=-1.0, nu_max_hz=1e3)

    def test_chirp_rate_default(self):
        # Fractional Doppler: ceil(f_max) = 1, rate = 3 / (2 N).
        assert afdm_chirp_rate(144, 0.04) == pytest.approx(3 / 288)
        assert afdm_chirp_rate(48, 7.5) == pytest.approx(17 / 96)

    def test_otfs_factorization(self):
        assert default_otfs_factors(144) == (12, 12)
        assert default_otfs_factors(48) == (6, 8)
        assert default_otfs_factors(13) == (1, 13)
