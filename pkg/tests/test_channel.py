"""Path sampling, stack-parametrized gains and end-to-end channel assembly."""

import numpy as np
import pytest

from simdd.channel import (apply_channel, effective_gain, effective_gains,
                           end_to_end, gain_prefactor, paths_from_scenario,
                           received_energy_per_sample, sample_paths)
from simdd.metasurface import SimStack
from simdd.scenario import (SystemParams, TargetTruth, default_geometry,
                            default_scenario, seeded_rng)
from simdd.waveforms import WaveformKind, time_domain_oracle

SYS = SystemParams(subcarrier_count=16, otfs_factors=(4, 4))
WL = SYS.wavelength_m
TX_GEOM = default_geometry(2, (2, 2), WL, "transmit")
RX_GEOM = default_geometry(2, (2, 2), WL, "receive")


def one_target_paths(rng_label="p", seed=0, targets=None):
    rng = seeded_rng(seed, rng_label)
    if targets is None:
        targets = [TargetTruth(range_m=30.0, velocity_mps=20.0)]
    return sample_paths(rng, SYS, TX_GEOM, RX_GEOM, targets)


class TestSamplePaths:
    def test_configured_targets_fixed(self):
        spec = default_scenario(seed=2)
        pathset = paths_from_scenario(seeded_rng(2, "paths"), spec)
        assert len(pathset) == 2
        taus = [p.tau_s for p in pathset.paths]
        expected = [t.range_m / 299_792_458.0 for t in spec.targets]
        assert taus == pytest.approx(expected, rel=1e-12)
        assert pathset.paths[0].delay_samples == 3
        assert pathset.paths[1].delay_samples == 7

    def test_deterministic_given_seed(self):
        a = one_target_paths(seed=5)
        b = one_target_paths(seed=5)
        assert a.paths[0].gain == b.paths[0].gain
        assert a.paths[0].azimuth_in_rad == b.paths[0].azimuth_in_rad

    def test_gain_distribution_unit_variance(self):
        rng = seeded_rng(0, "mc")
        targets = [TargetTruth(30.0, 20.0)]
        draws = [sample_paths(rng, SYS, TX_GEOM, RX_GEOM, targets).paths[0].gain
                 for _ in range(10_000)]
        power = np.mean(np.abs(draws) ** 2)
        assert power == pytest.approx(1.0, abs=0.05)

    def test_angle_ranges(self):
        rng = seeded_rng(1, "angles")
        targets = [TargetTruth(30.0, 20.0)] * 3
        for _ in range(50):
            ps = sample_paths(rng, SYS, TX_GEOM, RX_GEOM,
                              [TargetTruth(30.0, 20.0)])
            p = ps.paths[0]
            assert 0.0 <= p.elevation_out_rad <= np.pi
            assert 0.0 <= p.elevation_in_rad <= np.pi
            assert -np.pi / 2 <= p.azimuth_out_rad <= np.pi / 2
            assert -np.pi / 2 <= p.azimuth_in_rad <= np.pi / 2

    def test_fixed_fields_respected(self):
        target = TargetTruth(30.0, 20.0, azimuth_out_rad=0.5,
                             elevation_out_rad=1.0, azimuth_in_rad=-0.2,
                             elevation_in_rad=2.0, gain=0.5 + 0.5j)
        ps = one_target_paths(targets=[target])
        p = ps.paths[0]
        assert p.gain == 0.5 + 0.5j
        assert p.azimuth_out_rad == 0.5 and p.elevation_in_rad == 2.0

    def test_clutter_paths_extend_set(self):
        rng = seeded_rng(3, "clutter")
        ps = sample_paths(rng, SYS, TX_GEOM, RX_GEOM,
                          [TargetTruth(30.0, 20.0)],
                          bounds=(10 / SYS.sampling_rate_hz, 1e3),
                          extra_paths=2)
        assert len(ps) == 3 and ps.num_targets == 1
        cells = {(p.delay_samples, p.doppler_cycles) for p in ps.paths}
        assert len(cells) == 3


class TestEffectiveGain:
    def test_prefactor_value(self):
        assert gain_prefactor(100, 100, 2) == pytest.approx(np.sqrt(5000), rel=1e-12)
        assert gain_prefactor(100, 100, 2) == pytest.approx(70.71, rel=1e-3)

    def test_scalar_collapse_single_atom(self):
        # Trivial stacks with forced unit couplings:
        # |gain| collapses to |h| / sqrt(P).
        tx_geom = default_geometry(1, (1, 1), WL, "transmit")
        rx_geom = default_geometry(1, (1, 1), WL, "receive")
        tx = SimStack(tx_geom, WL, couplings=[np.ones((1, 1))])
        rx = SimStack(rx_geom, WL, couplings=[np.ones((1, 1))])
        rng = seeded_rng(4, "p")
        ps = sample_paths(rng, SYS, tx_geom, rx_geom,
                          [TargetTruth(30.0, 20.0), TargetTruth(60.0, -20.0)])
        for p in ps.paths:
            g = effective_gain(p, tx, rx, total_paths=2)
            assert abs(g) == pytest.approx(abs(p.gain) / np.sqrt(2), rel=1e-12)

    def test_linear_in_path_amplitude(self):
        tx = SimStack(TX_GEOM, WL)
        rx = SimStack(RX_GEOM, WL)
        ps = one_target_paths(seed=7)
        base = effective_gain(ps.paths[0], tx, rx, 1)
        import dataclasses
        scaled = dataclasses.replace(ps.paths[0], gain=3.0 * ps.paths[0].gain)
        assert effective_gain(scaled, tx, rx, 1) == pytest.approx(3.0 * base, rel=1e-12)

    def test_invariant_to_two_pi_phase_shift(self):
        tx = SimStack(TX_GEOM, WL)
        rx = SimStack(RX_GEOM, WL)
        rng = seeded_rng(8, "ph")
        from simdd.metasurface import random_phases
        tx.set_phases(random_phases(tx, rng))
        ps = one_target_paths(seed=9)
        before = effective_gain(ps.paths[0], tx, rx, 1)
        phases = tx.phases
        phases[0][1] += 2 * np.pi
        tx.set_phases(phases)
        after = effective_gain(ps.paths[0], tx, rx, 1)
        assert after == pytest.approx(before, rel=1e-12)

    def test_no_stack_mode_passes_bare_gains(self):
        ps = one_target_paths(seed=10)
        gains = effective_gains(ps, None, None)
        assert gains[0] == ps.paths[0].gain


class TestEndToEnd:
    def test_identity_for_static_unit_path(self):
        ps = one_target_paths(targets=[TargetTruth(0.0, 0.0)])
        channel = end_to_end(np.array([1.0 + 0j]), ps, SYS, WaveformKind.OFDM)
        assert np.max(np.abs(channel.matrix - np.eye(16))) < 1e-12

    def test_frobenius_triangle_bound(self):
        rng = seeded_rng(11, "p")
        ps = sample_paths(rng, SYS, TX_GEOM, RX_GEOM,
                          [TargetTruth(30.0, 20.0), TargetTruth(60.0, -40.0)])
        gains = np.array([1.3 - 0.2j, -0.5 + 1j])
        channel = end_to_end(gains, ps, SYS, WaveformKind.AFDM)
        bound = np.sum(np.abs(gains)) * np.sqrt(16)
        assert np.linalg.norm(channel.matrix) <= bound + 1e-9

    @pytest.mark.parametrize("kind", list(WaveformKind))
    def test_matches_time_domain_oracle(self, kind):
        rng = seeded_rng(12, "p")
        ps = sample_paths(rng, SYS, TX_GEOM, RX_GEOM,
                          [TargetTruth(30.0, 20.0), TargetTruth(75.0, -60.0)])
        gains = np.array([0.8 - 0.1j, 0.2 + 0.9j])
        channel = end_to_end(gains, ps, SYS, kind)
        x = (rng.standard_normal(16) + 1j * rng.standard_normal(16)) / np.sqrt(2)
        oracle_paths = [(g, p.delay_samples, p.doppler_cycles)
                        for g, p in zip(gains, ps.paths)]
        simulated = time_domain_oracle(kind, SYS, oracle_paths, x)
        assert np.max(np.abs(channel.matrix @ x - simulated)) < 1e-8

    def test_gain_count_mismatch(self):
        ps = one_target_paths()
        with pytest.raises(ValueError):
            end_to_end(np.array([1.0, 2.0]), ps, SYS, WaveformKind.OFDM)


class TestApplyChannel:
    def test_noiseless(self):
        h = np.diag(np.arange(1.0, 5.0))
        x = np.ones(4, dtype=complex)
        assert np.array_equal(apply_channel(h, x, 0.0), h @ x)

    def test_noise_variance_calibrated(self):
        rng = seeded_rng(13, "noise")
        h = np.eye(8)
        x = np.zeros(8, dtype=complex)
        samples = np.concatenate([
            apply_channel(h, x, 0.25, rng) for _ in range(2500)])
        measured = np.mean(np.abs(samples) ** 2)
        assert measured == pytest.approx(0.25, rel=0.05)

    def test_reproducible_given_seed(self):
        h = np.eye(4)
        x = np.ones(4, dtype=complex)
        a = apply_channel(h, x, 0.1, seeded_rng(1, "w"))
        b = apply_channel(h, x, 0.1, seeded_rng(1, "w"))
        assert np.array_equal(a, b)

    def test_rng_required_for_noise(self):
        with pytest.raises(ValueError):
            apply_channel(np.eye(2), np.ones(2), 0.1)

    def test_energy_helper(self):
        h = 2.0 * np.eye(6)
        assert received_energy_per_sample(h) == pytest.approx(4.0)
