"""Metasurface-parametrized doubly-dispersive channel assembly.

Draws path sets (fixed targets plus optional clutter), collapses both
metasurface stacks into a single complex gain per path, and composes the
end-to-end frame-domain channel matrix used by the detector and the
estimation benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .metasurface import (SimStack, correlation_operator, rx_transfer,
                          tx_transfer, upa_steering)
from .scenario import (ScenarioError, SimGeometrySpec, SystemParams,
                       TargetTruth)
from .waveforms import EffectivePathMatrix, WaveformKind, effective_path_matrix

_CORRELATION_CACHE: dict[tuple, object] = {}


def _stack_correlation(stack: SimStack):
    key = (stack.geometry, stack.wavelength)
    if key not in _CORRELATION_CACHE:
        _CORRELATION_CACHE[key] = correlation_operator(stack.geometry, stack.wavelength)
    return _CORRELATION_CACHE[key]


@dataclass(frozen=True)
class Path:
    """One propagation path with cached steering vectors."""

    gain: complex                 # small-scale complex amplitude
    delay_samples: int            # integer delay used by the matrix model
    doppler_cycles: float         # Doppler in cycles per frame
    tau_s: float                  # physical delay backing delay_samples
    nu_hz: float                  # physical Doppler backing doppler_cycles
    azimuth_out_rad: float
    elevation_out_rad: float
    azimuth_in_rad: float
    elevation_in_rad: float
    steering_tx: np.ndarray       # departure response on the transmit stack
    steering_rx: np.ndarray       # arrival response on the receive stack

    def outer_product(self) -> np.ndarray:
        """Arrival-by-departure steering outer product."""
        return np.outer(self.steering_rx, self.steering_tx.conj())


@dataclass(frozen=True)
class PathSet:
    """All paths of one channel realization."""

    paths: tuple[Path, ...]
    num_targets: int              # leading paths correspond to configured targets

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ValueError("a channel needs at least one path")

    def __len__(self) -> int:
        return len(self.paths)

    def truth_pairs(self) -> list[tuple[float, float]]:
        """(delay s, Doppler Hz) of the target paths."""
        return [(p.tau_s, p.nu_hz) for p in self.paths[: self.num_targets]]


def gain_prefactor(m_tx: int, m_rx: int, num_paths: int) -> float:
    """Aperture normalization sqrt(M * M_rx / P) applied to every path gain."""
    return float(np.sqrt(m_tx * m_rx / num_paths))


def _draw_gain(rng: np.random.Generator, distribution: str) -> complex:
    re, im = rng.standard_normal(2)
    if distribution == "complex_normal":
        return complex(re, im) / np.sqrt(2.0)
    if distribution == "unit_modulus":
        z = complex(re, im)
        mag = abs(z)
        return z / mag if mag > 0 else 1.0 + 0.0j
    raise ValueError(f"unknown gain distribution {distribution!r}")


def sample_paths(rng: np.random.Generator, sys: SystemParams,
                 tx_geom: SimGeometrySpec, rx_geom: SimGeometrySpec,
                 targets: Sequence[TargetTruth],
                 bounds: Optional[tuple[float, float]] = None,
                 extra_paths: int = 0,
                 gain_distribution: str = "complex_normal",
                 ensure_distinct: bool = True) -> PathSet:
    """Draw one channel realization.

    Target paths keep their configured delay/Doppler; gains and angles are
    drawn wherever the target leaves them unset (elevations uniform on
    [0, pi], azimuths uniform on [-pi/2, pi/2], unit-variance gains).
    extra_paths adds clutter with delay/Doppler uniform inside bounds.
    The draw order is fixed so streams stay aligned across configurations.
    """
    if extra_paths > 0 and bounds is None:
        raise ValueError("bounds=(tau_max, nu_max) required for extra paths")
    wavelength = sys.wavelength_m
    paths: list[Path] = []
    used: set[tuple[int, float]] = set()

    def build(gain, tau, nu, az_out, el_out, az_in, el_in) -> Path:
        ell = int(round(tau * sys.sampling_rate_hz))
        f = sys.subcarrier_count * nu / sys.sampling_rate_hz
        if not (0 <= ell < sys.subcarrier_count):
            raise ValueError(f"path delay of {ell} samples exceeds the frame length")
        b_tx = upa_steering(az_out, el_out, *tx_geom.grid_dims,
                            tx_geom.atom_spacing_m, wavelength).vector
        b_rx = upa_steering(az_in, el_in, *rx_geom.grid_dims,
                            rx_geom.atom_spacing_m, wavelength).vector
        return Path(gain=gain, delay_samples=ell, doppler_cycles=f,
                    tau_s=tau, nu_hz=nu,
                    azimuth_out_rad=az_out, elevation_out_rad=el_out,
                    azimuth_in_rad=az_in, elevation_in_rad=el_in,
                    steering_tx=b_tx, steering_rx=b_rx)

    for target in targets:
        gain = _draw_gain(rng, gain_distribution)
        az_out = rng.uniform(-np.pi / 2, np.pi / 2)
        el_out = rng.uniform(0.0, np.pi)
        az_in = rng.uniform(-np.pi / 2, np.pi / 2)
        el_in = rng.uniform(0.0, np.pi)
        if target.gain is not None:
            gain = target.gain
        if target.azimuth_out_rad is not None:
            az_out = target.azimuth_out_rad
        if target.elevation_out_rad is not None:
            el_out = target.elevation_out_rad
        if target.azimuth_in_rad is not None:
            az_in = target.azimuth_in_rad
        if target.elevation_in_rad is not None:
            el_in = target.elevation_in_rad
        tau = target.range_m / 299_792_458.0
        nu = target.velocity_mps * sys.carrier_frequency_hz / 299_792_458.0
        path = build(gain, tau, nu, az_out, el_out, az_in, el_in)
        key = (path.delay_samples, path.doppler_cycles)
        if ensure_distinct and key in used:
            raise ScenarioError("targets share a delay-Doppler cell; "
                                "orthogonality assumption violated")
        used.add(key)
        paths.append(path)

    for _ in range(extra_paths):
        tau_max, nu_max = bounds
        for _attempt in range(64):
            gain = _draw_gain(rng, gain_distribution)
            az_out = rng.uniform(-np.pi / 2, np.pi / 2)
            el_out = rng.uniform(0.0, np.pi)
            az_in = rng.uniform(-np.pi / 2, np.pi / 2)
            el_in = rng.uniform(0.0, np.pi)
            tau = rng.uniform(0.0, tau_max)
            nu = rng.uniform(-nu_max, nu_max)
            path = build(gain, tau, nu, az_out, el_out, az_in, el_in)
            key = (path.delay_samples, path.doppler_cycles)
            if not ensure_distinct or key not in used:
                break
        else:
            raise RuntimeError("could not draw a clutter path with a fresh delay-Doppler cell")
        used.add(key)
        paths.append(path)

    return PathSet(paths=tuple(paths), num_targets=len(targets))


def paths_from_scenario(rng: np.random.Generator, scenario) -> PathSet:
    """Path realization for a validated scenario."""
    return sample_paths(
        rng, scenario.system, scenario.tx_sim, scenario.rx_sim,
        scenario.targets,
        bounds=(scenario.grid.tau_max_s, scenario.grid.nu_max_hz),
        extra_paths=scenario.extra_paths,
    )


def effective_gain(path: Path, tx: SimStack, rx: SimStack,
                   total_paths: int) -> complex:
    """Collapse both stacks into a single complex gain for one path.

    The receive chain (stack response, correlation root, arrival steering)
    and transmit chain (departure steering, correlation root, stack response)
    each reduce to a scalar; the aperture prefactor scales the product.
    """
    v = tx_transfer(tx)
    u = rx_transfer(rx)
    return _effective_gain_cached(path, tx, rx, u, v, total_paths)


def _effective_gain_cached(path: Path, tx: SimStack, rx: SimStack,
                           u: np.ndarray, v: np.ndarray,
                           total_paths: int) -> complex:
    rx_corr = _stack_correlation(rx)
    tx_corr = _stack_correlation(tx)
    if path.steering_rx.shape != u.shape:
        raise ValueError("receive steering vector does not match the stack size")
    if path.steering_tx.shape != v.shape:
        raise ValueError("transmit steering vector does not match the stack size")
    arrive = u @ rx_corr.sqrt @ path.steering_rx
    depart = path.steering_tx.conj() @ tx_corr.sqrt @ v
    pref = gain_prefactor(tx.meta_atoms, rx.meta_atoms, total_paths)
    return complex(pref * path.gain * arrive * depart)


def effective_gains(pathset: PathSet, tx: Optional[SimStack],
                    rx: Optional[SimStack]) -> np.ndarray:
    """Per-path gains; without stacks the bare path amplitudes pass through."""
    if tx is None or rx is None:
        return np.array([p.gain for p in pathset.paths], dtype=complex)
    v = tx_transfer(tx)
    u = rx_transfer(rx)
    total = len(pathset)
    return np.array([
        _effective_gain_cached(p, tx, rx, u, v, total) for p in pathset.paths
    ], dtype=complex)


@dataclass(frozen=True)
class EffectiveChannel:
    """End-to-end frame-domain channel: gains, per-path matrices, their sum."""

    gains: np.ndarray
    matrices: tuple[EffectivePathMatrix, ...]
    matrix: np.ndarray
    kind: WaveformKind


def end_to_end(gains: np.ndarray, pathset: PathSet, sys: SystemParams,
               kind: WaveformKind) -> EffectiveChannel:
    """Compose H = sum_p gain_p G_p for one waveform."""
    gains = np.asarray(gains, dtype=complex)
    if gains.shape != (len(pathset),):
        raise ValueError("one gain per path is required")
    mats = tuple(
        effective_path_matrix(kind, sys, p.delay_samples, p.doppler_cycles)
        for p in pathset.paths)
    n = sys.subcarrier_count
    h = np.zeros((n, n), dtype=complex)
    for g, m in zip(gains, mats):
        h += g * m.matrix
    return EffectiveChannel(gains=gains, matrices=mats, matrix=h, kind=kind)


def apply_channel(h: np.ndarray, x: np.ndarray, noise_variance: float,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """y = H x + w with circularly-symmetric complex noise of the given
    per-entry variance. noise_variance = 0 returns the noiseless product."""
    h = np.asarray(h)
    x = np.asarray(x, dtype=complex)
    y = h @ x
    if noise_variance < 0:
        raise ValueError("noise variance must be >= 0")
    if noise_variance > 0:
        if rng is None:
            raise ValueError("rng required when noise_variance > 0")
        n = y.shape[0]
        w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        y = y + np.sqrt(noise_variance / 2.0) * w
    return y


def received_energy_per_sample(h: np.ndarray) -> float:
    """Mean received energy per sample for unit-energy symbols: ||H||_F^2 / N."""
    h = np.asarray(h)
    return float(np.sum(np.abs(h) ** 2) / h.shape[0])
