"""Scenario configuration and unit conversions.

Everything downstream consumes a validated ScenarioSpec: system constants,
metasurface geometry, target truth, search-grid layout and solver settings.
Physical delays and Dopplers are converted here into the normalized units
(samples, digital cycles per frame) used by the waveform and estimation code.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact SI value

SEED_ENV_VAR = "SIMDD_SEED"
DEFAULT_SEED = 1234

# Tolerance (in bins) for deciding that a target sits exactly on a grid line.
_ON_GRID_TOL = 1e-6


class ScenarioError(ValueError):
    """A scenario document is malformed or violates an invariant."""


def seeded_rng(seed: int, stream_label: str) -> np.random.Generator:
    """Deterministic, label-separated random stream.

    Identical (seed, label) pairs yield identical sequences; distinct labels
    or seeds yield statistically independent streams. Labels are hashed with
    SHA-256 so the mapping is stable across platforms and sessions.
    """
    digest = hashlib.sha256(stream_label.encode("utf-8")).digest()
    words = np.frombuffer(digest, dtype=np.uint32)
    entropy = [int(seed)] + [int(w) for w in words]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def afdm_chirp_rate(subcarrier_count: int, max_doppler_cycles: float) -> float:
    """Orthogonality-preserving first chirp rate for a given Doppler extent."""
    alpha = max(1, math.ceil(abs(max_doppler_cycles)))
    return (2 * alpha + 1) / (2 * subcarrier_count)


def default_otfs_factors(n: int) -> tuple[int, int]:
    """Most-square factorization (N1, N2) with N1 * N2 = n and N1 <= N2."""
    for d in range(int(math.isqrt(n)), 0, -1):
        if n % d == 0:
            return (d, n // d)
    return (1, n)


@dataclass(frozen=True)
class SystemParams:
    """Carrier, rate and frame-size constants shared by every module."""

    carrier_frequency_hz: float = 28e9
    bandwidth_hz: float = 20e6
    sampling_rate_hz: float = 20e6          # defaults to the bandwidth
    subcarrier_count: int = 48              # frame length N
    otfs_factors: tuple[int, int] = (6, 8)  # (N1, N2) with N1 * N2 = N
    afdm_c1: Optional[float] = None         # filled at load time; see chirp_rate_1
    afdm_c2: float = 0.0
    snr_db: float = 20.0
    noise_variance: Optional[float] = None  # linear; derived from snr_db when None
    noise_reference: str = "matched"        # matched | baseline | average
    modulation: str = "qpsk"

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def chirp_rate_1(self) -> float:
        """First AFDM chirp rate; fractional-Doppler default when unset."""
        if self.afdm_c1 is not None:
            return self.afdm_c1
        return afdm_chirp_rate(self.subcarrier_count, 1.0)

    @property
    def chirp_rate_2(self) -> float:
        return self.afdm_c2


@dataclass(frozen=True)
class SimGeometrySpec:
    """Geometry of one metasurface stack (layer count, atom grid, spacings)."""

    layers: int
    grid_dims: tuple[int, int]    # (M_x, M_z) atoms per layer
    atom_spacing_m: float
    layer_spacing_m: float
    atom_area_m2: float
    role: str                     # "transmit" | "receive"

    @property
    def meta_atoms(self) -> int:
        return self.grid_dims[0] * self.grid_dims[1]


def default_geometry(layers: int, grid_dims: tuple[int, int], wavelength_m: float,
                     role: str) -> SimGeometrySpec:
    """Geometry defaults: half-wavelength atom pitch, a five-wavelength stack
    depth split evenly across layers, and square atoms at the pitch size."""
    spacing = wavelength_m / 2.0
    return SimGeometrySpec(
        layers=layers,
        grid_dims=grid_dims,
        atom_spacing_m=spacing,
        layer_spacing_m=5.0 * wavelength_m / layers,
        atom_area_m2=spacing ** 2,
        role=role,
    )


@dataclass(frozen=True)
class TargetTruth:
    """One scatterer: one-way path length, radial velocity, angles, gain.

    Angles and gain may be None, in which case they are drawn per trial
    (elevations uniform on [0, pi], azimuths uniform on [-pi/2, pi/2],
    gain circularly-symmetric complex normal with unit variance).
    """

    range_m: float
    velocity_mps: float
    azimuth_out_rad: Optional[float] = None
    elevation_out_rad: Optional[float] = None
    azimuth_in_rad: Optional[float] = None
    elevation_in_rad: Optional[float] = None
    gain: Optional[complex] = None


@dataclass(frozen=True)
class GridSpec:
    """Delay-Doppler search grid: K_tau x D_nu uniformly spaced bins."""

    delay_bins: int = 16
    doppler_bins: int = 16
    tau_max_s: float = 0.5e-6
    nu_max_hz: float = 6e3
    mode: str = "fixed"           # "fixed" | "on_grid"

    def __post_init__(self):
        if self.delay_bins < 2 or self.doppler_bins < 2:
            raise ScenarioError("grid: delay_bins and doppler_bins must be >= 2")
        if not (self.tau_max_s > 0 and self.nu_max_hz > 0):
            raise ScenarioError("grid: tau_max_s and nu_max_hz must be positive")

    @property
    def size(self) -> int:
        return self.delay_bins * self.doppler_bins

    @property
    def tau_s(self) -> np.ndarray:
        """Delay of each bin in seconds, ascending; bin 0 is zero delay."""
        return np.arange(self.delay_bins) * (self.tau_max_s / (self.delay_bins - 1))

    @property
    def nu_hz(self) -> np.ndarray:
        """Doppler of each bin in Hz, ascending from -nu_max."""
        step = 2.0 * self.nu_max_hz / (self.doppler_bins - 1)
        return -self.nu_max_hz + np.arange(self.doppler_bins) * step

    def flat_index(self, delay_bin: int, doppler_bin: int) -> int:
        return delay_bin * self.doppler_bins + doppler_bin

    def bin_pair(self, flat: int) -> tuple[int, int]:
        return divmod(flat, self.doppler_bins)


@dataclass(frozen=True)
class OptimizerConfig:
    """Greedy min-max phase ascent settings."""

    inner_iterations: int = 25
    outer_sweeps: Optional[int] = None    # default: assumed path count + 1
    initial_rate: float = 0.5             # in (0, 1)
    decay: float = 0.85                   # in (0, 1)
    reselect_every: int = 1               # iterations between weakest-path
                                          # re-selections; a large value locks
                                          # each target in for a full sweep
    tolerance: float = 1e-6               # relative objective change
    phase_wrap: str = "wrap"              # "wrap" | "clip"

    def __post_init__(self):
        if self.inner_iterations < 1:
            raise ScenarioError("optimizer.inner_iterations must be >= 1")
        if self.reselect_every < 1:
            raise ScenarioError("optimizer.reselect_every must be >= 1")
        if not (0.0 < self.initial_rate < 1.0):
            raise ScenarioError("optimizer.initial_rate must lie in (0, 1)")
        if not (0.0 < self.decay < 1.0):
            raise ScenarioError("optimizer.decay must lie in (0, 1)")
        if self.phase_wrap not in ("wrap", "clip"):
            raise ScenarioError("optimizer.phase_wrap must be 'wrap' or 'clip'")


@dataclass(frozen=True)
class PdaConfig:
    """Sparse-recovery message-passing settings."""

    max_iterations: int = 50
    damping: float = 0.5                  # in (0, 1]
    assumed_paths: Optional[int] = None   # default: number of configured targets
    noise_variance: Optional[float] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ScenarioError("pda.max_iterations must be >= 1")
        if not (0.0 < self.damping <= 1.0):
            raise ScenarioError("pda.damping must lie in (0, 1]")


@dataclass(frozen=True)
class ScenarioSpec:
    """Fully validated scenario; immutable and safe to share across workers."""

    system: SystemParams
    tx_sim: SimGeometrySpec
    rx_sim: SimGeometrySpec
    targets: tuple[TargetTruth, ...]
    grid: GridSpec
    optimizer: OptimizerConfig
    pda: PdaConfig
    seed: int
    extra_paths: int = 0                  # additional non-target clutter paths

    @property
    def num_paths(self) -> int:
        return len(self.targets) + self.extra_paths

    @property
    def assumed_paths(self) -> int:
        if self.pda.assumed_paths is not None:
            return self.pda.assumed_paths
        return len(self.targets)


# ---------------------------------------------------------------------------
# Unit conversions

def target_delay_doppler(target: TargetTruth, sys: SystemParams) -> tuple[float, float]:
    """Physical delay (s) and Doppler shift (Hz) of a target."""
    tau = target.range_m / SPEED_OF_LIGHT
    nu = target.velocity_mps * sys.carrier_frequency_hz / SPEED_OF_LIGHT
    return tau, nu


def normalize_target(target: TargetTruth, sys: SystemParams) -> tuple[float, float]:
    """Normalized delay (samples) and Doppler (cycles per frame) of a target."""
    tau, nu = target_delay_doppler(target, sys)
    ell = tau * sys.sampling_rate_hz
    f = sys.subcarrier_count * nu / sys.sampling_rate_hz
    return ell, f


def denormalize_target(ell: float, f: float, sys: SystemParams) -> tuple[float, float]:
    """Inverse of normalize_target: (range_m, velocity_mps)."""
    range_m = ell / sys.sampling_rate_hz * SPEED_OF_LIGHT
    nu = f * sys.sampling_rate_hz / sys.subcarrier_count
    velocity = nu * SPEED_OF_LIGHT / sys.carrier_frequency_hz
    return range_m, velocity


def range_from_delay(tau_s: float) -> float:
    return tau_s * SPEED_OF_LIGHT


def velocity_from_doppler(nu_hz: float, sys: SystemParams) -> float:
    return nu_hz * SPEED_OF_LIGHT / sys.carrier_frequency_hz


def noise_variance_for_snr(received_energy_per_sample: float, snr_db: float) -> float:
    """Per-entry complex noise variance for a target SNR referenced to the
    given mean received energy per sample."""
    return received_energy_per_sample * 10.0 ** (-snr_db / 10.0)


# ---------------------------------------------------------------------------
# Loading and validation

def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ScenarioError(message)


def _check_keys(section: dict, allowed: Sequence[str], where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ScenarioError(f"{where}: unknown key '{key}'")


def _parse_system(data: dict) -> SystemParams:
    _check_keys(data, [
        "carrier_frequency_hz", "bandwidth_hz", "sampling_rate_hz",
        "subcarrier_count", "otfs_factors", "afdm_c1", "afdm_c2",
        "snr_db", "noise_variance", "noise_reference", "modulation",
    ], "system")
    fc = float(data.get("carrier_frequency_hz", 28e9))
    bw = float(data.get("bandwidth_hz", 20e6))
    fs = float(data.get("sampling_rate_hz", bw))
    n = int(data.get("subcarrier_count", 48))
    _require(fc > 0, "system.carrier_frequency_hz must be positive")
    _require(bw > 0, "system.bandwidth_hz must be positive")
    _require(fs > 0, "system.sampling_rate_hz must be positive")
    _require(n >= 2, "system.subcarrier_count must be >= 2")
    factors = data.get("otfs_factors")
    if factors is None:
        n1, n2 = default_otfs_factors(n)
    else:
        n1, n2 = int(factors[0]), int(factors[1])
    _require(n1 >= 1 and n2 >= 1 and n1 * n2 == n,
             f"system.otfs_factors: {n1} * {n2} != subcarrier_count {n}")
    c1 = data.get("afdm_c1")
    nv = data.get("noise_variance")
    reference = data.get("noise_reference", "matched")
    _require(reference in ("matched", "baseline", "average"),
             "system.noise_reference must be matched, baseline or average")
    modulation = data.get("modulation", "qpsk")
    _require(modulation == "qpsk", "system.modulation: only 'qpsk' is supported")
    return SystemParams(
        carrier_frequency_hz=fc,
        bandwidth_hz=bw,
        sampling_rate_hz=fs,
        subcarrier_count=n,
        otfs_factors=(n1, n2),
        afdm_c1=None if c1 is None else float(c1),
        afdm_c2=float(data.get("afdm_c2", 0.0)),
        snr_db=float(data.get("snr_db", 20.0)),
        noise_variance=None if nv is None else float(nv),
        noise_reference=reference,
        modulation=modulation,
    )


def _parse_geometry(data: dict, wavelength: float, role: str, where: str) -> SimGeometrySpec:
    _check_keys(data, [
        "layers", "grid_dims", "meta_atoms_per_layer",
        "atom_spacing_m", "layer_spacing_m", "atom_area_m2",
    ], where)
    layers = int(data.get("layers", 2))
    dims = data.get("grid_dims", [4, 4])
    mx, mz = int(dims[0]), int(dims[1])
    _require(layers >= 1, f"{where}.layers must be >= 1")
    _require(mx >= 1 and mz >= 1, f"{where}.grid_dims entries must be >= 1")
    declared = data.get("meta_atoms_per_layer")
    if declared is not None:
        _require(int(declared) == mx * mz,
                 f"{where}.meta_atoms_per_layer: {declared} != {mx}*{mz}")
    base = default_geometry(layers, (mx, mz), wavelength, role)
    spacing = float(data.get("atom_spacing_m", base.atom_spacing_m))
    layer_spacing = float(data.get("layer_spacing_m", base.layer_spacing_m))
    area = float(data.get("atom_area_m2", base.atom_area_m2))
    _require(spacing > 0 and layer_spacing > 0 and area > 0,
             f"{where}: geometric lengths must be positive")
    return SimGeometrySpec(layers, (mx, mz), spacing, layer_spacing, area, role)


def _parse_target(data: dict, index: int) -> TargetTruth:
    where = f"targets[{index}]"
    _check_keys(data, [
        "range_m", "velocity_mps", "azimuth_out_rad", "elevation_out_rad",
        "azimuth_in_rad", "elevation_in_rad", "gain",
    ], where)
    _require("range_m" in data, f"{where}.range_m is required")
    _require("velocity_mps" in data, f"{where}.velocity_mps is required")
    gain = data.get("gain")
    if gain is not None:
        gain = complex(float(gain[0]), float(gain[1]))

    def opt(key):
        value = data.get(key)
        return None if value is None else float(value)

    target = TargetTruth(
        range_m=float(data["range_m"]),
        velocity_mps=float(data["velocity_mps"]),
        azimuth_out_rad=opt("azimuth_out_rad"),
        elevation_out_rad=opt("elevation_out_rad"),
        azimuth_in_rad=opt("azimuth_in_rad"),
        elevation_in_rad=opt("elevation_in_rad"),
        gain=gain,
    )
    _require(target.range_m >= 0, f"{where}.range_m must be >= 0")
    return target


def _build_grid(data: dict, sys: SystemParams,
                targets: Sequence[TargetTruth]) -> GridSpec:
    _check_keys(data, ["delay_bins", "doppler_bins", "tau_max_s",
                       "nu_max_hz", "mode"], "grid")
    k = int(data.get("delay_bins", 16))
    d = int(data.get("doppler_bins", 16))
    mode = data.get("mode", "fixed")
    _require(mode in ("fixed", "on_grid"), "grid.mode must be 'fixed' or 'on_grid'")
    tau_max = data.get("tau_max_s")
    nu_max = data.get("nu_max_hz")
    if mode == "on_grid":
        # Sample-aligned delay axis; Doppler extent taken from the fastest
        # target so the extreme Dopplers fall on the outermost bins.
        if tau_max is None:
            tau_max = (k - 1) / sys.sampling_rate_hz
        if nu_max is None:
            dopplers = [abs(target_delay_doppler(t, sys)[1]) for t in targets]
            peak = max(dopplers, default=0.0)
            _require(peak > 0, "grid: on_grid mode needs a moving target or explicit nu_max_hz")
            nu_max = peak
    else:
        tau_max = 0.5e-6 if tau_max is None else tau_max
        nu_max = 6e3 if nu_max is None else nu_max
    return GridSpec(delay_bins=k, doppler_bins=d,
                    tau_max_s=float(tau_max), nu_max_hz=float(nu_max), mode=mode)


def _snap_targets_to_grid(targets: Sequence[TargetTruth], grid: GridSpec,
                          sys: SystemParams) -> tuple[TargetTruth, ...]:
    """In on_grid mode, rewrite each target's range/velocity as the exact
    value of its grid cell so that a perfect estimate reproduces the truth
    bit for bit. Targets farther than a small tolerance from any cell are
    rejected."""
    tau_axis = grid.tau_s
    nu_axis = grid.nu_hz
    tau_bin = grid.tau_max_s / (grid.delay_bins - 1)
    nu_bin = 2.0 * grid.nu_max_hz / (grid.doppler_bins - 1)
    snapped = []
    for i, target in enumerate(targets):
        tau, nu = target_delay_doppler(target, sys)
        ki = int(np.argmin(np.abs(tau_axis - tau)))
        di = int(np.argmin(np.abs(nu_axis - nu)))
        _require(abs(tau_axis[ki] - tau) <= _ON_GRID_TOL * tau_bin,
                 f"targets[{i}].range_m is not on the delay grid (on_grid mode)")
        _require(abs(nu_axis[di] - nu) <= _ON_GRID_TOL * nu_bin,
                 f"targets[{i}].velocity_mps is not on the Doppler grid (on_grid mode)")
        snapped.append(replace(
            target,
            range_m=range_from_delay(float(tau_axis[ki])),
            velocity_mps=velocity_from_doppler(float(nu_axis[di]), sys),
        ))
    return tuple(snapped)


def _validate_targets(targets: Sequence[TargetTruth], grid: GridSpec,
                      sys: SystemParams) -> None:
    slack = 1e-9
    for i, target in enumerate(targets):
        tau, nu = target_delay_doppler(target, sys)
        _require(0.0 <= tau <= grid.tau_max_s * (1 + slack) + slack,
                 f"targets[{i}]: delay {tau:.3e} s outside [0, tau_max]")
        _require(abs(nu) <= grid.nu_max_hz * (1 + slack) + slack,
                 f"targets[{i}]: Doppler {nu:.3e} Hz outside [-nu_max, nu_max]")
        ell = round(tau * sys.sampling_rate_hz)
        _require(ell < sys.subcarrier_count,
                 f"targets[{i}]: delay of {ell} samples exceeds the frame length")


def scenario_from_dict(data: dict) -> ScenarioSpec:
    """Build and validate a ScenarioSpec from a plain dictionary."""
    _check_keys(data, ["system", "tx_sim", "rx_sim", "targets", "grid",
                       "optimizer", "pda", "seed", "extra_paths"], "scenario")
    sys_params = _parse_system(data.get("system", {}))
    wavelength = sys_params.wavelength_m
    tx = _parse_geometry(data.get("tx_sim", {}), wavelength, "transmit", "tx_sim")
    rx = _parse_geometry(data.get("rx_sim", {}), wavelength, "receive", "rx_sim")
    raw_targets = data.get("targets", [])
    _require(len(raw_targets) >= 1, "targets: at least one target is required")
    targets = tuple(_parse_target(t, i) for i, t in enumerate(raw_targets))
    grid = _build_grid(data.get("grid", {}), sys_params, targets)
    if grid.mode == "on_grid":
        targets = _snap_targets_to_grid(targets, grid, sys_params)
    _validate_targets(targets, grid, sys_params)

    if sys_params.afdm_c1 is None:
        f_max = sys_params.subcarrier_count * grid.nu_max_hz / sys_params.sampling_rate_hz
        sys_params = replace(sys_params, afdm_c1=afdm_chirp_rate(
            sys_params.subcarrier_count, f_max))

    opt_data = dict(data.get("optimizer", {}))
    _check_keys(opt_data, ["inner_iterations", "outer_sweeps", "initial_rate",
                           "decay", "reselect_every", "tolerance", "phase_wrap"],
                "optimizer")
    sweeps = opt_data.pop("outer_sweeps", None)
    defaults = OptimizerConfig()
    optimizer = OptimizerConfig(
        inner_iterations=int(opt_data.get("inner_iterations",
                                          defaults.inner_iterations)),
        outer_sweeps=None if sweeps is None else int(sweeps),
        initial_rate=float(opt_data.get("initial_rate", defaults.initial_rate)),
        decay=float(opt_data.get("decay", defaults.decay)),
        reselect_every=int(opt_data.get("reselect_every", defaults.reselect_every)),
        tolerance=float(opt_data.get("tolerance", defaults.tolerance)),
        phase_wrap=opt_data.get("phase_wrap", defaults.phase_wrap),
    )

    pda_data = data.get("pda", {})
    _check_keys(pda_data, ["max_iterations", "damping", "assumed_paths",
                           "noise_variance"], "pda")
    assumed = pda_data.get("assumed_paths")
    nv = pda_data.get("noise_variance")
    pda = PdaConfig(
        max_iterations=int(pda_data.get("max_iterations", 50)),
        damping=float(pda_data.get("damping", 0.5)),
        assumed_paths=None if assumed is None else int(assumed),
        noise_variance=None if nv is None else float(nv),
    )

    extra = int(data.get("extra_paths", 0))
    _require(extra >= 0, "extra_paths must be >= 0")
    if pda.assumed_paths is not None:
        _require(1 <= pda.assumed_paths <= grid.size,
                 "pda.assumed_paths must lie in [1, grid size]")

    seed = data.get("seed")
    if seed is None:
        seed = int(os.environ.get(SEED_ENV_VAR, DEFAULT_SEED))
    seed = int(seed)
    _require(0 <= seed < 2 ** 64, "seed must fit in 64 unsigned bits")

    spec = ScenarioSpec(
        system=sys_params, tx_sim=tx, rx_sim=rx, targets=targets,
        grid=grid, optimizer=optimizer, pda=pda, seed=seed, extra_paths=extra,
    )
    _require(len(spec.targets) <= spec.num_paths,
             "targets: user path count exceeds total path count")
    return spec


def load_scenario(path: str) -> ScenarioSpec:
    """Load, validate and normalize a JSON scenario file."""
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot parse scenario file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario file {path} must contain a JSON object")
    return scenario_from_dict(data)


def default_scenario(seed: Optional[int] = None) -> ScenarioSpec:
    """Desk-scale scenario: N = 48 over a 240 kHz band, two 2-layer 16-atom
    stacks, a 16 x 16 sample-aligned grid and two grid-aligned fast targets.

    The narrow band stretches the frame to 200 us, so the Doppler grid can
    step by exactly one cycle per frame (5 kHz): its columns decorrelate the
    way a delay-Doppler search grid assumes, and the two targets occupy
    mutually quasi-orthogonal cells.
    """
    fs = 240e3
    fc = 28e9
    nu_max = 37.5e3           # 7.5 cycles per frame at this rate
    data = {
        "system": {
            "carrier_frequency_hz": fc,
            "bandwidth_hz": fs,
            "subcarrier_count": 48,
            # Common noise floor referenced to the stack-free channel, so the
            # stack's aperture gain shows up in the sweep comparisons.
            "noise_reference": "baseline",
        },
        "tx_sim": {"layers": 2, "grid_dims": [4, 4]},
        "rx_sim": {"layers": 2, "grid_dims": [4, 4]},
        "targets": [
            {"range_m": 3 * SPEED_OF_LIGHT / fs,
             "velocity_mps": -nu_max * SPEED_OF_LIGHT / fc},
            {"range_m": 7 * SPEED_OF_LIGHT / fs,
             "velocity_mps": nu_max * SPEED_OF_LIGHT / fc},
        ],
        "grid": {"delay_bins": 16, "doppler_bins": 16, "nu_max_hz": nu_max,
                 "mode": "on_grid"},
    }
    if seed is not None:
        data["seed"] = seed
    return scenario_from_dict(data)
