"""Per-path effective channel matrices for OFDM, OTFS and AFDM.

Each propagation path acts on a transmitted frame as a unitary N x N matrix
composed of delay, Doppler, prefix-correction and (de)modulation factors.
A brute-force time-domain simulator with explicit prefix insertion/removal
serves as the independent oracle that pins down every sign and offset
convention used by the matrix model.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .scenario import SystemParams


class WaveformKind(enum.Enum):
    OFDM = "ofdm"
    OTFS = "otfs"
    AFDM = "afdm"


ALL_WAVEFORMS = (WaveformKind.OFDM, WaveformKind.OTFS, WaveformKind.AFDM)


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix, entry (m, k) = exp(-2j pi m k / n) / sqrt(n)."""
    if n < 1:
        raise ValueError("matrix size must be >= 1")
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def delay_matrix(n: int, ell: int) -> np.ndarray:
    """Cyclic delay by ell samples: output[k] = input[(k - ell) mod n]."""
    _check_delay(n, ell)
    return np.roll(np.eye(n), ell, axis=0)


def doppler_matrix(n: int, f: float) -> np.ndarray:
    """Diagonal Doppler progression diag(exp(-2j pi f k / n)), k = 0..n-1."""
    k = np.arange(n)
    return np.diag(np.exp(-2j * np.pi * f * k / n))


def chirp_matrix(n: int, c: float) -> np.ndarray:
    """Diagonal quadratic chirp diag(exp(-2j pi c k^2)), k = 0..n-1."""
    k = np.arange(n)
    return np.diag(np.exp(-2j * np.pi * c * k * k))


def cpp_matrix(n: int, c1: float, ell: int) -> np.ndarray:
    """Residual phase left by stripping a chirp-periodic prefix.

    Samples that wrap around under a delay of ell pick up the chirp's
    frame-extension phase exp(-2j pi c1 (n^2 + 2 n (k - ell))) for k < ell;
    the rest are untouched. With c1 = 0 this is the identity, i.e. a plain
    cyclic prefix.
    """
    _check_delay(n, ell)
    k = np.arange(n)
    phases = np.where(k < ell, np.exp(-2j * np.pi * c1 * (n * n + 2.0 * n * (k - ell))), 1.0)
    return np.diag(phases.astype(complex))


def _check_delay(n: int, ell: int) -> None:
    if not (0 <= ell < n):
        raise ValueError(f"delay {ell} outside [0, {n})")


@dataclass(frozen=True)
class EffectivePathMatrix:
    """Unitary per-path response of one waveform to (delay, Doppler)."""

    matrix: np.ndarray
    delay_samples: int
    doppler_cycles: float
    kind: WaveformKind


def _otfs_factors(sys: SystemParams) -> tuple[int, int]:
    n1, n2 = sys.otfs_factors
    if n1 * n2 != sys.subcarrier_count:
        raise ValueError(
            f"otfs_factors {n1} x {n2} do not factor frame length {sys.subcarrier_count}")
    return n1, n2


def effective_path_matrix(kind: WaveformKind, sys: SystemParams,
                          ell: int, f: float) -> EffectivePathMatrix:
    """Dense N x N response of one path under the chosen waveform.

    ell is the integer delay in samples, f the Doppler in cycles per frame.
    """
    n = sys.subcarrier_count
    _check_delay(n, ell)
    core = doppler_matrix(n, f) @ delay_matrix(n, ell)
    if kind is WaveformKind.OFDM:
        fn = dft_matrix(n)
        g = fn @ core @ fn.conj().T
    elif kind is WaveformKind.OTFS:
        n1, n2 = _otfs_factors(sys)
        a = np.kron(dft_matrix(n1), np.eye(n2))
        g = a @ core @ a.conj().T
    elif kind is WaveformKind.AFDM:
        fn = dft_matrix(n)
        lam1 = chirp_matrix(n, sys.chirp_rate_1)
        lam2 = chirp_matrix(n, sys.chirp_rate_2)
        theta = cpp_matrix(n, sys.chirp_rate_1, ell)
        a = lam2 @ fn @ lam1
        g = a @ theta @ core @ a.conj().T
    else:
        raise ValueError(f"unknown waveform kind {kind!r}")
    return EffectivePathMatrix(matrix=g, delay_samples=ell, doppler_cycles=f, kind=kind)


# ---------------------------------------------------------------------------
# Fast transform application (contract-identical to the dense matrices)

def _to_time_domain(kind: WaveformKind, sys: SystemParams, x: np.ndarray) -> np.ndarray:
    n = sys.subcarrier_count
    if kind is WaveformKind.OFDM:
        return np.fft.ifft(x, norm="ortho")
    if kind is WaveformKind.OTFS:
        n1, n2 = _otfs_factors(sys)
        return np.fft.ifft(x.reshape(n1, n2), axis=0, norm="ortho").ravel()
    if kind is WaveformKind.AFDM:
        k = np.arange(n)
        c1, c2 = sys.chirp_rate_1, sys.chirp_rate_2
        t = np.exp(2j * np.pi * c2 * k * k) * x
        t = np.fft.ifft(t, norm="ortho")
        return np.exp(2j * np.pi * c1 * k * k) * t
    raise ValueError(f"unknown waveform kind {kind!r}")


def _from_time_domain(kind: WaveformKind, sys: SystemParams, s: np.ndarray) -> np.ndarray:
    n = sys.subcarrier_count
    if kind is WaveformKind.OFDM:
        return np.fft.fft(s, norm="ortho")
    if kind is WaveformKind.OTFS:
        n1, n2 = _otfs_factors(sys)
        return np.fft.fft(s.reshape(n1, n2), axis=0, norm="ortho").ravel()
    if kind is WaveformKind.AFDM:
        k = np.arange(n)
        c1, c2 = sys.chirp_rate_1, sys.chirp_rate_2
        t = np.exp(-2j * np.pi * c1 * k * k) * s
        t = np.fft.fft(t, norm="ortho")
        return np.exp(-2j * np.pi * c2 * k * k) * t
    raise ValueError(f"unknown waveform kind {kind!r}")


def apply_path_response(kind: WaveformKind, sys: SystemParams,
                        ell: int, f: float, x: np.ndarray) -> np.ndarray:
    """Apply one path's effective matrix to a frame without materializing it."""
    n = sys.subcarrier_count
    _check_delay(n, ell)
    s = _to_time_domain(kind, sys, np.asarray(x, dtype=complex))
    s = np.roll(s, ell)
    k = np.arange(n)
    s = np.exp(-2j * np.pi * f * k / n) * s
    if kind is WaveformKind.AFDM and ell > 0:
        c1 = sys.chirp_rate_1
        wrap = k < ell
        s[wrap] *= np.exp(-2j * np.pi * c1 * (n * n + 2.0 * n * (k[wrap] - ell)))
    return _from_time_domain(kind, sys, s)


# ---------------------------------------------------------------------------
# Time-domain oracle

def time_domain_oracle(kind: WaveformKind, sys: SystemParams,
                       paths: Sequence[tuple[complex, int, float]],
                       x: np.ndarray,
                       prefix_len: Optional[int] = None) -> np.ndarray:
    """Brute-force noiseless received frame for a multipath channel.

    The frame is inverse-transformed to the time domain, extended with a
    cyclic (OFDM/OTFS) or chirp-periodic (AFDM) prefix, passed through
    y[k] = sum_p gain_p * exp(-2j pi f_p k / N) * s[k - ell_p] sample by
    sample, stripped of its prefix and transformed back. Doppler phase is
    referenced to the first post-prefix sample.

    paths: iterable of (gain, delay_samples, doppler_cycles) with integer
    delays. prefix_len defaults to the largest delay and must not be shorter.
    """
    n = sys.subcarrier_count
    x = np.asarray(x, dtype=complex)
    if x.shape != (n,):
        raise ValueError(f"frame must have shape ({n},)")
    delays = [int(p[1]) for p in paths]
    for ell in delays:
        _check_delay(n, ell)
    max_delay = max(delays, default=0)
    if prefix_len is None:
        prefix_len = max_delay
    if prefix_len < max_delay:
        raise ValueError(f"prefix of {prefix_len} samples is shorter than the "
                         f"largest delay {max_delay}")

    s = _to_time_domain(kind, sys, x)
    c1 = sys.chirp_rate_1 if kind is WaveformKind.AFDM else 0.0
    # Prefix sample at slot t in [-L, 0) replicates s[n + t] with the chirp
    # frame-extension phase (unity for a plain cyclic prefix).
    t_pre = np.arange(-prefix_len, 0)
    prefix = s[n + t_pre] * np.exp(-2j * np.pi * c1 * (n * n + 2.0 * n * t_pre))
    s_ext = np.concatenate([prefix, s])

    k = np.arange(n)
    received = np.zeros(n, dtype=complex)
    for gain, ell, f in paths:
        ell = int(ell)
        delayed = s_ext[k + prefix_len - ell]
        received += gain * np.exp(-2j * np.pi * f * k / n) * delayed
    return _from_time_domain(kind, sys, received)
