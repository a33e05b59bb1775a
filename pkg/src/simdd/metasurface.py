"""Multi-layer programmable metasurface stacks.

Models the transmit and receive stacks as cascades of per-layer phase
shifts coupled by free-space diffraction between adjacent layers, plus the
outer-layer spatial correlation induced by sub-wavelength atom spacing and
the planar-array steering vectors toward a path's departure/arrival angles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .scenario import SimGeometrySpec


def atom_positions(geom: SimGeometrySpec, layer: int) -> np.ndarray:
    """3-D positions of a layer's atoms, shape (M, 3).

    Layers are stacked along y at multiples of the layer spacing, with the
    antenna plane at y = 0; atoms form a centered M_x x M_z grid in x-z,
    flattened row-major over (ix, iz).
    """
    mx, mz = geom.grid_dims
    ix, iz = np.meshgrid(np.arange(mx), np.arange(mz), indexing="ij")
    x = (ix.ravel() - (mx - 1) / 2.0) * geom.atom_spacing_m
    z = (iz.ravel() - (mz - 1) / 2.0) * geom.atom_spacing_m
    y = np.full(mx * mz, layer * geom.layer_spacing_m)
    return np.column_stack([x, y, z])


def _antenna_position(geom: SimGeometrySpec) -> np.ndarray:
    return np.zeros((1, 3))


def _coupling(dst: np.ndarray, src: np.ndarray, atom_area: float,
              wavelength: float) -> np.ndarray:
    """Free-space diffraction coefficients between two point sets.

    Entry (m, m') covers the secondary-source radiation from src point m'
    to dst point m: (A cos(chi) / d) (1 / (2 pi d) - j / lambda) e^{2j pi d / lambda}
    with d the Euclidean distance and chi the angle off the layer normal.
    """
    diff = dst[:, None, :] - src[None, :, :]
    d = np.sqrt(np.sum(diff ** 2, axis=-1))
    if np.any(d <= 0):
        raise ValueError("coincident points: zero propagation distance")
    cos_chi = np.abs(diff[:, :, 1]) / d
    radial = 1.0 / (2.0 * np.pi * d) - 1j / wavelength
    return (atom_area * cos_chi / d) * radial * np.exp(2j * np.pi * d / wavelength)


def diffraction_operator(geom: SimGeometrySpec, wavelength: float,
                         source_layer: int, dest_layer: int) -> np.ndarray:
    """Diffraction matrix between adjacent planes, shape (n_dest, n_source).

    Plane 0 is the antenna (feed on the transmit side, pickup on the receive
    side); planes 1..layers hold the atom grids. Only adjacent planes couple.
    """
    for plane in (source_layer, dest_layer):
        if not (0 <= plane <= geom.layers):
            raise ValueError(f"plane {plane} outside [0, {geom.layers}]")
    if abs(source_layer - dest_layer) != 1:
        raise ValueError(f"planes {source_layer} and {dest_layer} are not adjacent")
    src = _antenna_position(geom) if source_layer == 0 else atom_positions(geom, source_layer)
    dst = _antenna_position(geom) if dest_layer == 0 else atom_positions(geom, dest_layer)
    return _coupling(dst, src, geom.atom_area_m2, wavelength)


def phase_matrix(zeta: np.ndarray) -> np.ndarray:
    """Diagonal unit-modulus matrix diag(exp(j zeta))."""
    zeta = np.asarray(zeta, dtype=float)
    if not np.all(np.isfinite(zeta)):
        raise ValueError("phases must be finite")
    return np.diag(np.exp(1j * zeta))


def build_couplings(geom: SimGeometrySpec, wavelength: float) -> list[np.ndarray]:
    """All adjacent-plane diffraction matrices of a stack, innermost first.

    Transmit stacks run outward (feed -> layer 1 -> ... -> layer Q); receive
    stacks run inward (layer q+1 -> layer q, layer 1 -> pickup antenna).
    """
    if geom.role == "transmit":
        return [diffraction_operator(geom, wavelength, q, q + 1)
                for q in range(geom.layers)]
    return [diffraction_operator(geom, wavelength, q + 1, q)
            for q in range(geom.layers)]


class SimStack:
    """One metasurface stack: geometry, per-layer phases and cached couplings.

    Phases are only ever rewritten through set_phases (the optimizer's entry
    point); everything else reads the stack, so instances are safe to share
    across read-parallel trials.
    """

    def __init__(self, geometry: SimGeometrySpec, wavelength: float,
                 phases: Optional[Sequence[np.ndarray]] = None,
                 couplings: Optional[Sequence[np.ndarray]] = None):
        self.geometry = geometry
        self.wavelength = wavelength
        m = geometry.meta_atoms
        if couplings is None:
            couplings = build_couplings(geometry, wavelength)
        couplings = [np.asarray(c, dtype=complex) for c in couplings]
        if len(couplings) != geometry.layers:
            raise ValueError(f"expected {geometry.layers} coupling matrices")
        first_shape = (m, 1) if geometry.role == "transmit" else (1, m)
        if couplings[0].shape != first_shape:
            raise ValueError(f"antenna coupling must have shape {first_shape}")
        for c in couplings[1:]:
            if c.shape != (m, m):
                raise ValueError(f"inter-layer couplings must have shape ({m}, {m})")
        self.couplings = couplings
        if phases is None:
            phases = [np.zeros(m) for _ in range(geometry.layers)]
        self._phases = [np.array(p, dtype=float) for p in phases]
        self._check_phases(self._phases)

    @property
    def role(self) -> str:
        return self.geometry.role

    @property
    def num_layers(self) -> int:
        return self.geometry.layers

    @property
    def meta_atoms(self) -> int:
        return self.geometry.meta_atoms

    @property
    def phases(self) -> list[np.ndarray]:
        return [p.copy() for p in self._phases]

    def phase_vector(self, layer: int) -> np.ndarray:
        return self._phases[layer].copy()

    def set_phases(self, phases: Sequence[np.ndarray]) -> None:
        phases = [np.array(p, dtype=float) for p in phases]
        self._check_phases(phases)
        self._phases = phases

    def _check_phases(self, phases: Sequence[np.ndarray]) -> None:
        if len(phases) != self.geometry.layers:
            raise ValueError(f"expected {self.geometry.layers} phase vectors")
        for p in phases:
            if p.shape != (self.geometry.meta_atoms,):
                raise ValueError("phase vector length must match the atom count")
            if not np.all(np.isfinite(p)):
                raise ValueError("phases must be finite")

    def layer_phase_factors(self, layer: int) -> np.ndarray:
        return np.exp(1j * self._phases[layer])


def random_phases(stack_or_geom, rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform phases on (-pi, pi] for every layer of a stack."""
    geom = stack_or_geom.geometry if isinstance(stack_or_geom, SimStack) else stack_or_geom
    m = geom.meta_atoms
    return [np.pi - rng.uniform(0.0, 2.0 * np.pi, size=m) for _ in range(geom.layers)]


def tx_transfer(stack: SimStack) -> np.ndarray:
    """End-to-end transmit-stack response (length-M vector).

    Feed coupling first, then alternating phase/diffraction factors with the
    outermost layer's phases applied last.
    """
    if stack.role != "transmit":
        raise ValueError("tx_transfer requires a transmit stack")
    v = stack.couplings[0][:, 0].copy()
    v *= stack.layer_phase_factors(0)
    for q in range(1, stack.num_layers):
        v = stack.couplings[q] @ v
        v *= stack.layer_phase_factors(q)
    return v


def rx_transfer(stack: SimStack) -> np.ndarray:
    """End-to-end receive-stack response (length-M row vector).

    The field impinges on the outermost layer, is phase shifted and
    diffracted inward layer by layer, and finally couples into the antenna.
    """
    if stack.role != "receive":
        raise ValueError("rx_transfer requires a receive stack")
    u = stack.couplings[0][0, :].copy()
    u *= stack.layer_phase_factors(0)
    for q in range(1, stack.num_layers):
        u = u @ stack.couplings[q]
        u *= stack.layer_phase_factors(q)
    return u


@dataclass(frozen=True)
class CorrelationOperator:
    """Outer-layer spatial correlation and its principal square root."""

    matrix: np.ndarray
    sqrt: np.ndarray
    min_eigenvalue: float
    clamp_error: float   # Frobenius perturbation introduced by clamping


def correlation_operator(geom: SimGeometrySpec, wavelength: float) -> CorrelationOperator:
    """sinc-profile correlation across the outermost layer's atoms.

    Entry (m, m') = sinc(2 d / lambda) with d the in-plane atom distance.
    The square root comes from a symmetric eigendecomposition with negative
    eigenvalues clamped to zero, which keeps the operator positive
    semidefinite against numerical indefiniteness.
    """
    pts = atom_positions(geom, 1)
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.sum(diff ** 2, axis=-1))
    r = np.sinc(2.0 * d / wavelength)   # np.sinc(x) = sin(pi x) / (pi x)
    eigvals, eigvecs = np.linalg.eigh(r)
    clamped = np.clip(eigvals, 0.0, None)
    sqrt = (eigvecs * np.sqrt(clamped)) @ eigvecs.T
    r_clamped = (eigvecs * clamped) @ eigvecs.T
    return CorrelationOperator(
        matrix=r,
        sqrt=sqrt,
        min_eigenvalue=float(eigvals.min()),
        clamp_error=float(np.linalg.norm(r - r_clamped)),
    )


@dataclass(frozen=True)
class SteeringVector:
    """Planar-array response toward (azimuth, elevation)."""

    vector: np.ndarray
    azimuth_rad: float
    elevation_rad: float


def upa_steering(azimuth: float, elevation: float, m_x: int, m_z: int,
                 spacing: float, wavelength: float) -> SteeringVector:
    """Unit-modulus steering vector of an M_x x M_z planar array.

    Entry for grid index (ix, iz), flattened row-major, is
    exp(j (2 pi / lambda) spacing (ix sin(el) cos(az) + iz cos(el))).
    """
    if not (np.isfinite(azimuth) and np.isfinite(elevation)):
        raise ValueError("angles must be finite")
    ix, iz = np.meshgrid(np.arange(m_x), np.arange(m_z), indexing="ij")
    phase = (2.0 * np.pi / wavelength) * spacing * (
        ix.ravel() * np.sin(elevation) * np.cos(azimuth) + iz.ravel() * np.cos(elevation))
    return SteeringVector(vector=np.exp(1j * phase),
                          azimuth_rad=float(azimuth), elevation_rad=float(elevation))


def export_matrix_csv(path: str, matrix: np.ndarray) -> None:
    """Dump a complex matrix as CSV rows of (row, col, real, imag)."""
    matrix = np.atleast_2d(np.asarray(matrix))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["row", "col", "real", "imag"])
        for i in range(matrix.shape[0]):
            for j in range(matrix.shape[1]):
                value = complex(matrix[i, j])
                writer.writerow([i, j, repr(value.real), repr(value.imag)])
