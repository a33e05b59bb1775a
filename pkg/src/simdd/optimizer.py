"""Greedy min-max phase optimization of the metasurface stacks.

Repeatedly targets the path with the weakest effective gain and runs
normalized steepest-ascent steps on every layer's phases, using closed-form
gradients of the squared gain magnitude. A finite-difference oracle verifies
the closed forms and is the binding arbiter of their correctness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import Path, PathSet, _stack_correlation, gain_prefactor
from .metasurface import SimStack, rx_transfer, tx_transfer
from .scenario import OptimizerConfig


def wrap_phases(zeta: np.ndarray, policy: str = "wrap") -> np.ndarray:
    """Map phases back into (-pi, pi], either by wrapping or clipping."""
    if policy == "clip":
        return np.clip(zeta, -np.pi, np.pi)
    wrapped = np.mod(zeta + np.pi, 2.0 * np.pi) - np.pi
    wrapped[wrapped == -np.pi] = np.pi
    return wrapped


def _chain_scalars(path: Path, tx: SimStack, rx: SimStack, total_paths: int):
    """Shared pieces of the per-path gain: transfers, correlation roots and
    the amplified path amplitude."""
    v = tx_transfer(tx)
    u = rx_transfer(rx)
    tx_sqrt = _stack_correlation(tx).sqrt
    rx_sqrt = _stack_correlation(rx).sqrt
    amplified = path.gain * gain_prefactor(tx.meta_atoms, rx.meta_atoms, total_paths)
    return u, v, tx_sqrt, rx_sqrt, amplified


def path_objective(path: Path, tx: SimStack, rx: SimStack,
                   total_paths: int) -> float:
    """Squared magnitude of the path's stack-parametrized gain."""
    u, v, tx_sqrt, rx_sqrt, amplified = _chain_scalars(path, tx, rx, total_paths)
    arrive = u @ rx_sqrt @ path.steering_rx
    depart = path.steering_tx.conj() @ tx_sqrt @ v
    return float(np.abs(amplified * arrive * depart) ** 2)


def weakest_path(tx: SimStack, rx: SimStack, pathset: PathSet) -> int:
    """Index of the path with the smallest objective; ties pick the lowest."""
    objectives = [path_objective(p, tx, rx, len(pathset)) for p in pathset.paths]
    return int(np.argmin(objectives))


@dataclass
class GradientBundle:
    """Per-layer phase gradients of one path's objective."""

    tx: list[np.ndarray]
    rx: list[np.ndarray]
    objective: float


def gradient_bundle(path: Path, tx: SimStack, rx: SimStack,
                    total_paths: int) -> GradientBundle:
    """Closed-form gradients for every layer of both stacks.

    Splitting the transmit response as (back product) (layer phases)
    (front product) makes the derivative of the gain with respect to one
    phase a product of three cached factors, and likewise on the receive
    side; each gradient entry is then -2 Im{conj(gain) * backward * phase
    * forward} at that atom.
    """
    u, v, tx_sqrt, rx_sqrt, amplified = _chain_scalars(path, tx, rx, total_paths)
    arrive = u @ rx_sqrt @ path.steering_rx
    depart = path.steering_tx.conj() @ tx_sqrt @ v
    gain = amplified * arrive * depart

    # Transmit side: row r such that r @ v is the full gain.
    r = amplified * arrive * (path.steering_tx.conj() @ tx_sqrt)
    q_tx = tx.num_layers
    fronts = [None] * q_tx
    fronts[0] = tx.couplings[0][:, 0]
    for q in range(1, q_tx):
        mid = tx.layer_phase_factors(q - 1) * fronts[q - 1]
        fronts[q] = tx.couplings[q] @ mid
    backs = [None] * q_tx
    backs[q_tx - 1] = r
    for q in range(q_tx - 2, -1, -1):
        backs[q] = (backs[q + 1] * tx.layer_phase_factors(q + 1)) @ tx.couplings[q + 1]
    tx_grads = [
        -2.0 * np.imag(np.conj(gain) * backs[q] * tx.layer_phase_factors(q) * fronts[q])
        for q in range(q_tx)
    ]

    # Receive side: column c such that u @ c is the full gain.
    c = amplified * depart * (rx_sqrt @ path.steering_rx)
    q_rx = rx.num_layers
    rows = [None] * q_rx
    rows[0] = rx.couplings[0][0, :]
    for q in range(1, q_rx):
        rows[q] = (rows[q - 1] * rx.layer_phase_factors(q - 1)) @ rx.couplings[q]
    tails = [None] * q_rx
    tails[q_rx - 1] = c
    for q in range(q_rx - 2, -1, -1):
        tails[q] = rx.couplings[q + 1] @ (rx.layer_phase_factors(q + 1) * tails[q + 1])
    rx_grads = [
        -2.0 * np.imag(np.conj(gain) * rows[q] * rx.layer_phase_factors(q) * tails[q])
        for q in range(q_rx)
    ]

    return GradientBundle(tx=tx_grads, rx=rx_grads, objective=float(np.abs(gain) ** 2))


def tx_subgradient(layer: int, path: Path, tx: SimStack, rx: SimStack,
                   total_paths: int) -> np.ndarray:
    if not (0 <= layer < tx.num_layers):
        raise ValueError(f"transmit layer {layer} outside [0, {tx.num_layers})")
    return gradient_bundle(path, tx, rx, total_paths).tx[layer]


def rx_subgradient(layer: int, path: Path, tx: SimStack, rx: SimStack,
                   total_paths: int) -> np.ndarray:
    if not (0 <= layer < rx.num_layers):
        raise ValueError(f"receive layer {layer} outside [0, {rx.num_layers})")
    return gradient_bundle(path, tx, rx, total_paths).rx[layer]


def fd_gradient_oracle(side: str, layer: int, atom: int, path: Path,
                       tx: SimStack, rx: SimStack, total_paths: int,
                       step: float = 1e-5) -> float:
    """Central finite difference of the objective along one phase coordinate."""
    if step <= 0:
        raise ValueError("step must be positive")
    stack = tx if side == "tx" else rx
    saved = stack.phases

    def with_offset(delta: float) -> float:
        phases = [p.copy() for p in saved]
        phases[layer][atom] += delta
        stack.set_phases(phases)
        return path_objective(path, tx, rx, total_paths)

    try:
        upper = with_offset(step)
        lower = with_offset(-step)
    finally:
        stack.set_phases(saved)
    return (upper - lower) / (2.0 * step)


def ascent_step(tx: SimStack, rx: SimStack, path: Path, iteration: int,
                config: OptimizerConfig, total_paths: int) -> bool:
    """One normalized steepest-ascent step on every layer of both stacks.

    Step sizes are scaled so the largest phase increment equals the decayed
    learning rate times pi. Returns True (and leaves the stacks untouched)
    when every gradient entry vanishes.
    """
    bundle = gradient_bundle(path, tx, rx, total_paths)
    rate = config.initial_rate * config.decay ** iteration
    tx_peak = max((float(np.max(np.abs(g))) for g in bundle.tx), default=0.0)
    rx_peak = max((float(np.max(np.abs(g))) for g in bundle.rx), default=0.0)
    if tx_peak == 0.0 and rx_peak == 0.0:
        return True
    if tx_peak > 0.0:
        scale = rate * np.pi / tx_peak
        tx.set_phases([
            wrap_phases(tx.phase_vector(q) + scale * bundle.tx[q], config.phase_wrap)
            for q in range(tx.num_layers)
        ])
    if rx_peak > 0.0:
        scale = rate * np.pi / rx_peak
        rx.set_phases([
            wrap_phases(rx.phase_vector(q) + scale * bundle.rx[q], config.phase_wrap)
            for q in range(rx.num_layers)
        ])
    return False


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    sweep: int
    targeted_path: int
    objectives: tuple[float, ...]


@dataclass
class ObjectiveTrace:
    """Iteration history of a min-max optimization run."""

    rows: list[TraceRow]
    converged: bool
    iterations: int
    target_switches: int

    @property
    def initial_objectives(self) -> tuple[float, ...]:
        return self.rows[0].objectives

    @property
    def final_objectives(self) -> tuple[float, ...]:
        return self.rows[-1].objectives


def optimize(tx: SimStack, rx: SimStack, pathset: PathSet,
             config: OptimizerConfig,
             sweeps: Optional[int] = None) -> ObjectiveTrace:
    """Greedy min-max ascent on the stacks' phases, in place.

    The weakest path is re-targeted every `reselect_every` iterations
    (every iteration by default, which seesaws between paths and anneals
    them toward balance; a value of inner_iterations locks each target in
    for a whole sweep). The iteration budget is sweeps * inner_iterations
    with a single decaying rate schedule across the run; the loop ends
    early once the weakest path's objective stalls in relative terms.
    """
    total = len(pathset)
    if sweeps is None:
        sweeps = config.outer_sweeps if config.outer_sweeps is not None else total + 1
    budget = sweeps * config.inner_iterations

    def objectives() -> tuple[float, ...]:
        return tuple(path_objective(p, tx, rx, total) for p in pathset.paths)

    switches = 0
    segment = 0
    converged = False
    target = weakest_path(tx, rx, pathset)
    current = objectives()
    rows = [TraceRow(0, 0, target, current)]
    floor = min(current)

    for iteration in range(1, budget + 1):
        if (iteration - 1) % config.reselect_every == 0:
            refreshed = weakest_path(tx, rx, pathset)
            if refreshed != target:
                switches += 1
                segment += 1
                target = refreshed
        stalled = ascent_step(tx, rx, pathset.paths[target], iteration - 1,
                              config, total)
        current = objectives()
        rows.append(TraceRow(iteration, segment, target, current))
        new_floor = min(current)
        change = abs(new_floor - floor) / max(abs(floor), 1e-300)
        floor = new_floor
        if stalled or change < config.tolerance:
            converged = True
            break

    return ObjectiveTrace(rows=rows, converged=converged,
                          iterations=rows[-1].iteration,
                          target_switches=switches)
