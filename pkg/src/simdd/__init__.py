"""Stacked-metasurface doubly-dispersive channel toolkit.

Library + CLI covering three delay-Doppler waveforms (OFDM, OTFS, AFDM)
over a channel whose per-path gains are parametrized by transmit and
receive metasurface stacks, greedy min-max phase optimization of those
stacks, and sparse-recovery estimation of target range and velocity.
"""

from .scenario import (GridSpec, OptimizerConfig, PdaConfig, ScenarioError,
                       ScenarioSpec, SimGeometrySpec, SystemParams, TargetTruth,
                       default_scenario, denormalize_target, load_scenario,
                       normalize_target, seeded_rng)
from .waveforms import (WaveformKind, apply_path_response, effective_path_matrix,
                        time_domain_oracle)
from .metasurface import (CorrelationOperator, SimStack, correlation_operator,
                          diffraction_operator, phase_matrix, rx_transfer,
                          tx_transfer, upa_steering)
from .channel import (EffectiveChannel, Path, PathSet, apply_channel,
                      effective_gain, effective_gains, end_to_end, sample_paths)
from .optimizer import (ObjectiveTrace, ascent_step, fd_gradient_oracle,
                        gradient_bundle, optimize, path_objective,
                        rx_subgradient, tx_subgradient, weakest_path)
from .estimator import (DelayDopplerDictionary, Estimate, SparseChannelEstimate,
                        build_dictionary, estimation_rmse, extract_parameters,
                        matched_filter_oracle, pda_init, pda_iteration,
                        resolution_floor, run_pda)
from .detector import DetectionResult, detect, lmmse_equalize, qpsk_demap, qpsk_map

__version__ = "0.1.0"
