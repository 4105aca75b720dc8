"""Autonomous electron-shuttle heat engine simulator.

A single-electron shuttle oscillating in a half-harmonic potential between
two leads: Johnson noise from the hot lead drives the charged shuttle, the
hard wall rectifies the noise into net displacement, and the electron
occupation itself switches the coupling to the hot bath.  The package builds
the truncated half-harmonic operator algebra, integrates the unconditional
Lindblad master equation and its quantum-jump unravelling, decomposes the
oscillator energy flux into hot-bath / cold-bath / controller parts, and
provides stochastic-resonance and work/power diagnostics.
"""

__version__ = "0.1.0"

from .analysis import (force_operator, gaussian_fit, peak_frequency, phase_histogram,
                       power_series, power_spectrum, spectrum_of_records)
from .basis import Basis, build_exp_position, build_hamiltonian, build_ladder, \
    build_momentum, build_position, commutator_residuals, hermite_psi
from .config import RunConfig, load_config
from .master import (EvolutionResult, FluxBreakdown, evolve, flux_breakdown,
                     lindblad_apply, steady_state)
from .model import EngineParams, OperatorSet, build_operator_set, compose, fermi
from .trajectories import (Ensemble, TrajectoryRecord, jump_probabilities,
                           run_ensemble, run_trajectory, sme_step)

__all__ = [
    "Basis", "EngineParams", "Ensemble", "EvolutionResult", "FluxBreakdown",
    "OperatorSet", "RunConfig", "TrajectoryRecord",
    "build_exp_position", "build_hamiltonian", "build_ladder", "build_momentum",
    "build_operator_set", "build_position", "commutator_residuals", "compose",
    "evolve", "fermi", "flux_breakdown", "force_operator", "gaussian_fit",
    "hermite_psi", "jump_probabilities", "lindblad_apply", "load_config",
    "peak_frequency", "phase_histogram", "power_series", "power_spectrum",
    "run_ensemble", "run_trajectory", "sme_step", "spectrum_of_records",
    "steady_state",
]
