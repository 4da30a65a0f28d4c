"""Spin-mechanics toolkit for an NV-center ensemble on a cantilever.

Forward models (spin eigenstates, torques, driven population dynamics,
cantilever response, lock-in quadratures) and inverse fits (field from an
ODMR dip pair, number of polarized spins from torque curves).
"""

from .nvcore import (
    EigenSolution,
    NvParams,
    StaticField,
    TransitionPair,
    build_hamiltonian,
    driven_torque_change,
    eigensolve,
    eigenstate_torques,
    odmr_spectrum,
    solve_eigensystem,
    transition_frequencies,
)
from .trace import SignalTrace

__version__ = "0.1.0"

__all__ = [
    "EigenSolution",
    "NvParams",
    "SignalTrace",
    "StaticField",
    "TransitionPair",
    "build_hamiltonian",
    "driven_torque_change",
    "eigensolve",
    "eigenstate_torques",
    "odmr_spectrum",
    "solve_eigensystem",
    "transition_frequencies",
]
