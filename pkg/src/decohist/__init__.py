"""Decoherent-history entropy diagnostics for an open quantum kicked top.

A spin-j kicked top is coupled through Jy to a bosonic bath in chain
representation.  The one-particle interaction wavefunction defines a
light cone of environment modes; modes that irreversibly decouple store
records of the system's motion, and sampling those records by recursive
Schmidt decomposition yields an ensemble of quantum-jump histories whose
entropy production discriminates integrable from chaotic dynamics.
"""

__version__ = "0.1.0"

from .spin import SpinSector, KickedTopParams, SpectrumStats
from .spin import build_spin_sector, floquet_operator, quasienergy_spacings
from .chain import SpectralDensity, ChainSpec
from .chain import uniform_chain, chain_from_spectral_density, chain_moments
from .chain import auto_chain_length
from .lightcone import OneParticleTrajectory, WindowedDensity, LightConeSchedule
from .lightcone import propagate_one_particle, instant_otoc, accumulate_windows
from .lightcone import coupled_mode_schedule, decoupled_mode_schedule, build_schedule
from .lightcone import default_checkpoints
from .fock import FockBasis
from .engine import JointState, EngineConfig
from .engine import init_joint, effective_hamiltonian, evolve_to, attach_mode, expectation
from .histories import JumpRecord, History, EnsembleStats
from .histories import schmidt_split, sample_jump, collapse, delta_entropy
from .histories import run_trajectory, run_ensemble, ensemble_stats
from .errors import DecohistError, ConfigError, NumericalError
from .errors import ChainTooShortError, CapLeakageError

__all__ = [
    "SpinSector", "KickedTopParams", "SpectrumStats",
    "build_spin_sector", "floquet_operator", "quasienergy_spacings",
    "SpectralDensity", "ChainSpec",
    "uniform_chain", "chain_from_spectral_density", "chain_moments",
    "auto_chain_length",
    "OneParticleTrajectory", "WindowedDensity", "LightConeSchedule",
    "propagate_one_particle", "instant_otoc", "accumulate_windows",
    "coupled_mode_schedule", "decoupled_mode_schedule", "build_schedule",
    "default_checkpoints",
    "FockBasis",
    "JointState", "EngineConfig",
    "init_joint", "effective_hamiltonian", "evolve_to", "attach_mode", "expectation",
    "JumpRecord", "History", "EnsembleStats",
    "schmidt_split", "sample_jump", "collapse", "delta_entropy",
    "run_trajectory", "run_ensemble", "ensemble_stats",
    "DecohistError", "ConfigError", "NumericalError",
    "ChainTooShortError", "CapLeakageError",
]
