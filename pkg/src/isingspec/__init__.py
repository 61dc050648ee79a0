"""Trotterized quench simulation and meson spectroscopy for the mixed-field Ising chain."""

from .model import (
    AXES,
    ModelParams,
    PauliTerm,
    QuenchPlan,
    ValidationReport,
    hamiltonian_terms,
    validate,
)
from .statevec import (
    Gate,
    StateVector,
    apply_gate,
    energy_expectation,
    exact_evolve,
    expectation,
    init_all_plus,
    sample_counts,
)
from .trotter import QuenchRecord, TrotterStep, build_step, decompose_to_native, run_quench
from .edsolver import (
    EnergyLevels,
    SectorBasis,
    assemble_sector_hamiltonian,
    build_zero_momentum_basis,
    eigensolve,
    free_fermion_oracle,
    solve_sector,
)
from .noise import NoiseParams, apply_gate_noise, apply_readout_error, calibrate_readout, trex_mitigate
from .obs import CorrelatorField, connected_xx, lightcone_front
from .spectro import (
    EtaPoint,
    PeakSet,
    Spectrum,
    TimeSeries,
    eta,
    eta_sweep,
    find_peaks,
    match_peaks,
    power_spectrum,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
