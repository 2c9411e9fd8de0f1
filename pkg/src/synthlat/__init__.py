"""synthlat: synthetic lattices of parametrically coupled bosonic modes.

Predicts multi-port scattering of a programmable coupling graph, checks the
topological signatures of the bosonic Creutz ladder, and reconstructs lattice
parameters from scattering traces with a two-stage global least-squares fit.
"""

from .creutz import (
    CreutzParams,
    band_structure,
    basis_state,
    bloch_hamiltonian,
    caging_check,
    check_symmetry,
    chi_state,
    evolve_state,
    plaquette_hamiltonian,
    position_expectation,
    real_space_hamiltonian,
    time_averaged_position,
    wannier_center,
    wannier_state,
    zak_phase,
    zero_mode_state,
)
from .errors import (
    DegenerateBackgroundError,
    DegenerateBandError,
    FitError,
    RankDeficiencyError,
    SingularMatrixError,
    SynthlatError,
    TraceParseError,
)
from .fitting import (
    FitParams,
    FitResult,
    GlobalFitResult,
    assemble_residuals,
    damped_least_squares,
    fit_global,
    fit_report_dict,
    model_magnitude,
    model_trace_values,
    pairwise_fit,
    stage1_free_mask,
)
from .lattice import (
    CouplingSpec,
    LatticeSpec,
    ModeParams,
    beta_from_g,
    build_coupling_matrix,
    lattice_from_dict,
    lattice_to_dict,
    load_lattice,
    normalized_detuning,
    save_lattice,
)
from .scattering import (
    ScatteringMatrix,
    SweepResult,
    analytic_plaquette_S,
    reciprocity_defect,
    s_eigenmodes,
    scattering_at,
    scattering_sweep,
    write_sweep_csv,
)
from .traces import (
    Trace,
    TraceSet,
    db_to_linear,
    noise_floor_model,
    normalize_background,
    read_traces,
    remove_slope,
    synthesize_traces,
    write_traces,
)

__version__ = "0.1.0"

__all__ = [
    "CouplingSpec",
    "CreutzParams",
    "DegenerateBackgroundError",
    "DegenerateBandError",
    "FitError",
    "FitParams",
    "FitResult",
    "GlobalFitResult",
    "LatticeSpec",
    "ModeParams",
    "RankDeficiencyError",
    "ScatteringMatrix",
    "SingularMatrixError",
    "SweepResult",
    "SynthlatError",
    "Trace",
    "TraceParseError",
    "TraceSet",
    "analytic_plaquette_S",
    "assemble_residuals",
    "band_structure",
    "basis_state",
    "beta_from_g",
    "bloch_hamiltonian",
    "build_coupling_matrix",
    "caging_check",
    "check_symmetry",
    "chi_state",
    "damped_least_squares",
    "db_to_linear",
    "evolve_state",
    "fit_global",
    "fit_report_dict",
    "lattice_from_dict",
    "lattice_to_dict",
    "load_lattice",
    "model_magnitude",
    "model_trace_values",
    "noise_floor_model",
    "normalize_background",
    "normalized_detuning",
    "pairwise_fit",
    "plaquette_hamiltonian",
    "position_expectation",
    "read_traces",
    "real_space_hamiltonian",
    "reciprocity_defect",
    "remove_slope",
    "s_eigenmodes",
    "save_lattice",
    "scattering_at",
    "scattering_sweep",
    "stage1_free_mask",
    "synthesize_traces",
    "time_averaged_position",
    "wannier_center",
    "wannier_state",
    "write_sweep_csv",
    "write_traces",
    "zak_phase",
    "zero_mode_state",
]
