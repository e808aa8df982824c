"""Extended-Liouvillian construction and exceptional-point analysis for
non-Markovian open quantum systems.

The package maps structured environments onto pseudomode and hierarchical
(auxiliary-density-operator) descriptions, both governed by dense extended
generators whose spectra expose exceptional points; detection, location,
perturbation scaling and the dynamical signatures are built on top.
"""

__version__ = "0.1.0"

from .environment import (
    CorrelationSpec,
    ExponentTerm,
    SpectralDensity,
    bandgap,
    correlation_quadrature,
    correlation_value,
    evaluate_spectral_density,
    exponents_for,
    lorentzian,
)
from .linalg import (
    JordanReport,
    SpectrumResult,
    eigendecompose,
    jordan_chains,
    jordan_structure,
    kron,
    liouvillian_from_parts,
    partial_trace,
    propagate,
    unvec,
    vec,
)
from .pseudomode import (
    BosonicNetwork,
    ExtendedLiouvillian,
    PseudomodeModel,
    build_pm_hamiltonian,
    build_pm_liouvillian,
    effective_nhh,
    evolve_amplitudes,
    reduced_eigenmatrices,
    restrict_single_excitation,
    spin_boson_model,
    two_mode_network,
)
from .heom import (
    AdoIndex,
    HeomLiouvillian,
    HeomModel,
    block_decompose,
    build_heom_general,
    build_heom_rwa,
    enumerate_ados,
    project_system,
)
from .spectral import (
    EpReport,
    ScalingFit,
    SweepTable,
    detect_ep,
    locate_ep_1d,
    perturbation_scaling,
    puiseux_coefficients,
    sweep_spectrum,
)
from .dynamics import (
    DecoherenceRecord,
    Trajectory,
    analytic_trajectory,
    decoherence_function,
    default_time_grid,
    evolve_reduced,
    first_vanishing_time,
    is_nonmarkovian,
    reconstruct_reduced,
)

__all__ = [name for name in dir() if not name.startswith("_")]
