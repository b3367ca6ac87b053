"""EIT quantum memory with inhomogeneous probe coupling, modeled as m homogeneous sub-ensembles."""

from .analysis import (
    LeakageReport,
    RatioReport,
    RoundtripReport,
    SweepTable,
    analytic_leakage,
    leakage,
    random_config,
    roundtrip_fidelity,
    stored_ratios,
    sweep,
    with_inhomogeneity,
)
from .dynamics import (
    ControlSchedule,
    InputState,
    PropagationError,
    Propagator,
    RetrievedState,
    StoredState,
    coherent_overlap,
    evolve_modes,
    overlap_fock,
    retrieval_map,
    storage_map,
)
from .model import (
    DegenerateCouplingError,
    MixingAngles,
    ModeVector,
    ProfileSpec,
    SubEnsembleConfig,
    dark_mode_vector,
    discretize_profiles,
    hamiltonian_matrix,
    mixing_angles,
    split_hamiltonian,
)
from .oracle import (
    CollectiveOps,
    DimensionBudgetError,
    DiscrepancyReport,
    ExactRegister,
    build_exact,
    collective_operators,
    compare_to_bosonic,
)

__all__ = [
    "CollectiveOps",
    "ControlSchedule",
    "DegenerateCouplingError",
    "DimensionBudgetError",
    "DiscrepancyReport",
    "ExactRegister",
    "InputState",
    "LeakageReport",
    "MixingAngles",
    "ModeVector",
    "ProfileSpec",
    "PropagationError",
    "Propagator",
    "RatioReport",
    "RetrievedState",
    "RoundtripReport",
    "StoredState",
    "SubEnsembleConfig",
    "SweepTable",
    "analytic_leakage",
    "build_exact",
    "coherent_overlap",
    "collective_operators",
    "compare_to_bosonic",
    "dark_mode_vector",
    "discretize_profiles",
    "evolve_modes",
    "hamiltonian_matrix",
    "leakage",
    "mixing_angles",
    "overlap_fock",
    "random_config",
    "retrieval_map",
    "roundtrip_fidelity",
    "split_hamiltonian",
    "storage_map",
    "stored_ratios",
    "sweep",
    "with_inhomogeneity",
]
