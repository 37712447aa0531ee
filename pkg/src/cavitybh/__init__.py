"""Bose-Hubbard models in cavity-generated quantum optical lattices.

The package covers the full pipeline from the 1D band problem to open-system
dynamics: Wannier functions and tight-binding matrix elements of the cos^2
lattice (`lattice`), occupation bases and sparse operators (`fockspace`),
joint and field-eliminated Hamiltonians with their dissipators (`models`),
exact diagonalization / Lindblad / quantum-jump / steady-state solvers
(`solvers`), the depth-photon self-consistency loop (`selfconsistent`),
reference states and reported quantities (`observables`), and a declarative
experiment runner (`cli`).

Units everywhere: lengths in 1/k, energies in E_R = hbar^2 k^2 / 2m, rates
and frequencies in omega_R = E_R / hbar, times in 1/omega_R.
"""

__version__ = "0.1.0"

from .errors import (
    BracketError,
    ConfigError,
    CutoffError,
    CutoffWarning,
    DegenerateBandError,
    GaugeError,
    ModelValidityError,
    MultiplicityWarning,
    NumericalError,
    PhysicsError,
    TraceDriftError,
    UnsupportedGeometryError,
)
from .fockspace import (
    JointBasis,
    LatticeBasis,
    SparseOperator,
    build_hop_operator,
    build_imbalance_operator,
    build_number_operator,
    build_onsite_interaction,
    build_photon_ops,
    enumerate_basis,
    lift_to_joint,
    photon_coherent_state,
)
from .lattice import (
    BandSolution,
    MatrixElements,
    WannierFunction,
    build_wannier,
    compute_matrix_elements,
    matrix_elements_at,
    solve_bloch,
)
from .models import (
    LindbladModel,
    ModelParams,
    adiabatic_field_operator,
    adiabatic_photon_number_operator,
    build_adiabatic_atom_pump,
    build_adiabatic_cavity_pump,
    build_atom_pump_full,
    build_cavity_pump_full,
    build_classical_bh,
    build_field_eliminated_master,
    build_general_full,
    shifted_detuning,
    suggest_photon_cutoff,
)
from .observables import (
    ObservableRecord,
    build_mi_state,
    build_sf_state,
    mean_position,
    overlap_probability,
    partial_trace_photon,
    photon_number,
    photon_number_adiabatic,
    projector,
    standard_observable_set,
    write_records_csv,
)
from .selfconsistent import (
    SelfConsistentResult,
    classical_crossing,
    iterate,
    quantum_crossing,
    sweep_crossing,
)
from .solvers import (
    GroundStateResult,
    MasterResult,
    TrajectoryEnsemble,
    evolve_master,
    evolve_mcwf,
    ground_state,
    liouvillian_matrix,
    load_state,
    save_state,
    steady_state,
)
