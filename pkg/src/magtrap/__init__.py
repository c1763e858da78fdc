"""Two identical trapped ions in a magnetic field: relative-motion toolkit.

Spectra, probability currents and wave-packet dynamics of the planar
relative motion of two identically charged particles held in a harmonic
trap and threaded by a homogeneous axial magnetic field.  Everything is
expressed in trap units through two dimensionless knobs: the field-to-trap
frequency ratio nu and the Coulomb coupling b.

Modules
-------
params       unit conventions, dimensionless parameters, effective potential
radial       variational eigensolver for the angular-momentum sectors
observables  densities, azimuthal currents, velocity expectations
dynamics     split-operator real- and imaginary-time propagation
io_utils     headered CSV / JSON / grid-dump artifact files
cli          the `magtrap` command line front end
"""

from .io_utils import ARTIFACT_VERSION as __version__
from .params import (
    COULOMB_K,
    PhysicalParams,
    QuantumNumbers,
    TrapParams,
    effective_potential,
    effective_potential_minimum,
    fock_darwin_energy,
    from_physical,
)
from .radial import (
    BasisConditioningError,
    BracketingError,
    GroundStateRecord,
    RadialBasis,
    RadialEigenSolution,
    crude_variational_energy,
    find_crossing,
    ground_state_scan,
    overlap_and_hamiltonian_matrices,
    solve_sector,
    spectrum_sweep,
)
from .observables import (
    CurrentField,
    DensityProfile,
    QuadratureConvergenceError,
    RadialWavefunction,
    current_density,
    current_vector_field,
    density_profile,
    ground_velocity_sweep,
    velocity_expectation,
)
from .dynamics import (
    BoundaryLeakError,
    EvolutionResult,
    GridSpec,
    GridState,
    NormDriftError,
    RampProtocol,
    SectorLeakageError,
    Snapshot,
    angular_harmonics,
    angular_maxima_count,
    circular_variance,
    evolve,
    gaussian_packet,
    imaginary_time_ground,
    rotate_frame,
    sector_seed,
    state_observables,
    strang_step,
    to_lab_frame,
)

__all__ = [
    "__version__",
    "COULOMB_K",
    "PhysicalParams",
    "QuantumNumbers",
    "TrapParams",
    "effective_potential",
    "effective_potential_minimum",
    "fock_darwin_energy",
    "from_physical",
    "BasisConditioningError",
    "BracketingError",
    "GroundStateRecord",
    "RadialBasis",
    "RadialEigenSolution",
    "crude_variational_energy",
    "find_crossing",
    "ground_state_scan",
    "overlap_and_hamiltonian_matrices",
    "solve_sector",
    "spectrum_sweep",
    "CurrentField",
    "DensityProfile",
    "QuadratureConvergenceError",
    "RadialWavefunction",
    "current_density",
    "current_vector_field",
    "density_profile",
    "ground_velocity_sweep",
    "velocity_expectation",
    "BoundaryLeakError",
    "EvolutionResult",
    "GridSpec",
    "GridState",
    "NormDriftError",
    "RampProtocol",
    "SectorLeakageError",
    "Snapshot",
    "angular_harmonics",
    "angular_maxima_count",
    "circular_variance",
    "evolve",
    "gaussian_packet",
    "imaginary_time_ground",
    "rotate_frame",
    "sector_seed",
    "state_observables",
    "strang_step",
    "to_lab_frame",
]
