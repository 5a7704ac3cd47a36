"""Band structure, threshold spectral data, effective tensors and
high-energy homogenization error verification for periodic Schrödinger
operators in factorized form."""

__version__ = "0.1.0"

from .errors import (
    CertificationError,
    CertificationWarning,
    ConfigError,
    EigensolverError,
    GridEstimateWarning,
    InternalConsistencyError,
    RefinementError,
    ResolutionError,
)
from .lattice import Lattice, PlaneWaveBasis, build_basis, build_lattice, default_cutoff
from .cell import (
    FiberMatrix,
    PeriodicCoefficients,
    assemble_fiber,
    build_coefficients,
    derivative_matrices,
    ground_state,
)
from .spectral import (
    BandStructure,
    ThresholdPoint,
    band_structure,
    detect_threshold,
    eig_fiber,
)
from .threshold import (
    ConstantsLedger,
    ProjectionData,
    constants_ledger,
    f1_cross,
    ledger_from_values,
    reduced_resolvent_apply,
    spectral_projection,
    verify_exponential_bound,
)
from .effective import (
    CellSolutions,
    EffectiveTensors,
    compute_tensors,
    effective_symbol,
    g1_tensor,
    g2_tensor,
    reduced_evolution,
    solve_cell_problems,
)
from .propagator import (
    FiberField,
    PacketSpec,
    WavePacket,
    assemble_error,
    error_bound,
    make_packet,
    propagate_effective,
    propagate_exact,
    reconstruct_physical,
)
from .harness import (
    ConvergenceReport,
    RunConfig,
    fit_slope,
    load_config,
    parse_config,
    run_convergence,
)
