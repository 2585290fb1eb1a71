"""Block-subsampled orthonormal sketches for secure coded linear regression."""
from .errors import (
    CapacityError,
    ClosureError,
    ConvergenceError,
    DimensionError,
    DivergenceError,
    PreconditionError,
    RankError,
)
from .linalg import (
    LeverageProfile,
    Partition,
    embedding_distortion,
    fwht,
    fwht_inplace,
    leverage_profile,
    orthonormal_basis,
    spectral_norm,
)
from .sketch import (
    BlockSample,
    Projection,
    ProjectionKind,
    SketchConfig,
    SketchOperator,
    apply_projection,
    assemble_sketch,
    build_projection,
    gram_expectation_oracle,
    sample_blocks,
)
from .sim import (
    EncodedShards,
    ShiftedExponential,
    StepRule,
    StragglerModel,
    aggregated_gradient,
    encode_distribute,
    simulate_round,
    ssd_run,
)

__version__ = "0.1.0"
