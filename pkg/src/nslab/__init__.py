"""nslab: a pseudo-spectral laboratory for mild solutions of the 3D
incompressible Navier-Stokes equations driven by convolution-type noise.

The package builds the path-dependent Fourier-multiplier transformation
that converts the stochastic equation into a random one, constructs mild
solutions by Picard iteration, measures Littlewood-Paley based norms, and
estimates the lifespan lower bound empirically at desk scale.
"""

from .spectral import (
    Grid,
    GridMismatchError,
    PhysicalField,
    SnapshotFormatError,
    SpectralField,
    dealias,
    derivative,
    divergence,
    divergence_error,
    heat_semigroup,
    hermitian_symmetry_error,
    l2_norm,
    laplacian,
    leray_project,
    load_snapshot,
    mean_magnitude,
    physical_l2_norm,
    q_bilinear,
    random_divfree_field,
    save_snapshot,
    taylor_green,
    tensor_product,
    to_physical,
    to_spectral,
    zero_field,
)
from .littlewood_paley import (
    DyadicPartition,
    NonZeroMeanError,
    ZNormRecord,
    besov_norm,
    build_partition,
    product_law_ratio,
    reconstruct,
    sobolev_norm,
    z_norm,
)
from .noise import (
    ADMISSIBILITY_FACTOR,
    AdmissibilityViolation,
    BrownianPath,
    GammaOperator,
    KernelSpec,
    NoiseModel,
    apply_gamma,
    apply_gamma_inverse,
    channel_alpha,
    constant_path,
    gamma_symbol,
    gaussian_kernel,
    identity_gamma,
    inverse_symbol,
    sample_brownian,
    validate_noise,
    zero_kernel,
)
from .solver import (
    HEAT_Z_CONSTANT,
    DegenerateEnsembleError,
    LifespanReport,
    NonConvergence,
    PreconditionViolation,
    SolveReport,
    Trajectory,
    contraction_constant,
    derive_seed,
    derived_c_gamma,
    duhamel_bilinear,
    duhamel_trajectory,
    empirical_lifespan,
    fixed_point_solve,
    heat_trajectory,
    lifespan_lower_bound,
    picard_solve,
    zero_trajectory,
)
from .config import (
    ChannelSpec,
    ExperimentConfig,
    ParseError,
    ValidationError,
    load_config,
    parse_dotted_keys,
)

__version__ = "0.1.0"
