"""Huber means on Riemannian manifolds: estimation, inference and simulation studies."""

from .distributions import (
    Contaminated,
    GaussianType,
    LaplaceType,
    LogLaplaceSPD,
    LogNormalSPD,
    Mixture,
    PointMass,
    SeededRng,
    VonMisesFisher,
    density_location_scale,
    normalize_on_circle,
    sample,
)
from .efficiency import (
    are_circle,
    are_empirical,
    are_gaussian_real,
    are_laplace_real,
    are_table,
    find_kappa_for_target,
)
from .errors import (
    ContractViolationError,
    CutLocusError,
    DegenerateScaleError,
    DomainError,
    HuberMeanError,
    InsufficientDataError,
    NoCrossingError,
    NotConvergedError,
    SingularHessianError,
    SolverError,
)
from .estimators import (
    EstimateReport,
    SolverConfig,
    default_cutoff,
    frechet_mean,
    geometric_median,
    huber_mean,
    mad_scale,
    medoid,
    uniqueness_support_check,
)
from .inference import (
    AsymptoticCovariance,
    TestResult,
    chi2_upper_quantile,
    confidence_region,
    h_hat,
    limiting_covariance,
    location_test,
    one_sample_test,
    sigma_hat,
)
from .io import read_dataset, write_dataset
from .losses import LossSpec, Sample, negative_gradient, objective, rho, rho_prime
from .manifolds import (
    ManifoldPoint,
    ManifoldTag,
    OrthonormalFrame,
    TangentVector,
    curvature_info,
    dist,
    euclidean,
    exp_map,
    geodesic_symmetry,
    log_map,
    parallel_transport,
    spd,
    sphere,
    tangent_frame,
)

__version__ = "0.1.0"
