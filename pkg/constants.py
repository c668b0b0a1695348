"""
Application Constants
Centralized numeric defaults and metadata for Sparse APCA
"""

# =============================================================================
# Solver Configuration
# =============================================================================
DEFAULT_EPSILON = 1e-3  # Sup-norm distance between successive iterates
DEFAULT_MAX_ITERATIONS = 500
DEFAULT_PSEUDO_INVERSE_TOLERANCE = 1e-10  # Relative singular-value cutoff
DEFAULT_SEED = 0
WARM_START_STEPS = 50  # Plain power steps from the all-ones vector
MAX_DEGENERATE_RESTARTS = 3
RANDOM_STARTS = 8  # Seeded random supports tried besides the warm and diagonal starts
RANDOM_START_STREAM = 7919  # SeedSequence key separating multi-start draws from restarts
DEGENERATE_NORM_TOLERANCE = 1e-14

# =============================================================================
# Numerical Tolerances
# =============================================================================
SYMMETRY_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10
PROJECTION_TOLERANCE = 1e-8
ORTHONORMAL_TOLERANCE = 1e-8
B_NORMALIZATION_TOLERANCE = 1e-6
CENTERING_TOLERANCE = 1e-10
MAX_DESIGN_CONDITION = 1e12
EIGENVALUE_FLOOR = 1e-12  # Relative to the leading eigenvalue
GRAM_PSD_CHECK_MAX_T = 1000  # Larger grams skip the eigenvalue PSD audit

# =============================================================================
# Model Selection
# =============================================================================
DEFAULT_J_PARTITIONS = 10
GRID_BELOW_SQRT_T = 10
GRID_ABOVE_SQRT_T = 150
DEFAULT_PENALTY_KIND = "ic_log_scaled"
PENALTY_KINDS = ("pc_linear", "ic_log", "ic_log_scaled")
DISTANCE_KINDS = ("D", "rho", "sin_theta")

# =============================================================================
# Simulation Designs
# =============================================================================
AR_BURN_IN = 200
ONE_FACTOR_AR = (0.5,)
THREE_FACTOR_AR = (0.5, -0.6, 0.7)
LOADING_STRENGTHS = (3.0, 2.0, 1.0)
LOADING_UNIFORM_BOUND = 2.0
NOISE_AR_RANGE = (0.5, 0.9)
SIMULATION_TASKS = ("factor_error", "recovery", "r_selection", "s_selection", "loading_distribution")
NOISE_KINDS = ("iid_gaussian", "ar1_diagonal")
SPARSITY_RULES = ("random_support", "top_magnitude")
LOADING_RULES = ("uniform_rows", "svd_orthonormal_scaled")

# Built-in simulation designs; summary tables have rows N and columns T
SIMULATION_TABLES = {
    1: {
        "title": "Factor estimation error d, one factor",
        "r": 1, "task": "factor_error", "metric": "factor_angle_error",
        "n_values": [50, 100, 150, 300, 500], "t_values": [200, 500, 800, 1000, 1200],
        "sparsity_rule": "random_support", "loading_rule": "uniform_rows",
    },
    2: {
        "title": "Support recovery rate, one factor",
        "r": 1, "task": "recovery", "metric": "recovery_rate",
        "n_values": [50, 100, 150, 300, 500], "t_values": [200, 500, 800, 1000, 1200],
        "sparsity_rule": "random_support", "loading_rule": "uniform_rows",
    },
    3: {
        "title": "Factor matrix error, three factors",
        "r": 3, "task": "factor_error", "metric": "factor_matrix_error",
        "n_values": [50, 100, 150, 200, 300], "t_values": [100, 200, 300, 500, 800],
        "sparsity_rule": "random_support", "loading_rule": "svd_orthonormal_scaled",
    },
    4: {
        "title": "Support recovery rate, three factors",
        "r": 3, "task": "recovery", "metric": "recovery_rate",
        "n_values": [50, 100, 150, 200, 300], "t_values": [100, 200, 300, 500, 800],
        "sparsity_rule": "random_support", "loading_rule": "svd_orthonormal_scaled",
    },
    5: {
        "title": "P(r_hat = r) with the eigenvalue ratio, three factors",
        "r": 3, "task": "r_selection", "metric": "r_selection",
        "n_values": [50, 100, 150, 200, 300], "t_values": [100, 200, 300, 500, 800],
        "sparsity_rule": "random_support", "loading_rule": "svd_orthonormal_scaled",
    },
    6: {
        "title": "P(s_hat = s0) with cross-validation, one factor",
        "r": 1, "task": "s_selection", "metric": "s_selection",
        "n_values": [50, 100, 150, 200, 300], "t_values": [100, 200, 300, 500, 800],
        "sparsity_rule": "top_magnitude", "loading_rule": "uniform_rows",
        "j_partitions": 1,
    },
}

# =============================================================================
# CLI Exit Codes
# =============================================================================
EXIT_SUCCESS = 0
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

# =============================================================================
# Error Messages
# =============================================================================
class ErrorMessages:
    NOT_CENTERED = "Panel must be demeaned before computing the gram matrix"
    ALREADY_CENTERED = "Panel is already centered; returning it unchanged"
    RAGGED_ROW = "Row has a different number of cells than the header"
    NON_NUMERIC = "Cell is not a finite number"
    TOO_SMALL = "Panel needs at least 2 time points and 2 series"
    DUPLICATE_IDS = "Series identifiers must be distinct"
    ZERO_INITIAL_VECTOR = "Initial vector must be nonzero"
    SINGULAR_DESIGN = "Factor gram matrix is singular or ill-conditioned"
    DEGENERATE_SPECTRUM = "All eigenvalues are zero"
    NOT_ORTHONORMAL = "Input columns are not orthonormal"
    ASYMMETRIC = "Matrix is not symmetric"


# =============================================================================
# Application Metadata
# =============================================================================
APP_NAME = "sparse-apca"
APP_VERSION = "0.1.0"
APP_DESCRIPTION = "Sparse asymptotic principal components for large panels"
