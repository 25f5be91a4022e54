# Weight kernel
DEFAULT_KERNEL_POWER = 4
# Neighbors closer than this fraction of epsilon to the support boundary make the
# position derivative ill-defined.
KERNEL_KINK_TOLERANCE = 1e-12
# Grid cells are made strictly larger than epsilon by this relative margin.
GRID_CELL_MARGIN = 1e-9

# Local least-squares solves
RIDGE_FACTOR = 1e-10
RIDGE_REFINEMENT_SWEEPS = 2
QR_DIAGONAL_RCOND = 1e-8
SVD_RCOND = 1e-12

# Optimizers
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_BATCH_SIZE = 32
# Samples per block of the incremental least-squares fit
LEAST_SQUARES_CHUNK = 256

# Data generation
DEFAULT_BURGERS_VISCOSITY = 0.01
DEFAULT_SPECTRAL_DECAY = 0.1
BROWNIAN_DOMAIN = (1.0, 0.1)
BROWNIAN_INITIAL_EXTENT = (0.5, 0.1)
FILTER_WIDTH_IN_BINS = 2.0

# Serialization
CHECKPOINT_SCHEMA_VERSION = 1
CONFIG_SCHEMA_VERSION = 1
DATASET_SCHEMA_VERSION = 1
CSV_FLOAT_FORMAT = "%.17g"

# CLI exit codes
EXIT_OK = 0
EXIT_THRESHOLDS_FAILED = 1
EXIT_INVALID_CONFIG = 2
EXIT_NUMERICAL_FAILURE = 3
