"""App-wide constants."""

MODEL_FORMAT = "mbda-model/1"

# Exit codes for the CLI
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

DEFAULT_UCL_PERCENTILE = 0.99
DEFAULT_VARIANCE_FRACTION = 0.9
DEFAULT_RELATIVE_SELECTION = 0.1
DEFAULT_MAX_CLUSTERS = 100
DEFAULT_POLLUTION_THRESHOLD = 0.10

# Relative eigenvalue cut below which a component counts as degenerate
RANK_TOLERANCE = 1e-12
# Smallest control limit accepted; an all-zero calibration statistic is floored to this
UCL_FLOOR = 1e-12

TIMESTAMP_COLUMN = "timestamp"

# Rows per block when fused files and calibration data are processed out of core
DEFAULT_CHUNK_ROWS = 4096
