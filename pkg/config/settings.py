import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

TOOL_NAME = "frad-desk"
TOOL_VERSION = "0.3.0"

# Logging Configuration
LOG_DIR = Path(os.getenv("FRAD_LOG_DIR", "logs"))
LOG_LEVEL = os.getenv("FRAD_LOG_LEVEL", "INFO")

# Run Configuration
OUTPUT_DIR = Path(os.getenv("FRAD_OUTPUT_DIR", "runs"))
DEFAULT_SEED = int(os.getenv("FRAD_SEED", "0"))
DEFAULT_THREADS = int(os.getenv("FRAD_THREADS", "1"))

# Numerical tolerances shared across packages
DEGENERATE_SIN_TOL = 1e-8
PINV_RTOL = 1e-10
TIKHONOV_DAMPING = 1e-10
CONDITION_WARN = 1e12
