import os

from dotenv import load_dotenv

# Get project root directory (parent of backend/)
ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Optional overrides live next to the code, same as the other *.env files
ENV_FILE = os.path.join(ROOT_DIR, "shiftlab.env")
if os.path.exists(ENV_FILE):
    load_dotenv(ENV_FILE)

# --- Artifact identity ---
ARTIFACT_NAME = "shiftlab"
ARTIFACT_VERSION = "1.0.0"
CERTIFICATE_SCHEMA_VERSION = "1"

# --- Precision (significant decimal digits) ---
DEFAULT_DPS = int(os.getenv("SHIFTLAB_DPS", "50"))
QUADRATURE_DPS = int(os.getenv("SHIFTLAB_QUADRATURE_DPS", "30"))
# Long scans (10^5 indices) run at a lower precision; margins there are ~1e-6
CERTIFY_DPS = int(os.getenv("SHIFTLAB_CERTIFY_DPS", "30"))
MAX_DPS = int(os.getenv("SHIFTLAB_MAX_DPS", "400"))
# Extra digits carried when a value has to be correctly rounded
GUARD_DPS = 10
# Recurrence runs at 2x the target and is confirmed at 4x
RECURRENCE_PRECISION_FACTOR = 2
RECURRENCE_CONFIRM_FACTOR = 4
# log2 magnitude beyond which a recurrence term counts as overflow
MAX_BINARY_EXPONENT = 10**6

# --- Gamma ratios ---
GAMMA_RELATIVE_TOLERANCE = "1e-30"
GAMMA_GUARD_DPS = 20

# --- Tolerances ---
ULP_TOLERANCE = 10
DEFAULT_REPORT_TOLERANCE = 1e-8
PERIODICITY_TOLERANCE = 1e-25
KERNEL_TAIL_TOLERANCE = 1e-12
# exp() argument ceiling for theta basis values exported as doubles
THETA_EXPONENT_LIMIT = 700

# --- Certification defaults ---
# |lambda| grid used when a scenario does not give one
LAMBDA_GRID = ("0.5", "1", "2", "10")
DEFAULT_GAMMA = "sqrt_n_log_n"
DEFAULT_HYP1_N_MAX = 10_000
DEFAULT_HYP2_N_HI = 10_000
DEFAULT_HYP3_N_HI = 100_000
# Sample points for the tail trend of the damping bound
TREND_SAMPLES = 8

# --- Quadrature ---
DEFAULT_RADIAL_NODES = 40
DEFAULT_ANGULAR_NODES = 64

# --- Caching ---
WEIGHT_CACHE_SIZE = 2**17

# --- Output paths (absolute from project root) ---
OUTPUT_DIR = os.getenv("SHIFTLAB_OUTPUT_DIR", os.path.join(ROOT_DIR, "data", "runs"))
SCENARIOS_DIR = os.path.join(ROOT_DIR, "scenarios")
DOCS_DIR = ROOT_DIR

CERTIFICATES_FILE = "certificates.json"
CHECKS_FILE = "checks.json"
RUN_META_FILE = "run_meta.json"
SUMMARY_CSV = "summary.csv"
SUMMARY_TXT = "summary.txt"

# --- Batch runs ---
WORKERS = int(os.getenv("SHIFTLAB_WORKERS", "1"))
SHOW_PROGRESS = os.getenv("SHIFTLAB_PROGRESS", "0") == "1"
