"""
Script to check the environment for shiftlab runs.

Usage:
    python scripts/setup_environment.py --check
    python scripts/setup_environment.py --create-dirs
    python scripts/setup_environment.py --check-packages
    python scripts/setup_environment.py --all
"""

import argparse
import logging
import os
import sys
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from backend import config

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] - %(message)s",
)
logger = logging.getLogger(__name__)


def check_python_packages():
    """Check if required Python packages are installed."""
    logger.info("Checking Python packages...")

    required_packages = [
        ("mpmath", "mpmath"),
        ("numpy", "NumPy"),
        ("scipy", "SciPy"),
        ("pandas", "pandas"),
        ("orjson", "orjson"),
        ("tqdm", "tqdm"),
        ("dotenv", "python-dotenv"),
    ]

    missing = []
    for package_name, display_name in required_packages:
        try:
            module = __import__(package_name)
            version = getattr(module, "__version__", "")
            logger.info(f"  ✓ {display_name} {version}".rstrip())
        except ImportError:
            logger.error(f"  ✗ {display_name} not installed")
            missing.append(package_name)

    if missing:
        logger.error(f"Missing packages: {', '.join(missing)}")
        logger.error("Install them with: pip install -r requirements.txt")
        return False

    logger.info("All required packages are installed!")
    return True


def create_directories():
    """Create the output directory if it doesn't exist."""
    logger.info("Creating necessary directories...")

    for directory in [config.OUTPUT_DIR]:
        path = Path(directory)
        if not path.exists():
            path.mkdir(parents=True, exist_ok=True)
            logger.info(f"  ✓ Created: {directory}")
        else:
            logger.info(f"  - Already exists: {directory}")

    logger.info("Directory setup complete!")


def check_config():
    """Check configuration values."""
    logger.info("Checking configuration...")
    ok = True

    env_state = "loaded" if os.path.exists(config.ENV_FILE) else "not present, defaults in use"
    logger.info(f"  Env file: {config.ENV_FILE} ({env_state})")
    logger.info(f"  Precision: dps={config.DEFAULT_DPS}, quadrature={config.QUADRATURE_DPS}, "
                f"certify={config.CERTIFY_DPS}, max={config.MAX_DPS}")
    logger.info(f"  Workers: {config.WORKERS}")
    logger.info(f"  Output directory: {config.OUTPUT_DIR}")
    logger.info(f"  Scenarios directory: {config.SCENARIOS_DIR}")

    for name in ("DEFAULT_DPS", "QUADRATURE_DPS", "CERTIFY_DPS"):
        value = getattr(config, name)
        if not 15 <= value <= config.MAX_DPS:
            logger.error(f"  ✗ {name}={value} outside [15, {config.MAX_DPS}]")
            ok = False
    if config.WORKERS < 1:
        logger.error(f"  ✗ SHIFTLAB_WORKERS must be >= 1, got {config.WORKERS}")
        ok = False

    scenarios = sorted(Path(config.SCENARIOS_DIR).glob("*.json"))
    logger.info(f"  Example scenarios: {len(scenarios)}")
    return ok


def main():
    parser = argparse.ArgumentParser(
        description="Setup and check environment for shiftlab"
    )
    parser.add_argument(
        "--check",
        action="store_true",
        help="Check configuration values",
    )
    parser.add_argument(
        "--create-dirs",
        action="store_true",
        help="Create the output directory",
    )
    parser.add_argument(
        "--check-packages",
        action="store_true",
        help="Check if required Python packages are installed",
    )
    parser.add_argument(
        "--all",
        action="store_true",
        help="Run all checks and setup",
    )

    args = parser.parse_args()

    if not any(vars(args).values()):
        parser.print_help()
        return

    success = True

    if args.all or args.check_packages:
        if not check_python_packages():
            success = False

    if args.all or args.create_dirs:
        create_directories()

    if args.all or args.check:
        logger.info("=" * 60)
        if check_config():
            logger.info("✓ Configuration is valid")
        else:
            logger.error("✗ Configuration has invalid values")
            success = False
        logger.info("=" * 60)

    if not success:
        sys.exit(1)


if __name__ == "__main__":
    main()
