"""
Script entry point for bsmcert.

Usage:
    python run.py verify --scenario werner --v 0.98
    python run.py suite --seed 20190523
"""
import sys
import logging
from pathlib import Path

# Console logging goes to stderr; stdout carries the reports
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    stream=sys.stderr,
)

# Imports resolve against this directory wherever the script is launched from
sys.path.insert(0, str(Path(__file__).resolve().parent))

from bsm_certify import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
