import os
import sys
from dataclasses import dataclass

import numpy as np
import pytest

# Tests import modules the way run.py does: from the bsmcert directory
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.certify import BoundFunctions
from core.network import ideal_swap_scenario


@dataclass(frozen=True)
class FlippedRescaleBounds(BoundFunctions):
    """Bound functions with the sign of t reversed; the rescaling check must reject them."""

    def t(self, eta):
        return -super().t(eta)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ideal_scenario():
    return ideal_swap_scenario()


@pytest.fixture
def flipped_bounds():
    return FlippedRescaleBounds()


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    """Run from an empty directory with none of the package variables set."""
    monkeypatch.chdir(tmp_path)
    for var in ('APP_ENV', 'ENVIRONMENT_FILE', 'ZERO_TOL', 'EXACT_TOL', 'SUITE_SEED',
                'CURVE_POINTS', 'LOG_LEVEL', 'LOG_DIR', 'LOG_MAX_BYTES', 'LOG_BACKUP_COUNT'):
        # teardown also removes whatever load_dotenv adds
        monkeypatch.setenv(var, '')
        monkeypatch.delenv(var)
    return tmp_path
