import logging
from env_handler import get_env_var, safe_get_float, safe_get_int

class Config:
    TESTING = False
    DEVELOPMENT = False
    PRODUCTION = False

    ZERO_TOL = 1e-10
    EXACT_TOL = 1e-7
    SUITE_SEED = 20190523
    CURVE_POINTS = 200
    LOG_LEVEL = 'INFO'
    LOG_DIR = None

    @classmethod
    def init_app(cls, env='development'):
        # Set up logger
        logger = logging.getLogger(__name__)

        cls.TESTING = env == 'testing'
        cls.DEVELOPMENT = env == 'development'
        cls.PRODUCTION = env == 'production'

        # Numerical tolerances
        cls.ZERO_TOL = safe_get_float('ZERO_TOL', 1e-10, min_value=0.0, max_value=1e-3)
        cls.EXACT_TOL = safe_get_float('EXACT_TOL', 1e-7, min_value=1e-14, max_value=1e-3)

        # Sweeps
        cls.SUITE_SEED = safe_get_int('SUITE_SEED', 20190523, min_value=0)
        cls.CURVE_POINTS = safe_get_int('CURVE_POINTS', 200, min_value=2, max_value=10000)

        # Logging
        cls.LOG_LEVEL = (get_env_var('LOG_LEVEL', 'INFO') or 'INFO').upper()
        cls.LOG_DIR = get_env_var('LOG_DIR') or None

        logger.debug(f"Environment: {env}")
        logger.debug(f"Tolerances: zero={cls.ZERO_TOL} exact={cls.EXACT_TOL}")

    @classmethod
    def as_dict(cls):
        """Current settings for logging or reports."""
        keys = ('ZERO_TOL', 'EXACT_TOL', 'SUITE_SEED', 'CURVE_POINTS', 'LOG_LEVEL', 'LOG_DIR')
        return {key: getattr(cls, key) for key in keys}
