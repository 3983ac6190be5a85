"""
Environment loading and typed accessors for bsmcert settings.

Values come from the process environment, optionally seeded from a .env
file. Numeric accessors never raise: malformed values fall back to the
default, out-of-range values are clamped, and both are logged.

Usage:
    from env_handler import load_environment, safe_get_float

    load_environment()
    tol = safe_get_float('ZERO_TOL', 1e-10, min_value=0.0)
"""
import os
import logging
from dotenv import load_dotenv
from pathlib import Path

# Set up logger
logger = logging.getLogger(__name__)

# Variables read by Config.init_app and the logging setup
KNOWN_VARS = (
    'APP_ENV',
    'ZERO_TOL',
    'EXACT_TOL',
    'SUITE_SEED',
    'CURVE_POINTS',
    'LOG_LEVEL',
    'LOG_DIR',
    'LOG_MAX_BYTES',
    'LOG_BACKUP_COUNT',
)


def _candidate_files(custom_env_file=None):
    """Env files in the order they are tried; only the first existing one is loaded."""
    if custom_env_file:
        yield Path(custom_env_file)
    if os.getenv('ENVIRONMENT_FILE'):
        yield Path(os.getenv('ENVIRONMENT_FILE'))

    app_env = os.environ.get('APP_ENV', 'development')
    package_dir = Path(__file__).resolve().parent
    for directory in (package_dir, Path('.')):
        yield directory / f".env.{app_env}"
        yield directory / ".env"


def load_environment(custom_env_file=None):
    """Load the first env file found and make sure APP_ENV is set.

    Existing process variables win over file values.

    Args:
        custom_env_file: Optional path tried before every other location

    Returns:
        dict: A snapshot of the resulting environment
    """
    if custom_env_file and not os.path.isfile(custom_env_file):
        logger.warning(f"Env file {custom_env_file} not found; searching default locations")

    for env_file in _candidate_files(custom_env_file):
        if env_file.is_file():
            logger.info(f"Loading environment from: {env_file}")
            load_dotenv(env_file)
            break
    else:
        logger.debug("No .env file found. Using system environment variables only.")

    set_default_env('APP_ENV', 'development')
    logger.debug(f"Environment loaded. APP_ENV={os.getenv('APP_ENV')}")
    return dict(os.environ)


def set_default_env(key, default_value):
    if key not in os.environ:
        os.environ[key] = default_value
        logger.debug(f"Set default environment variable: {key}={default_value}")


def get_env_var(name, default=None):
    return os.environ.get(name, default)


def _read_number(name, cast, default, min_value, max_value):
    # trailing "# ..." comments are allowed in .env files
    text = os.environ.get(name, '').split('#')[0].strip()
    if not text:
        return default
    try:
        result = cast(text)
    except (ValueError, TypeError) as e:
        logger.error(f"Error parsing {name} as {cast.__name__}: {str(e)}. Using default value ({default}).")
        return default
    if result != result:
        logger.error(f"{name} is NaN. Using default value ({default}).")
        return default

    if min_value is not None and result < min_value:
        logger.warning(f"Value for {name} ({result}) is below minimum ({min_value}). Using minimum value.")
        return min_value
    if max_value is not None and result > max_value:
        logger.warning(f"Value for {name} ({result}) is above maximum ({max_value}). Using maximum value.")
        return max_value
    return result


def safe_get_int(name, default=0, min_value=None, max_value=None):
    """Integer setting with comment stripping and optional clamping.

    Args:
        name: The environment variable name
        default: Returned when the variable is unset, empty or not an integer
        min_value: Optional lower clamp
        max_value: Optional upper clamp

    Returns:
        int: The parsed value
    """
    return _read_number(name, int, default, min_value, max_value)


def safe_get_float(name, default=0.0, min_value=None, max_value=None):
    """Float counterpart of safe_get_int; accepts forms like 1e-10 and rejects NaN."""
    return _read_number(name, float, default, min_value, max_value)


def check_env():
    """Log which known variables are set and which fall back to defaults.

    Returns:
        list: Names of the known variables that are set
    """
    load_environment()
    present = [var for var in KNOWN_VARS if get_env_var(var) is not None]
    logger.info("Environment variables status:")
    for var in KNOWN_VARS:
        value = get_env_var(var)
        logger.info(f"{var}: {value if value is not None else 'not set (default)'}")
    return present


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s')
    check_env()
