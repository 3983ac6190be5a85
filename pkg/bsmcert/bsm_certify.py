"""
bsmcert command-line application.

Verbs:
    verify           Certify one scenario and print its JSON report.
    curve            Robust bound as a function of the average CHSH value (CSV).
    noise-threshold  Noise level at which certification stops (JSON).
    suite            Run the invariant suites.

Usage:
    python run.py verify --scenario bsm --noise werner --v 0.98
    python run.py curve --from 2.6 --out curve.csv
    python run.py noise-threshold
    python run.py suite --seed 7

Exit codes: 0 pass, 1 verdict or suite failure, 2 usage or config error.
"""
import argparse
import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, fields, replace
from logging.handlers import RotatingFileHandler
from typing import Optional, Tuple

import numpy as np
from dotenv import dotenv_values
from scipy.optimize import brentq

from config import Config
from env_handler import load_environment, safe_get_int
from core.certify import (
    CERTIFIED,
    INCONCLUSIVE,
    PRECONDITION_FAILED,
    QSEP_BSM,
    CertReport,
    certification_threshold,
    ghz_verify,
    qsep_refined_bound,
    robust_bound_point,
    theorem1_verify,
    theorem2_certify,
    tilted_verify,
)
from core.exceptions import CertificationError, ConfigError, IdentityCheckError, PreconditionError
from core.network import (
    beta_ave,
    ideal_swap_scenario,
    misaligned_scenario,
    povm_noise_scenario,
    run_swap,
    star_scenario,
    werner_swap_scenario,
)
from core.qobjects import TSIRELSON, ScenarioKind, measurement_basis, noisy_measurement, werner_source
from core.suites import SUITES, run_suites

# Set up logging
logger = logging.getLogger(__name__)

SCENARIOS = ('bsm', 'tilted', 'ghz')
NOISE_MODELS = ('none', 'werner', 'povm', 'misalign')
VERDICTS = (CERTIFIED, INCONCLUSIVE, PRECONDITION_FAILED)
SWEEP_FLOOR = 2.6
DEFAULT_THETA = np.pi / 8


@dataclass(frozen=True)
class RunConfig:
    """Settings of one command after defaults, config file and flags are merged."""
    command: str
    scenario: str = 'bsm'
    noise: str = 'none'
    v: float = 1.0
    p: float = 0.0
    angle: float = 0.0
    theta: Optional[float] = None
    sweep_from: float = SWEEP_FLOOR
    sweep_to: float = float(TSIRELSON)
    step: Optional[float] = None
    seed: Optional[int] = None
    out: Optional[str] = None
    expect: str = CERTIFIED
    suites: Tuple[str, ...] = ()
    zero_tol: float = 1e-10
    exact_tol: float = 1e-7

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"Unknown scenario '{self.scenario}'; choose from {', '.join(SCENARIOS)}")
        if self.noise not in NOISE_MODELS:
            raise ConfigError(f"Unknown noise model '{self.noise}'; choose from {', '.join(NOISE_MODELS)}")
        if not 0 <= self.v <= 1:
            raise ConfigError(f"--v must lie in [0, 1], got {self.v}")
        if not 0 <= self.p <= 1:
            raise ConfigError(f"--p must lie in [0, 1], got {self.p}")
        if self.theta is not None and not 0 < self.theta <= np.pi / 4:
            raise ConfigError(f"--theta must lie in (0, pi/4], got {self.theta}")
        if self.expect not in VERDICTS:
            raise ConfigError(f"--expect must be one of {', '.join(VERDICTS)}")
        if self.step is not None and self.step <= 0:
            raise ConfigError(f"--step must be positive, got {self.step}")
        if self.seed is not None and self.seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {self.seed}")
        unknown = [s for s in self.suites if s not in SUITES]
        if unknown:
            raise ConfigError(f"Unknown suites: {', '.join(unknown)}")
        if self.scenario == 'ghz' and self.noise not in ('none', 'werner'):
            raise ConfigError("The GHZ scenario supports only werner noise")
        return self


# key in the flat config file -> RunConfig field
_FILE_KEYS = {
    'scenario': 'scenario', 'noise': 'noise', 'v': 'v', 'p': 'p', 'angle': 'angle',
    'theta': 'theta', 'from': 'sweep_from', 'to': 'sweep_to', 'step': 'step', 'seed': 'seed',
    'out': 'out', 'expect': 'expect', 'suites': 'suites', 'only': 'suites',
    'zero_tol': 'zero_tol', 'exact_tol': 'exact_tol',
}
_FLOAT_FIELDS = {'v', 'p', 'angle', 'theta', 'sweep_from', 'sweep_to', 'step', 'zero_tol', 'exact_tol'}


def _convert(name, value):
    if value is None:
        return None
    try:
        if name in _FLOAT_FIELDS:
            return float(value)
        if name == 'seed':
            return int(value)
        if name == 'suites':
            if isinstance(value, str):
                return tuple(s.strip() for s in value.split(',') if s.strip())
            return tuple(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for {name}: {value!r} ({e})")
    return value


def load_config_file(path):
    """Flat key=value file; keys are long flag names with dashes or underscores."""
    if not os.path.isfile(path):
        raise ConfigError(f"Config file not found: {path}")
    values = {}
    for key, raw in dotenv_values(path).items():
        normalized = key.strip().lower().replace('-', '_')
        if normalized not in _FILE_KEYS:
            raise ConfigError(f"Unknown key '{key}' in {path}")
        if raw is not None:
            values[_FILE_KEYS[normalized]] = _convert(_FILE_KEYS[normalized], raw.split('#')[0].strip())
    logger.debug(f"Loaded {len(values)} settings from {path}")
    return values


def build_run_config(args) -> RunConfig:
    """Defaults, then the --config file, then explicit flags."""
    settings = {
        'seed': Config.SUITE_SEED,
        'zero_tol': Config.ZERO_TOL,
        'exact_tol': Config.EXACT_TOL,
    }
    if getattr(args, 'config', None):
        settings.update(load_config_file(args.config))

    known = {f.name for f in fields(RunConfig)}
    for name in known - {'command'}:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = _convert(name, value)
    return RunConfig(command=args.command, **settings).validate()


def setup_logging(verbose=False):
    """Level from LOG_LEVEL (DEBUG with --verbose), plus a rotating file in LOG_DIR."""
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    level = logging.DEBUG if verbose else getattr(logging, Config.LOG_LEVEL, logging.INFO)
    root.setLevel(level)

    log_dir = Config.LOG_DIR
    if not log_dir:
        return
    os.makedirs(log_dir, exist_ok=True)
    log_path = os.path.abspath(os.path.join(log_dir, 'bsmcert.log'))
    if any(getattr(h, 'baseFilename', None) == log_path for h in root.handlers):
        return
    file_handler = RotatingFileHandler(
        log_path,
        maxBytes=safe_get_int('LOG_MAX_BYTES', 1024 * 1024, min_value=1024),
        backupCount=safe_get_int('LOG_BACKUP_COUNT', 10, min_value=1, max_value=100)
    )
    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s.%(msecs)03d %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]',
        datefmt='%Y-%m-%d %H:%M:%S'
    ))
    file_handler.setLevel(level)
    root.addHandler(file_handler)
    logger.debug(f"Logging to {log_path}")


def _sig(x):
    """Round to 9 significant digits; lists and None pass through."""
    if x is None:
        return None
    if isinstance(x, (list, tuple)):
        return [_sig(i) for i in x]
    if isinstance(x, (float, np.floating)):
        return float(f'{float(x):.9g}')
    return x


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.bsmcert-', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    logger.info(f"Wrote {path}")


def _emit(cfg: RunConfig, text):
    if cfg.out:
        _write_atomic(cfg.out, text)
    else:
        print(text, end='' if text.endswith('\n') else '\n')


def _emit_json(cfg: RunConfig, payload):
    rounded = {k: _sig(v) for k, v in payload.items()}
    _emit(cfg, json.dumps(rounded, indent=2, ensure_ascii=False) + '\n')


def _swap_scenario(cfg: RunConfig):
    if cfg.scenario == 'tilted':
        theta = cfg.theta if cfg.theta is not None else DEFAULT_THETA
        base = ideal_swap_scenario(ScenarioKind.TILTED, theta)
    else:
        base = ideal_swap_scenario()

    if cfg.noise == 'werner':
        return replace(base, tau_ab1=werner_source(cfg.v), tau_b2c=werner_source(cfg.v))
    if cfg.noise == 'povm':
        return replace(base, bob=noisy_measurement(base.bob, cfg.p))
    if cfg.noise == 'misalign':
        return misaligned_scenario(base, cfg.angle)
    return base


def _certify(cfg: RunConfig) -> CertReport:
    if cfg.scenario == 'ghz':
        return ghz_verify(star_scenario(cfg.v if cfg.noise == 'werner' else 1.0),
                          exact_tol=cfg.exact_tol, zero_tol=cfg.zero_tol)
    s = _swap_scenario(cfg)
    if cfg.scenario == 'tilted':
        theta = cfg.theta if cfg.theta is not None else DEFAULT_THETA
        return tilted_verify(theta, s, exact_tol=cfg.exact_tol, zero_tol=cfg.zero_tol)
    if cfg.noise == 'none':
        return theorem1_verify(s, exact_tol=cfg.exact_tol, zero_tol=cfg.zero_tol)
    return theorem2_certify(s, zero_tol=cfg.zero_tol, scenario='bsm')


def _scenario_qsep(cfg: RunConfig):
    if cfg.scenario == 'ghz':
        return qsep_refined_bound(measurement_basis(ScenarioKind.GHZ))
    if cfg.scenario == 'tilted':
        theta = cfg.theta if cfg.theta is not None else DEFAULT_THETA
        return qsep_refined_bound(measurement_basis(ScenarioKind.TILTED, theta))
    return QSEP_BSM


def cmd_verify(cfg: RunConfig):
    logger.info(f"Verifying scenario={cfg.scenario} noise={cfg.noise}")
    try:
        report = _certify(cfg)
    except (PreconditionError, IdentityCheckError) as e:
        logger.error(f"Certification precondition failed: {e}")
        report = CertReport.precondition_failed(cfg.scenario, _scenario_qsep(cfg), str(e))

    _emit_json(cfg, report.to_dict())
    if report.verdict != cfg.expect:
        logger.error(f"Verdict {report.verdict} does not match expected {cfg.expect}")
        return 1
    return 0


def _sweep_grid(cfg: RunConfig):
    lo, hi = cfg.sweep_from, cfg.sweep_to
    if not 2 < lo < hi <= TSIRELSON + 1e-12:
        raise ConfigError(f"Sweep range [{lo}, {hi}] must satisfy 2 < from < to <= 2 sqrt 2")
    hi = min(hi, float(TSIRELSON))
    if cfg.step is not None:
        grid = np.arange(lo, hi, cfg.step)
        grid = np.append(grid[grid < hi - 1e-12], hi)
    else:
        grid = np.linspace(lo, hi, Config.CURVE_POINTS)
    return [float(b) for b in grid]


def cmd_curve(cfg: RunConfig):
    grid = _sweep_grid(cfg)
    root = certification_threshold()
    logger.info(f"Robust bound crosses {QSEP_BSM} at beta_ave={root:.9f}")
    if grid[0] <= root <= grid[-1] and not any(abs(b - root) < 1e-12 for b in grid):
        grid = sorted(grid + [root])

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['beta_ave', 'q', 'eta_star', 'bound'])
    for beta in grid:
        point = robust_bound_point(beta)
        writer.writerow([f'{v:.9g}' for v in (point.beta_ave, point.q, point.eta_star, point.bound)])
    _emit(cfg, buffer.getvalue())
    logger.info(f"Curve with {len(grid)} rows written")
    return 0


def _werner_beta(v):
    return beta_ave(run_swap(werner_swap_scenario(v)))


def _povm_beta(p):
    return beta_ave(run_swap(povm_noise_scenario(p)))


def _threshold_row(name, level, beta):
    point = robust_bound_point(beta)
    verdict = CERTIFIED if point.bound > QSEP_BSM + 1e-12 else INCONCLUSIVE
    return {name: _sig(level), 'beta_ave': _sig(beta), 'bound': _sig(point.bound), 'verdict': verdict}


def cmd_noise_threshold(cfg: RunConfig):
    qsep = QSEP_BSM
    if cfg.noise in ('none', 'werner'):
        v_lo = float(np.sqrt(SWEEP_FLOOR / TSIRELSON))
        v_star = brentq(lambda v: robust_bound_point(_werner_beta(v)).bound - qsep, v_lo, 1.0, xtol=1e-12)
        beta = _werner_beta(v_star)
        payload = {
            'noise': 'werner',
            'v_star': v_star,
            'one_minus_v2': 1 - v_star ** 2,
            'beta_at_threshold': beta,
            'rows': [_threshold_row('v', 1.0, _werner_beta(1.0)), _threshold_row('v', v_lo, _werner_beta(v_lo))],
        }
        logger.info(f"Werner threshold v*={v_star:.9f} (1 - v*^2 = {1 - v_star ** 2:.6f})")
    elif cfg.noise == 'povm':
        p_hi = 1 - SWEEP_FLOOR / TSIRELSON
        p_star = brentq(lambda p: robust_bound_point(_povm_beta(p)).bound - qsep, 0.0, p_hi, xtol=1e-12)
        beta = _povm_beta(p_star)
        payload = {
            'noise': 'povm',
            'p_star': p_star,
            'beta_at_threshold': beta,
            'rows': [_threshold_row('p', 0.0, _povm_beta(0.0)), _threshold_row('p', p_hi, _povm_beta(p_hi))],
        }
        logger.info(f"POVM threshold p*={p_star:.9f}")
    else:
        raise ConfigError(f"noise-threshold supports werner or povm noise, got {cfg.noise}")
    _emit_json(cfg, payload)
    return 0


def cmd_suite(cfg: RunConfig):
    results = run_suites(cfg.seed, names=cfg.suites or None)
    lines = [r.line() for r in results]
    _emit(cfg, '\n'.join(lines) + '\n')
    failed = [r for r in results if not r.passed]
    if failed:
        logger.error(f"{len(failed)} suite(s) failed; first: {failed[0].name}: {failed[0].detail}")
        return 1
    logger.info(f"All {len(results)} suites passed (seed {cfg.seed})")
    return 0


COMMANDS = {
    'verify': cmd_verify,
    'curve': cmd_curve,
    'noise-threshold': cmd_noise_threshold,
    'suite': cmd_suite,
}


def parse_args(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--env-file', type=str, help='Path to environment file')
    common.add_argument('--config', type=str, help='Flat key=value run configuration')
    common.add_argument('--verbose', action='store_true', help='Debug logging')
    common.add_argument('--scenario', choices=SCENARIOS)
    common.add_argument('--noise', choices=NOISE_MODELS)
    common.add_argument('--v', type=float, help='Werner visibility of the sources')
    common.add_argument('--p', type=float, help='White-noise level of the central measurement')
    common.add_argument('--angle', type=float, help="Misalignment of Charlie's settings (radians)")
    common.add_argument('--theta', type=float, help='Tilt angle in (0, pi/4]')
    common.add_argument('--from', dest='sweep_from', type=float, help='Curve start')
    common.add_argument('--to', dest='sweep_to', type=float, help='Curve end')
    common.add_argument('--step', type=float, help='Curve step (default: CURVE_POINTS points)')
    common.add_argument('--seed', type=int, help='Seed for randomized suites')
    common.add_argument('--out', type=str, help='Output file (written atomically)')
    common.add_argument('--expect', choices=VERDICTS, help='Expected verdict of verify')
    common.add_argument('--only', dest='suites', action='append', choices=sorted(SUITES),
                        help='Run only this suite (repeatable)')

    parser = argparse.ArgumentParser(description='Self-testing of entangled measurements')
    sub = parser.add_subparsers(dest='command', required=True)
    for name, help_text in (
        ('verify', 'Certify one scenario'),
        ('curve', 'Robust bound curve as CSV'),
        ('noise-threshold', 'Noise level where certification stops'),
        ('suite', 'Run the invariant suites'),
    ):
        sub.add_parser(name, help=help_text, parents=[common])
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    load_environment(args.env_file)
    Config.init_app(os.getenv('APP_ENV', 'development'))
    setup_logging(args.verbose)

    try:
        cfg = build_run_config(args)
        logger.debug(f"Run configuration: {cfg}")
        return COMMANDS[cfg.command](cfg)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 2
    except CertificationError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
