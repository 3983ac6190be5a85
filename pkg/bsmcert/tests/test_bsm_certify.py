import csv
import json
import logging
from logging.handlers import RotatingFileHandler

import pytest

from bsm_certify import load_config_file, main, parse_args
from core.certify import CERTIFIED, INCONCLUSIVE, PRECONDITION_FAILED, REPORT_KEYS
from core.exceptions import ConfigError


def _report(capsys):
    return json.loads(capsys.readouterr().out)


def test_verify_ideal_bsm(clean_env, capsys):
    assert main(['verify', '--scenario', 'bsm']) == 0
    report = _report(capsys)
    assert tuple(report) == REPORT_KEYS
    assert report['verdict'] == CERTIFIED
    assert report['q'] == pytest.approx(1.0)
    assert report['qsep'] == 0.5


def test_verify_werner(clean_env, capsys):
    assert main(['verify', '--noise', 'werner', '--v', '0.98']) == 0
    report = _report(capsys)
    assert report['verdict'] == CERTIFIED
    assert report['beta_ave'] == pytest.approx(2.71640, abs=1e-4)
    assert len(report['fidelities']) == 4


def test_verify_inconclusive_needs_expect(clean_env, capsys):
    assert main(['verify', '--noise', 'werner', '--v', '0.96']) == 1
    assert _report(capsys)['verdict'] == INCONCLUSIVE
    assert main(['verify', '--noise', 'werner', '--v', '0.96', '--expect', INCONCLUSIVE]) == 0


def test_verify_misaligned(clean_env, capsys):
    assert main(['verify', '--noise', 'misalign', '--angle', '0.1']) == 0
    assert _report(capsys)['verdict'] == CERTIFIED


def test_verify_ghz_with_noise_fails_precondition(clean_env, capsys):
    assert main(['verify', '--scenario', 'ghz', '--noise', 'werner', '--v', '0.99']) == 1
    report = _report(capsys)
    assert report['verdict'] == PRECONDITION_FAILED
    assert 'Mermin' in report['detail']
    assert report['qsep'] == 0.5


def test_verify_tilted(clean_env, capsys):
    assert main(['verify', '--scenario', 'tilted', '--theta', '0.5']) == 0
    report = _report(capsys)
    assert report['scenario'] == 'tilted'
    assert report['verdict'] == CERTIFIED


def test_verify_writes_output_file(clean_env):
    out = clean_env / 'reports' / 'bsm.json'
    assert main(['verify', '--out', str(out)]) == 0
    assert json.loads(out.read_text())['verdict'] == CERTIFIED
    assert not [p for p in out.parent.iterdir() if p.name.endswith('.tmp')]


def test_curve(clean_env):
    out = clean_env / 'curve.csv'
    assert main(['curve', '--from', '2.6', '--step', '0.02', '--out', str(out)]) == 0
    with open(out, newline='') as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ['beta_ave', 'q', 'eta_star', 'bound']
    values = [[float(x) for x in row] for row in rows[1:]]
    assert values[0][0] == pytest.approx(2.6)
    assert values[-1][0] == pytest.approx(2.82842712, abs=1e-8)
    assert values[-1][3] == pytest.approx(1.0, abs=1e-8)
    crossing = [row for row in values if abs(row[3] - 0.5) < 1e-8]
    assert len(crossing) == 1
    assert crossing[0][0] == pytest.approx(2.689, abs=0.01)
    assert all(b[0] > a[0] for a, b in zip(values, values[1:]))


def test_curve_rejects_range_below_two(clean_env):
    assert main(['curve', '--from', '1.9']) == 2
    assert main(['curve', '--from', '2.8', '--to', '2.7']) == 2


def test_noise_threshold(clean_env, capsys):
    assert main(['noise-threshold']) == 0
    payload = _report(capsys)
    assert payload['noise'] == 'werner'
    assert 0.045 <= payload['one_minus_v2'] <= 0.055
    assert payload['beta_at_threshold'] == pytest.approx(2.689, abs=0.01)
    assert [row['verdict'] for row in payload['rows']] == [CERTIFIED, INCONCLUSIVE]


def test_suite_subset(clean_env, capsys):
    assert main(['suite', '--only', 'qsep-witness', '--only', 'lemma1-dual']) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split()[:2] for line in lines] == [['PASS', 'qsep-witness'], ['PASS', 'lemma1-dual']]


def test_config_file_layering(clean_env, capsys):
    config = clean_env / 'run.conf'
    config.write_text('scenario=bsm\nnoise=werner\nv=0.5  # far below threshold\nexpect=precondition-failed\n')
    assert main(['verify', '--config', str(config)]) == 0
    assert _report(capsys)['verdict'] == PRECONDITION_FAILED
    # flags win over the file
    assert main(['verify', '--config', str(config), '--v', '0.99', '--expect', CERTIFIED]) == 0
    assert _report(capsys)['verdict'] == CERTIFIED


def test_config_file_errors(clean_env):
    bad = clean_env / 'bad.conf'
    bad.write_text('colour=blue\n')
    with pytest.raises(ConfigError):
        load_config_file(str(bad))
    assert main(['verify', '--config', str(bad)]) == 2
    assert main(['verify', '--config', str(clean_env / 'missing.conf')]) == 2


def test_invalid_values_exit_two(clean_env):
    assert main(['verify', '--noise', 'werner', '--v', '1.5']) == 2
    assert main(['verify', '--scenario', 'ghz', '--noise', 'povm']) == 2


def test_parse_args_requires_verb():
    with pytest.raises(SystemExit):
        parse_args([])
    args = parse_args(['suite', '--only', 'g-bound', '--seed', '3'])
    assert args.command == 'suite'
    assert args.suites == ['g-bound']
    assert args.seed == 3


def test_log_file(clean_env, monkeypatch):
    monkeypatch.setenv('LOG_DIR', str(clean_env / 'logs'))
    assert main(['verify']) == 0
    assert (clean_env / 'logs' / 'bsmcert.log').is_file()
    root = logging.getLogger()
    for handler in [h for h in root.handlers if isinstance(h, RotatingFileHandler)]:
        root.removeHandler(handler)
        handler.close()
