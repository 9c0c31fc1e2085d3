import json

import pytest

from deformlearn.config import (ConfigError, DEFAULTS, load_run_config,
                                schema, validate)
from tests.util.base import absolute_path


def write_json(tmpdir, values):
    path = tmpdir.join('run.json')
    path.write(json.dumps(values))
    return str(path)


def test_test_environment_is_loaded(config):
    assert config['TEMPLATE_RINGS'] == 4
    assert config['LOGLEVEL'] == 10
    # Untouched keys keep their defaults.
    assert config['REGIST_W_DENSE'] == DEFAULTS['REGIST_W_DENSE']


def test_get_required(cfg):
    assert cfg.get_required('SEED') == cfg['SEED']
    with pytest.raises(ConfigError):
        cfg.get_required('NOT_A_KEY')


def test_validate_coerces_ints_to_floats():
    assert validate({'REGIST_LR': 1}) == {'REGIST_LR': 1.0}
    assert isinstance(validate({'REGIST_LR': 1})['REGIST_LR'], float)


@pytest.mark.parametrize('values', [
    {'NOT_A_KEY': 1},
    {'REGIST_LR': 'fast'},
    {'THREADS': 2.5},
    {'THREADS': True},
    {'REGIST_STIFF': 1},
    {'STRATEGY': 'three-step'},
    {'SEED': None},
    {'PRIOR_STEPS': 'many'},
    [],
])
def test_validate_rejects(values):
    with pytest.raises(ConfigError):
        validate(values)


def test_optional_keys_accept_null():
    assert validate({'PRIOR_PATH': None, 'PRIOR_STEPS': 3}) == \
        {'PRIOR_PATH': None, 'PRIOR_STEPS': 3}


def test_load_run_config_layers(config, tmpdir):
    path = write_json(tmpdir, {'SEED': 7, 'REGIST_ITERATIONS': 5})
    run = load_run_config(path, ['SEED=9', 'STRATEGY=single-step',
                                 'PRIOR_VIEWS_DEG=[90, 180]'])
    assert run['SEED'] == 9
    assert run['REGIST_ITERATIONS'] == 5
    assert run['STRATEGY'] == 'single-step'
    assert run['PRIOR_VIEWS_DEG'] == [90, 180]
    # The process-wide config is not modified.
    assert config['SEED'] == DEFAULTS['SEED']


def test_load_run_config_errors(tmpdir):
    with pytest.raises(ConfigError):
        load_run_config(str(tmpdir.join('missing.json')))
    bad = tmpdir.join('bad.json')
    bad.write('{"SEED": ')
    with pytest.raises(ConfigError):
        load_run_config(str(bad))
    with pytest.raises(ConfigError):
        load_run_config(overrides=['SEED'])


def test_schema_matches_checked_in_copy():
    with open(absolute_path('../docs/config-schema.json')) as f:
        assert json.load(f) == schema()


def test_schema_covers_every_key():
    properties = schema()['properties']
    assert set(properties) == set(DEFAULTS)
    assert properties['PRIOR_PATH']['type'] == ['string', 'null']
    assert properties['STRATEGY']['enum'] == ['deform-learn', 'single-step']
