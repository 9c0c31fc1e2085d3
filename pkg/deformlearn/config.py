import os
import json


__all__ = ['config', 'Configuration', 'ConfigError', 'DEFAULTS',
           'load_run_config', 'schema']


class ConfigError(Exception):
    def __init__(self, error=None, help=None):
        self.error = error or ''
        self.help = help or \
            'Run `deformlearn show-config` to list the known keys and ' \
            'their defaults.'

    def __str__(self):
        return '{0} {1}'.format(self.error, self.help)


class Configuration(dict):
    def __init__(self, *args, **kwargs):
        dict.__init__(self, *args, **kwargs)

    def get_required(self, key):
        if key not in self:
            raise ConfigError('Missing config value for {0}.'.format(key))

        return self[key]


# Every tunable and its default.
DEFAULTS = {
    'LOGLEVEL': 20,
    'SEED': 0,
    'THREADS': 1,
    'OUT_DIR': 'out',

    'TEMPLATE_PATH': None,
    'TEMPLATE_RINGS': 7,
    'TEMPLATE_SEGMENTS': 10,

    'REGIST_W_DENSE': 1000.0,
    'REGIST_W_KP': 1.0,
    'REGIST_W_SCALE': 10.0,
    'REGIST_W_JOINT': 0.001,
    'REGIST_W_DET': 1.0,
    'REGIST_STIFF_W_SCALE': 100.0,
    'REGIST_STIFF_W_JOINT': 1.0,
    'REGIST_LR': 0.1,
    'REGIST_BATCH_SIZE': 10,
    'REGIST_ITERATIONS_FIRST': 300,
    'REGIST_ITERATIONS': 100,
    'REGIST_STIFF': True,
    'REFINE_ITERATIONS': 50,

    'ADAM_BETA1': 0.9,
    'ADAM_BETA2': 0.999,
    'ADAM_EPS': 1e-8,

    'NUM_KEYPOINTS': 16,
    'PRIOR_PATH': None,
    'PRIOR_EPSILON': 0.1,
    'PRIOR_VIEWS_DEG': [45.0, 60.0, 90.0, 135.0, 180.0, 235.0, 270.0],
    'PRIOR_EPOCHS': 60,
    'PRIOR_BATCH_SIZE': 1024,
    'PRIOR_LR': 0.0002,
    'PRIOR_STEPS': None,
    'PRIOR_HIDDEN': 128,
    'PRIOR_LAYERS': 8,
    'PRIOR_LEAKY_SLOPE': 0.2,
    'PRIOR_LOG_EVERY': 100,
    'PRIOR_DATASET_SIZE': 4096,

    'REGRESSOR_EPOCHS': 50,
    'REGRESSOR_BATCH_SIZE': 30,
    'REGRESSOR_LR': 0.0001,
    'REGRESSOR_HIDDEN': 256,
    'REGRESSOR_LAYERS': 4,
    'REGRESSOR_DENSE_FEATURES': 64,
    'CONV_ALPHA': 1.0,
    'CONV_BETA': 10.0,
    'CONV_GAMMA': 1.0,
    'CONV_W_SCALE': 0.0,
    'CONV_W_DET': 0.0,
    'SMOOTH_L1_DELTA': 1.0,

    'STRATEGY': 'deform-learn',
    'DEFORM_LEARN_ROUNDS': 5,
    'ROUND_SAMPLE_TAGS': None,
    'HOLDOUT_FRACTION': 0.2,

    'SYNTH_COUNT': 100,
    'SYNTH_POSE_BOUND': 0.6,
    'SYNTH_SCALE_MIN': 0.8,
    'SYNTH_SCALE_MAX': 1.25,
    'SYNTH_MAX_YAW_DEG': 45.0,
    'SYNTH_MAX_TILT_DEG': 10.0,
    'SYNTH_PIXEL_NOISE': 0.0,
    'SYNTH_DENSE_POINTS': 256,
    'SYNTH_IMAGE_SIZE': 256,
    'SYNTH_GAN_DEPTHS': 'oracle',

    'DENSEPOSE_MAX_POINTS': 512,
}

# Keys whose value may legitimately be null.
OPTIONAL_KEYS = {'TEMPLATE_PATH', 'PRIOR_PATH', 'PRIOR_STEPS',
                 'ROUND_SAMPLE_TAGS'}

# Value types of the optional keys whose default is null.
OPTIONAL_TYPES = {
    'TEMPLATE_PATH': 'string',
    'PRIOR_PATH': 'string',
    'PRIOR_STEPS': 'integer',
    'ROUND_SAMPLE_TAGS': 'array',
}

CHOICES = {
    'STRATEGY': ('deform-learn', 'single-step'),
    'SYNTH_GAN_DEPTHS': ('oracle', 'none'),
}


def _type_name(value):
    if isinstance(value, bool):
        return 'boolean'
    if isinstance(value, int):
        return 'integer'
    if isinstance(value, float):
        return 'number'
    if isinstance(value, str):
        return 'string'
    if isinstance(value, list):
        return 'array'
    return 'null'


def schema():
    """ JSON schema of a run config, derived from DEFAULTS. """
    properties = {}
    for key, default in sorted(DEFAULTS.items()):
        kind = _type_name(default)
        if key in OPTIONAL_KEYS:
            kind = [OPTIONAL_TYPES.get(key, kind), 'null']
        entry = {'type': kind, 'default': default}
        if key in CHOICES:
            entry['enum'] = list(CHOICES[key])
        properties[key] = entry
    return {
        '$schema': 'http://json-schema.org/draft-07/schema#',
        'title': 'deformlearn run config',
        'type': 'object',
        'additionalProperties': False,
        'properties': properties,
    }


def _check_value(key, value):
    default = DEFAULTS[key]
    if value is None:
        if key in OPTIONAL_KEYS:
            return value
        raise ConfigError('{0} may not be null.'.format(key))
    if default is None:
        expected = {'string': str, 'integer': int, 'array': list}[
            OPTIONAL_TYPES[key]]
        if isinstance(value, bool) or not isinstance(value, expected):
            raise ConfigError('{0} must be a {1} or null, got {2!r}.'
                              .format(key, OPTIONAL_TYPES[key], value))
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError('{0} must be true or false, got {1!r}.'
                              .format(key, value))
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError('{0} must be a number, got {1!r}.'
                              .format(key, value))
        value = float(value)
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError('{0} must be an integer, got {1!r}.'
                              .format(key, value))
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError('{0} must be a string, got {1!r}.'
                              .format(key, value))
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError('{0} must be a list, got {1!r}.'
                              .format(key, value))
    if key in CHOICES and value not in CHOICES[key]:
        raise ConfigError('{0} must be one of {1}, got {2!r}.'
                          .format(key, ', '.join(CHOICES[key]), value))
    return value


def validate(values):
    """ Validate a mapping of config values, returning a coerced copy.

    Raises
    ------
    ConfigError
        If unknown keys are present or a value has the wrong type.
    """
    if not isinstance(values, dict):
        raise ConfigError('Config must be a JSON object.')
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigError('Unknown config keys {0}.'.format(unknown))
    return {key: _check_value(key, value) for key, value in values.items()}


def parse_override(item):
    """ Parse a `KEY=VALUE` command-line override. VALUE is read as JSON
    when possible and taken as a raw string otherwise. """
    if '=' not in item:
        raise ConfigError('Override {0!r} is not of the form KEY=VALUE.'
                          .format(item))
    key, raw = item.split('=', 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key, value


def load_run_config(path=None, overrides=None):
    """
    Build the configuration for one run.

    Parameters
    ----------
    path : str, optional
        JSON file with config values.
    overrides : list of str or dict, optional
        `KEY=VALUE` strings (as given to `--set`) or a plain mapping.

    Returns
    -------
    Configuration
    """
    run = Configuration(config)
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError('Config file {0} does not exist.'.format(path),
                              help='Check the --config argument.')
        with open(path) as f:
            try:
                values = json.load(f)
            except ValueError as e:
                raise ConfigError('Failed parsing configuration file at {0}: '
                                  '{1}'.format(path, e))
        run.update(validate(values))
    if overrides:
        if isinstance(overrides, dict):
            pairs = overrides.items()
        else:
            pairs = [parse_override(item) for item in overrides]
        run.update(validate(dict(pairs)))
    return run


if 'DEFORMLEARN_ENV' in os.environ:
    assert os.environ['DEFORMLEARN_ENV'] in ('dev', 'test', 'prod'), \
        "DEFORMLEARN_ENV must be either 'dev', 'test', or 'prod'"
    env = os.environ['DEFORMLEARN_ENV']
else:
    env = 'dev'

if env == 'prod':
    # Read prod config from an unversioned config file.
    config_path = '/etc/deformlearn/config.json'
else:
    root_path = os.path.join(os.path.dirname(os.path.realpath(__file__)), '..')
    config_path = os.path.join(root_path, 'etc', 'config-%s.json' % env)

config = Configuration(DEFAULTS)
if os.path.isfile(config_path):
    with open(config_path) as f:
        config.update(validate(json.load(f)))
elif env == 'prod':
    raise ConfigError('Missing config file {0}.'.format(config_path),
                      help='Run `sudo cp etc/config-dev.json '
                           '/etc/deformlearn/config.json` and retry.')
