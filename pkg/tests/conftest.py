""" Fixtures don't go here; see util/base.py. """
import os

# Must be set before deformlearn.config is first imported.
os.environ['DEFORMLEARN_ENV'] = 'test'

# fixtures that are available by default
from tests.util.base import (config, cfg, log, template,  # noqa
                             small_template, rng, synthetic_samples,
                             out_dir)
