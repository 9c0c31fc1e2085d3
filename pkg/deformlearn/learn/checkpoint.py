"""
Checkpoint directory of a deform-learn run:

    state.json              round index, sample splits, regressor history,
                            random generator state
    regressor.json          latest regressor weights
    history.csv             one row per finished round
    round_<k>/theta_anno.json
"""
import csv
import json
import os

import numpy as np

from deformlearn.exc import MalformedFileError
from deformlearn.formats.theta import read_theta_store, write_theta_store
from deformlearn.learn.regressor import Regressor
from deformlearn.log import get_logger
from deformlearn.util.file import mkdirp
log = get_logger()

STATE_FILE = 'state.json'
REGRESSOR_FILE = 'regressor.json'
HISTORY_FILE = 'history.csv'
THETA_ANNO_FILE = 'theta_anno.json'

HISTORY_FIELDS = ('round', 'samples', 'aborted', 'registration_loss',
                  'regressor_loss', 'init_mpjpe', 'registration_mpjpe',
                  'train_mpjpe', 'holdout_mpjpe')


def round_dir(directory, round_index):
    return os.path.join(directory, 'round_{}'.format(round_index))


def _cell(value):
    return '' if value is None else value


def write_history(rows, path):
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=HISTORY_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in HISTORY_FIELDS})


def read_history(path):
    """ Rows of a history file; empty cells read as None. """
    rows = []
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or \
                tuple(reader.fieldnames) != HISTORY_FIELDS:
            raise MalformedFileError(path, 'unexpected header', line=1)
        for lineno, raw in enumerate(reader, 2):
            row = {}
            for key in HISTORY_FIELDS:
                value = raw[key]
                if value in ('', None):
                    row[key] = None
                    continue
                try:
                    row[key] = int(value) if key in ('round', 'samples',
                                                     'aborted') \
                        else float(value)
                except ValueError:
                    raise MalformedFileError(path, 'not a number: {!r}'
                                             .format(value), line=lineno,
                                             field=key)
            rows.append(row)
    return rows


def save_checkpoint(state, directory):
    mkdirp(directory)
    target = round_dir(directory, state.round_index)
    mkdirp(target)
    write_theta_store(state.theta_anno, os.path.join(target,
                                                     THETA_ANNO_FILE))
    if state.regressor is not None:
        state.regressor.save(os.path.join(directory, REGRESSOR_FILE))
    write_history(state.history, os.path.join(directory, HISTORY_FILE))
    with open(os.path.join(directory, STATE_FILE), 'w') as f:
        json.dump({'round': state.round_index,
                   'strategy': state.strategy,
                   'train_ids': state.train_ids,
                   'holdout_ids': state.holdout_ids,
                   'regressor_history': state.regressor_history,
                   'rng_state': state.rng_state}, f)
    log.info('wrote checkpoint', directory=directory,
             round=state.round_index)


def load_checkpoint(directory, num_joints=None):
    """
    TrainState of the last round written to `directory`.

    Raises
    ------
    MalformedFileError
        If a file is missing or invalid.
    """
    from deformlearn.learn.loop import TrainState
    path = os.path.join(directory, STATE_FILE)
    if not os.path.isfile(path):
        raise MalformedFileError(path, 'no checkpoint state')
    with open(path) as f:
        try:
            data = json.load(f)
        except ValueError as e:
            raise MalformedFileError(path, 'invalid JSON: {}'.format(e))
    for key in ('round', 'strategy', 'train_ids', 'holdout_ids'):
        if key not in data:
            raise MalformedFileError(path, 'missing', field=key)
    round_index = data['round']
    rng_state = data.get('rng_state')
    if rng_state is not None:
        try:
            np.random.default_rng().bit_generator.state = rng_state
        except (TypeError, ValueError, KeyError) as e:
            raise MalformedFileError(path, str(e), field='rng_state')
    theta_anno = {}
    if round_index > 0:
        theta_path = os.path.join(round_dir(directory, round_index),
                                  THETA_ANNO_FILE)
        if not os.path.isfile(theta_path):
            raise MalformedFileError(theta_path, 'missing theta_anno')
        theta_anno = read_theta_store(theta_path, num_joints)
    regressor = None
    regressor_path = os.path.join(directory, REGRESSOR_FILE)
    if os.path.isfile(regressor_path):
        regressor = Regressor.load(regressor_path)
    history_path = os.path.join(directory, HISTORY_FILE)
    history = read_history(history_path) \
        if os.path.isfile(history_path) else []
    return TrainState(round_index, theta_anno, regressor, history,
                      data.get('regressor_history', []), data['train_ids'],
                      data['holdout_ids'], data['strategy'], rng_state)
