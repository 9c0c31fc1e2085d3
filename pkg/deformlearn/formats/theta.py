"""
Body parameter files.

A single theta is stored as {"sample_id": ..., "a": [[...]], "S": [...],
"R": [[...]], "s": ..., "t": [...]}; a store (one theta per sample, as
written for theta_anno) as {"<sample id>": {"a": ..., ...}, ...}.
"""
import json
import os

from deformlearn.exc import ContractViolation, MalformedFileError
from deformlearn.models.body import BodyParams

THETA_FIELDS = ('a', 'S', 'R', 's', 't')
THETA_SUFFIX = '.json'


def theta_from_dict(data, path='<theta>', num_joints=None, record=None):
    if not isinstance(data, dict):
        raise MalformedFileError(path, 'expected a JSON object', line=record)
    for field in THETA_FIELDS:
        if field not in data:
            raise MalformedFileError(path, 'missing', line=record,
                                     field=field)
    try:
        params = BodyParams.from_dict(data)
    except (ContractViolation, TypeError, ValueError, OverflowError) as e:
        raise MalformedFileError(path, str(e), line=record)
    if num_joints is not None and params.num_joints != num_joints:
        raise MalformedFileError(path, 'expected {} joints, got {}'.format(
            num_joints, params.num_joints), line=record, field='a')
    if not params.is_finite():
        raise MalformedFileError(path, 'non-finite value', line=record)
    return params


def _load(path):
    with open(path) as f:
        try:
            return json.load(f)
        except ValueError as e:
            raise MalformedFileError(path, 'invalid JSON: {}'.format(e))


def read_theta(path, num_joints=None):
    """ (sample id or None, BodyParams) """
    data = _load(path)
    params = theta_from_dict(data, path, num_joints)
    return data.get('sample_id'), params


def write_theta(params, path, sample_id=None):
    data = params.to_dict()
    if sample_id is not None:
        data['sample_id'] = sample_id
    with open(path, 'w') as f:
        json.dump(data, f)


def read_theta_dir(directory, num_joints=None):
    """ Every theta file of a directory, keyed by sample id (or by file
    name when the file carries none). """
    thetas = {}
    for name in sorted(os.listdir(directory)):
        if not name.endswith(THETA_SUFFIX):
            continue
        sample_id, params = read_theta(os.path.join(directory, name),
                                       num_joints)
        thetas[sample_id or name[:-len(THETA_SUFFIX)]] = params
    return thetas


def write_theta_dir(thetas, directory):
    for sample_id, params in thetas.items():
        write_theta(params, os.path.join(directory,
                                         sample_id + THETA_SUFFIX),
                    sample_id)


def read_theta_store(path, num_joints=None):
    data = _load(path)
    if not isinstance(data, dict):
        raise MalformedFileError(path, 'expected a JSON object')
    return {sample_id: theta_from_dict(value, path, num_joints, record=k)
            for k, (sample_id, value) in enumerate(sorted(data.items()))}


def write_theta_store(thetas, path):
    with open(path, 'w') as f:
        json.dump({sample_id: params.to_dict()
                   for sample_id, params in sorted(thetas.items())}, f)
