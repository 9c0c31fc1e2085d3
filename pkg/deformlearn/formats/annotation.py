"""
Sample annotation files.

One JSON object per sample:

    {"sample_id": "s0001", "width": 256, "height": 256,
     "keypoints": [[x, y, visible], ...],
     "dense": [[px, py, vertex], ...] or [[px, py, part, u, v], ...],
     "gan_depths": [z or null, ...] or null,
     "tags": ["synthetic"]}

Dense entries with five values are matched to a vertex through the part's
UV chart when read.
"""
import json
import math
import os

import numpy as np

from deformlearn.exc import ContractViolation, MalformedFileError
from deformlearn.formats.uv import UvIndex
from deformlearn.registration.annotation import SampleAnnotation

ANNOTATION_SUFFIX = '.json'


def _load_json(path):
    with open(path) as f:
        try:
            return json.load(f)
        except ValueError as e:
            raise MalformedFileError(path, 'invalid JSON: {}'.format(e))


def finite_number(path, value, field, line=None):
    """ A JSON number as a float; booleans, NaN and infinities raise
    MalformedFileError. """
    if not isinstance(value, bool) and isinstance(value, (int, float)):
        try:
            if math.isfinite(value):
                return float(value)
        except OverflowError:
            pass
    raise MalformedFileError(path, 'expected a finite number, got {!r}'.format(
        value), line=line, field=field)


def whole_number(path, value, field, line=None, minimum=0):
    value = finite_number(path, value, field, line)
    if value != int(value) or value < minimum:
        raise MalformedFileError(path, 'expected an integer >= {}'.format(
            minimum), line=line, field=field)
    return int(value)


def number_rows(path, data, field, widths):
    rows = data.get(field, [])
    if not isinstance(rows, list):
        raise MalformedFileError(path, 'expected a list', field=field)
    parsed = []
    for k, row in enumerate(rows):
        if not isinstance(row, list) or len(row) not in widths:
            raise MalformedFileError(
                path, 'expected {} values'.format(
                    ' or '.join(str(w) for w in widths)),
                line=k, field=field)
        parsed.append([finite_number(path, v, field, k) for v in row])
    return parsed


def annotation_from_dict(data, path='<annotation>', template=None,
                         uv_index=None):
    """
    Build a SampleAnnotation from its JSON form.

    Raises
    ------
    MalformedFileError
        With the offending record and field.
    """
    if not isinstance(data, dict):
        raise MalformedFileError(path, 'expected a JSON object')
    for key in ('sample_id', 'keypoints'):
        if key not in data:
            raise MalformedFileError(path, 'missing', field=key)
    keypoints = number_rows(path, data, 'keypoints', (3,))
    dense = number_rows(path, data, 'dense', (3, 5))
    points = np.array([row[:2] for row in dense]).reshape(-1, 2)
    indices = []
    for k, row in enumerate(dense):
        if len(row) == 3:
            indices.append(whole_number(path, row[2], 'dense', k))
            continue
        if template is None:
            raise MalformedFileError(path, 'part/uv entries need a template',
                                     line=k, field='dense')
        uv_index = uv_index or UvIndex(template)
        try:
            indices.append(uv_index.lookup(
                whole_number(path, row[2], 'dense', k), row[3:]))
        except ContractViolation as e:
            raise MalformedFileError(path, str(e), line=k, field='dense')

    depths = data.get('gan_depths')
    if depths is not None:
        if not isinstance(depths, list):
            raise MalformedFileError(path, 'expected a list or null',
                                     field='gan_depths')
        depths = [float('nan') if z is None else
                  finite_number(path, z, 'gan_depths', k)
                  for k, z in enumerate(depths)]
    tags = data.get('tags') or []
    if not isinstance(tags, list) or \
            not all(isinstance(t, str) for t in tags):
        raise MalformedFileError(path, 'expected a list of strings',
                                 field='tags')
    try:
        annotation = SampleAnnotation(
            data['sample_id'], points, indices,
            np.array(keypoints).reshape(-1, 3), depths,
            whole_number(path, data.get('width', 256), 'width', minimum=1),
            whole_number(path, data.get('height', 256), 'height', minimum=1),
            tags)
    except (ContractViolation, TypeError, ValueError) as e:
        raise MalformedFileError(path, str(e))
    if template is not None:
        try:
            annotation.check(template, need_dense=False)
        except ContractViolation as e:
            raise MalformedFileError(path, str(e))
    return annotation


def annotation_to_dict(annotation):
    depths = None
    if annotation.gan_depths is not None:
        depths = [None if not math.isfinite(z) else float(z)
                  for z in annotation.gan_depths]
    return {
        'sample_id': annotation.sample_id,
        'width': annotation.width,
        'height': annotation.height,
        'keypoints': annotation.keypoints.tolist(),
        'dense': [[float(x), float(y), int(i)] for (x, y), i in
                  zip(annotation.dense_points, annotation.dense_indices)],
        'gan_depths': depths,
        'tags': list(annotation.tags),
    }


def read_annotation(path, template=None, uv_index=None):
    return annotation_from_dict(_load_json(path), path, template, uv_index)


def write_annotation(annotation, path):
    with open(path, 'w') as f:
        json.dump(annotation_to_dict(annotation), f)


def annotation_paths(directory):
    """ Annotation files of a directory, in name order. """
    if not os.path.isdir(directory):
        raise MalformedFileError(directory, 'not a directory')
    return [os.path.join(directory, name)
            for name in sorted(os.listdir(directory))
            if name.endswith(ANNOTATION_SUFFIX)]


def read_annotations(directory, template=None):
    uv_index = UvIndex(template) if template is not None else None
    return [read_annotation(path, template, uv_index)
            for path in annotation_paths(directory)]


def write_annotations(annotations, directory):
    for annotation in annotations:
        write_annotation(annotation, os.path.join(
            directory, annotation.sample_id + ANNOTATION_SUFFIX))


def read_keypoint_records(path):
    """
    2D poses for prior training, one JSON object per line:

        {"keypoints": [[x, y, visible], ...], "depths": [z, ...]}

    "depths" (true root-centered depths, for scoring) is optional. Blank
    lines are skipped. Line numbers in errors are 1-based.

    Returns
    -------
    list of ((N, 3) array, (N,) array or None)
    """
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as e:
                raise MalformedFileError(path, 'invalid JSON: {}'.format(e),
                                         line=lineno)
            if not isinstance(record, dict) or 'keypoints' not in record:
                raise MalformedFileError(path, 'missing', line=lineno,
                                         field='keypoints')
            rows = record['keypoints']
            if not isinstance(rows, list) or not rows or \
                    not all(isinstance(r, list) and len(r) == 3
                            for r in rows):
                raise MalformedFileError(path, 'expected rows of 3 values',
                                         line=lineno, field='keypoints')
            keypoints = np.array([[finite_number(path, v, 'keypoints', lineno)
                                   for v in row] for row in rows])
            depths = record.get('depths')
            if depths is not None:
                if not isinstance(depths, list) or \
                        len(depths) != len(rows):
                    raise MalformedFileError(path, 'expected one depth per '
                                             'keypoint', line=lineno,
                                             field='depths')
                depths = np.array([finite_number(path, z, 'depths', lineno)
                                   for z in depths])
            records.append((keypoints, depths))
    return records


def read_keypoint_sets(path):
    return [keypoints for keypoints, _ in read_keypoint_records(path)]


def write_keypoint_sets(keypoint_sets, path, depths=None):
    with open(path, 'w') as f:
        for k, keypoints in enumerate(keypoint_sets):
            record = {'keypoints': np.asarray(keypoints).tolist()}
            if depths is not None:
                record['depths'] = np.asarray(depths[k]).tolist()
            f.write(json.dumps(record))
            f.write('\n')
