"""
Conversion of per-pixel (part, u, v) maps into sample annotations.

The input is a JSON file

    {"width": W, "height": H, "sample_id": "...",
     "grid": [[null | [part, u, v], ...], ...],
     "keypoints": [[x, y, visible], ...]}

with one grid row per image row. Part 0 is background; parts 1..J map to
template parts 0..J-1. Keypoints are optional and default to invisible.
"""
import json
import os

import numpy as np

from deformlearn.config import config
from deformlearn.exc import ContractViolation, MalformedFileError
from deformlearn.formats.annotation import (finite_number, number_rows,
                                            whole_number)
from deformlearn.formats.uv import UvIndex
from deformlearn.log import get_logger
from deformlearn.registration.annotation import SampleAnnotation
log = get_logger()


def foreground_pixels(grid, path='<grid>'):
    """ (pixels (m, 2), parts (m,), uv (m, 2)) of the non-background cells,
    row-major. """
    if not isinstance(grid, list):
        raise MalformedFileError(path, 'expected a list of rows',
                                 field='grid')
    pixels, parts, uvs = [], [], []
    for row_index, row in enumerate(grid):
        if not isinstance(row, list):
            raise MalformedFileError(path, 'expected a list', line=row_index,
                                     field='grid')
        for col, cell in enumerate(row):
            if cell is None:
                continue
            if not isinstance(cell, list) or len(cell) != 3:
                raise MalformedFileError(path, 'cell {} is not [part, u, v]'
                                         .format(col), line=row_index,
                                         field='grid')
            if isinstance(cell[0], float):
                raise MalformedFileError(path, 'bad part id {!r}'.format(
                    cell[0]), line=row_index, field='grid')
            part = whole_number(path, cell[0], 'grid', row_index)
            if part == 0:
                continue
            u, v = (finite_number(path, c, 'grid', row_index)
                    for c in cell[1:])
            if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
                raise MalformedFileError(path, 'uv outside the unit square',
                                         line=row_index, field='grid')
            pixels.append((col + 0.5, row_index + 0.5))
            parts.append(part - 1)
            uvs.append((u, v))
    return (np.array(pixels, dtype=np.float64).reshape(-1, 2),
            np.array(parts, dtype=np.int64), np.array(uvs).reshape(-1, 2))


def stride_subsample(count, max_points):
    """ At most `max_points` indices spread uniformly over range(count). """
    if count <= max_points:
        return np.arange(count)
    stride = int(np.ceil(count / float(max_points)))
    return np.arange(0, count, stride)[:max_points]


def convert_grid(data, template, path='<grid>', max_points=None,
                 sample_id=None):
    """
    Build a SampleAnnotation from a decoded grid file.

    Raises
    ------
    MalformedFileError
        For structural problems or parts the template does not have.
    """
    max_points = max_points or config['DENSEPOSE_MAX_POINTS']
    if not isinstance(data, dict):
        raise MalformedFileError(path, 'expected a JSON object')
    for key in ('width', 'height', 'grid'):
        if key not in data:
            raise MalformedFileError(path, 'missing', field=key)
    pixels, parts, uvs = foreground_pixels(data['grid'], path)
    keep = stride_subsample(len(pixels), max_points)
    index = UvIndex(template)
    try:
        vertices = index.lookup_many(parts[keep], uvs[keep])
    except ContractViolation as e:
        raise MalformedFileError(path, str(e), field='grid')
    if data.get('keypoints') is None:
        keypoints = np.zeros((template.num_keypoints, 3))
    else:
        keypoints = np.array(number_rows(path, data, 'keypoints', (3,)))
    width = whole_number(path, data['width'], 'width', minimum=1)
    height = whole_number(path, data['height'], 'height', minimum=1)
    sample_id = sample_id or data.get('sample_id') or \
        os.path.splitext(os.path.basename(path))[0]
    try:
        annotation = SampleAnnotation(sample_id, pixels[keep], vertices,
                                      keypoints, width=width, height=height,
                                      tags=data.get('tags'))
        annotation.check(template, need_dense=False)
    except (ContractViolation, TypeError, ValueError) as e:
        raise MalformedFileError(path, str(e))
    log.info('converted dense grid', sample_id=sample_id,
             foreground=len(pixels), kept=len(keep))
    return annotation


def read_grid(path, template, max_points=None):
    with open(path) as f:
        try:
            data = json.load(f)
        except ValueError as e:
            raise MalformedFileError(path, 'invalid JSON: {}'.format(e))
    return convert_grid(data, template, path, max_points)
