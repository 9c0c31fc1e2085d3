"""
Mesh export: Wavefront OBJ (v and f records, 1-based) and an SVG overlay of
the projected mesh with the annotation drawn on top.
"""
import numpy as np

from deformlearn.exc import MalformedFileError

FLOAT_FORMAT = '{:.9g}'


def write_obj(path, vertices, faces=None):
    """ Faces may be empty or None for a point cloud. """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.zeros((0, 3), dtype=np.int64) if faces is None else \
        np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    with open(path, 'w') as f:
        f.write('# {} vertices, {} faces\n'.format(len(vertices), len(faces)))
        for v in vertices:
            f.write('v {}\n'.format(' '.join(FLOAT_FORMAT.format(x)
                                             for x in v)))
        for face in faces:
            f.write('f {} {} {}\n'.format(*(face + 1)))


def read_obj(path):
    """
    (vertices (n, 3), faces (m, 3)) of an OBJ file. Only v and triangular
    f records are read; texture and normal indices (f 1/1/1) are dropped.

    Raises
    ------
    MalformedFileError
        With the 1-based line number.
    """
    vertices, faces = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts or parts[0].startswith('#'):
                continue
            if parts[0] == 'v':
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise MalformedFileError(path, 'bad vertex', line=lineno,
                                             field='v')
                if len(vertices[-1]) != 3:
                    raise MalformedFileError(path, 'vertex needs 3 values',
                                             line=lineno, field='v')
            elif parts[0] == 'f':
                if len(parts) != 4:
                    raise MalformedFileError(path, 'only triangles are '
                                             'supported', line=lineno,
                                             field='f')
                try:
                    face = [int(p.split('/')[0]) - 1 for p in parts[1:]]
                except ValueError:
                    raise MalformedFileError(path, 'bad face', line=lineno,
                                             field='f')
                if min(face) < 0:
                    raise MalformedFileError(path, 'face index out of range',
                                             line=lineno, field='f')
                faces.append(face)
    vertices = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) and faces.max() >= len(vertices):
        raise MalformedFileError(path, 'face index out of range', field='f')
    return vertices, faces


def export_mesh(posed, path, template=None):
    """ OBJ of a PosedBody; the template supplies the faces (a point cloud
    is written without one). """
    faces = None if template is None else template.faces
    write_obj(path, posed.vertex_world, faces)


def _polygon(points):
    return ' '.join('{:.2f},{:.2f}'.format(x, y) for x, y in points)


def write_overlay(path, projected, faces, width, height, annotation=None,
                  keypoints=None):
    """
    SVG of the projected mesh (faces towards the camera only), the annotated
    dense points, the annotated keypoints (green) and, if given, the fitted
    keypoints (red).
    """
    projected = np.asarray(projected, dtype=np.float64)
    out = ['<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" '
           'viewBox="0 0 {} {}">'.format(width, height, width, height),
           '<rect width="100%" height="100%" fill="white"/>']
    tri = projected[np.asarray(faces, dtype=np.int64)]
    # The camera looks along +z, so visible faces have normal z < 0.
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    facing = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    for corners in tri[facing]:
        out.append('<polygon points="{}" fill="#bcd" fill-opacity="0.4" '
                   'stroke="#567" stroke-width="0.3"/>'.format(
                       _polygon(corners)))
    if annotation is not None:
        for x, y in annotation.dense_points:
            out.append('<circle cx="{:.2f}" cy="{:.2f}" r="0.8" '
                       'fill="#36c"/>'.format(x, y))
        for x, y, visible in annotation.keypoints:
            if visible > 0:
                out.append('<circle cx="{:.2f}" cy="{:.2f}" r="2" '
                           'fill="#2a2"/>'.format(x, y))
    if keypoints is not None:
        for x, y in np.asarray(keypoints)[:, :2]:
            out.append('<circle cx="{:.2f}" cy="{:.2f}" r="2" '
                       'fill="#c22"/>'.format(x, y))
    out.append('</svg>')
    with open(path, 'w') as f:
        f.write('\n'.join(out))
        f.write('\n')
