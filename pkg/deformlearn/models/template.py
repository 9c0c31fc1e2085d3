"""
The body template: rest mesh, skeleton and the metadata the losses need.

`build_template()` generates the default low-poly humanoid, one capsule per
body part. Coordinates are meters in the camera convention: x towards the
image right (the body's left), y down, and the body faces -z.
"""
import json

import numpy as np

from deformlearn.config import config
from deformlearn.exc import ContractViolation, MalformedFileError
from deformlearn.log import get_logger
log = get_logger()

NUM_JOINTS = 24

# name, parent, rest offset from the parent (meters)
JOINTS = [
    ('pelvis', -1, (0.0, 0.0, 0.0)),
    ('left_hip', 0, (0.09, 0.08, 0.0)),
    ('right_hip', 0, (-0.09, 0.08, 0.0)),
    ('spine1', 0, (0.0, -0.12, 0.0)),
    ('left_knee', 1, (0.0, 0.40, 0.0)),
    ('right_knee', 2, (0.0, 0.40, 0.0)),
    ('spine2', 3, (0.0, -0.13, 0.0)),
    ('left_ankle', 4, (0.0, 0.40, 0.0)),
    ('right_ankle', 5, (0.0, 0.40, 0.0)),
    ('spine3', 6, (0.0, -0.06, 0.0)),
    ('left_foot', 7, (0.0, 0.06, -0.12)),
    ('right_foot', 8, (0.0, 0.06, -0.12)),
    ('neck', 9, (0.0, -0.20, 0.0)),
    ('left_collar', 9, (0.07, -0.13, 0.0)),
    ('right_collar', 9, (-0.07, -0.13, 0.0)),
    ('head', 12, (0.0, -0.10, 0.0)),
    ('left_shoulder', 13, (0.10, 0.01, 0.0)),
    ('right_shoulder', 14, (-0.10, 0.01, 0.0)),
    ('left_elbow', 16, (0.26, 0.0, 0.0)),
    ('right_elbow', 17, (-0.26, 0.0, 0.0)),
    ('left_wrist', 18, (0.25, 0.0, 0.0)),
    ('right_wrist', 19, (-0.25, 0.0, 0.0)),
    ('left_hand', 20, (0.08, 0.0, 0.0)),
    ('right_hand', 21, (-0.08, 0.0, 0.0)),
]

# Capsule radius per part (part j hangs off joint j).
PART_RADII = [0.12, 0.075, 0.075, 0.12, 0.055, 0.055, 0.12, 0.045, 0.045,
              0.13, 0.04, 0.04, 0.05, 0.05, 0.05, 0.09, 0.05, 0.05, 0.04,
              0.04, 0.035, 0.035, 0.03, 0.03]

# Parts whose capsule does not simply run to their only child.
PART_EXTENTS = {
    0: (0.0, -0.12, 0.0),
    9: (0.0, -0.20, 0.0),
    10: (0.0, 0.0, -0.08),
    11: (0.0, 0.0, -0.08),
    15: (0.0, -0.20, 0.0),
    22: (0.08, 0.0, 0.0),
    23: (-0.08, 0.0, 0.0),
}

# Elbows and knees. Axes point so that natural flexion has a negative
# projection.
HINGE_AXES = {
    4: (-1.0, 0.0, 0.0),
    5: (-1.0, 0.0, 0.0),
    18: (0.0, -1.0, 0.0),
    19: (0.0, 1.0, 0.0),
}

SYMMETRY_PAIRS = [(1, 2), (4, 5), (7, 8), (10, 11), (13, 14), (16, 17),
                  (18, 19), (20, 21), (22, 23)]

TRUNK_JOINT = 12

# 2D keypoint skeleton: name, model joint, parent keypoint
KEYPOINTS = [
    ('pelvis', 0, -1),
    ('right_hip', 2, 0),
    ('right_knee', 5, 1),
    ('right_ankle', 8, 2),
    ('left_hip', 1, 0),
    ('left_knee', 4, 4),
    ('left_ankle', 7, 5),
    ('spine', 6, 0),
    ('neck', 12, 7),
    ('head', 15, 8),
    ('left_shoulder', 16, 8),
    ('left_elbow', 18, 10),
    ('left_wrist', 20, 11),
    ('right_shoulder', 17, 8),
    ('right_elbow', 19, 13),
    ('right_wrist', 21, 14),
]

SKIN_WEIGHT_TOLERANCE = 1e-9


def _topological_order(parents):
    children = [[] for _ in parents]
    roots = []
    for j, p in enumerate(parents):
        if p < 0:
            roots.append(j)
        elif p >= len(parents):
            raise ContractViolation('joint {} has parent {} out of range'
                                    .format(j, p))
        else:
            children[p].append(j)
    if len(roots) != 1:
        raise ContractViolation('joint tree needs exactly one root, found {}'
                                .format(len(roots)))
    order = []
    stack = list(roots)
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children[j]))
    if len(order) != len(parents):
        raise ContractViolation('joint tree has a cycle')
    return order


def _symmetric_keypoint_pairs(names):
    index = {name: i for i, name in enumerate(names)}
    pairs = []
    for name, i in sorted(index.items(), key=lambda item: item[1]):
        if name.startswith('left_') and 'right_' + name[5:] in index:
            pairs.append((i, index['right_' + name[5:]]))
    return pairs


class BodyTemplate(object):
    """
    Rest mesh plus skeleton. Treated as immutable once built.

    Parameters
    ----------
    vertices : (n, 3) array
    faces : (F, 3) int array
    parents : sequence of int
        Parent joint per joint, -1 for the root.
    rest_offsets : (J, 3) array
        Offset of every joint from its parent in the rest pose.
    skin_weights : (n, J) array
        Row-stochastic and non-negative.
    part_ids : (n,) int array
        Part chart each vertex belongs to.
    part_uv : (n, 2) array
        Chart coordinates, inside the unit square.
    hinge_axes : dict of int -> 3-vector
    symmetry_pairs : list of (int, int)
        (left, right) bones, each bone named by its child joint.
    adjacency : list of lists
        Neighbouring segments per segment.
    trunk_bone : int
        Joint closing the trunk; l_trunk runs from the root to it.
    joint_names, keypoints : optional
        keypoints is a list of (name, joint, parent keypoint) triples.

    Raises
    ------
    ContractViolation
        If any structural invariant fails.
    """
    def __init__(self, vertices, faces, parents, rest_offsets, skin_weights,
                 part_ids, part_uv, hinge_axes, symmetry_pairs, adjacency,
                 trunk_bone, joint_names=None, keypoints=None):
        self.vertices = np.asarray(vertices, dtype=np.float64)
        self.faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        self.parents = np.asarray(parents, dtype=np.int64)
        self.rest_offsets = np.asarray(rest_offsets, dtype=np.float64)
        self.skin_weights = np.asarray(skin_weights, dtype=np.float64)
        self.part_ids = np.asarray(part_ids, dtype=np.int64)
        self.part_uv = np.asarray(part_uv, dtype=np.float64)
        self.hinge_axes = {int(j): np.asarray(axis, dtype=np.float64)
                           for j, axis in hinge_axes.items()}
        self.symmetry_pairs = [tuple(int(i) for i in p)
                               for p in symmetry_pairs]
        self.adjacency = [sorted(int(i) for i in adj) for adj in adjacency]
        self.trunk_bone = int(trunk_bone)
        self.joint_names = list(joint_names or
                                ['joint{}'.format(j)
                                 for j in range(len(self.parents))])
        if keypoints is None:
            keypoints = KEYPOINTS
        self.keypoint_names = [k[0] for k in keypoints]
        self.keypoint_joints = np.array([k[1] for k in keypoints],
                                        dtype=np.int64)
        self.keypoint_parents = np.array([k[2] for k in keypoints],
                                         dtype=np.int64)
        self.order = _topological_order(list(self.parents))
        self._validate()

        self.rest_joints = np.zeros((self.num_joints, 3))
        for j in self.order:
            p = self.parents[j]
            base = self.rest_joints[p] if p >= 0 else 0.0
            self.rest_joints[j] = base + self.rest_offsets[j]
        self.hinge_joints = sorted(self.hinge_axes)

    def _validate(self):
        n, J = len(self.vertices), len(self.parents)
        if self.vertices.shape != (n, 3) or n == 0:
            raise ContractViolation('vertices must be a non-empty (n, 3) '
                                    'array')
        if self.rest_offsets.shape != (J, 3):
            raise ContractViolation('rest_offsets must be ({}, 3)'.format(J))
        if self.skin_weights.shape != (n, J):
            raise ContractViolation('skin_weights must be ({}, {}), got {}'
                                    .format(n, J, self.skin_weights.shape))
        if np.any(self.skin_weights < 0):
            raise ContractViolation('skin_weights must be non-negative')
        row_error = np.abs(self.skin_weights.sum(axis=1) - 1.0).max()
        if row_error > SKIN_WEIGHT_TOLERANCE:
            raise ContractViolation('skin_weights rows must sum to 1 '
                                    '(off by {:.3g})'.format(row_error))
        if self.faces.size and (self.faces.min() < 0 or
                                self.faces.max() >= n):
            raise ContractViolation('face index out of range')
        if self.part_ids.shape != (n,) or self.part_uv.shape != (n, 2):
            raise ContractViolation('every vertex needs one part id and uv')
        if self.part_ids.min() < 0 or self.part_ids.max() >= J:
            raise ContractViolation('part id out of range')
        if np.any(self.part_uv < 0.0) or np.any(self.part_uv > 1.0):
            raise ContractViolation('part uv outside the unit square')
        if len(self.adjacency) != J:
            raise ContractViolation('adjacency needs one list per segment')
        for j, axis in self.hinge_axes.items():
            if not 0 <= j < J or abs(np.linalg.norm(axis) - 1.0) > 1e-9:
                raise ContractViolation('hinge axis {} invalid'.format(j))
        for pair in self.symmetry_pairs:
            if len(pair) != 2 or not all(0 <= i < J for i in pair):
                raise ContractViolation('bad symmetry pair {}'.format(pair))
        if not 0 <= self.trunk_bone < J:
            raise ContractViolation('trunk_bone out of range')
        if np.any(self.keypoint_joints < 0) or \
                np.any(self.keypoint_joints >= J):
            raise ContractViolation('keypoint joint out of range')
        _topological_order(list(self.keypoint_parents))

    @property
    def num_joints(self):
        return len(self.parents)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_keypoints(self):
        return len(self.keypoint_joints)

    @property
    def root(self):
        return self.order[0]

    @property
    def adjacent_pairs(self):
        """ Unordered neighbouring segment pairs, each listed once. """
        pairs = set()
        for i, neighbours in enumerate(self.adjacency):
            for j in neighbours:
                if i != j:
                    pairs.add((min(i, j), max(i, j)))
        return sorted(pairs)

    @property
    def bones(self):
        """ (parent, child) joint pairs. """
        return [(int(p), j) for j, p in enumerate(self.parents) if p >= 0]

    @property
    def keypoint_bones(self):
        return [(int(p), k) for k, p in enumerate(self.keypoint_parents)
                if p >= 0]

    @property
    def keypoint_symmetry_pairs(self):
        """ (left, right) keypoint bones, named by their child keypoint. """
        return _symmetric_keypoint_pairs(self.keypoint_names)

    @property
    def keypoint_trunk(self):
        """ Keypoints spanning the trunk (root, trunk top). """
        root = int(np.flatnonzero(self.keypoint_parents < 0)[0])
        tops = np.flatnonzero(self.keypoint_joints == self.trunk_bone)
        if not len(tops):
            raise ContractViolation('no keypoint on the trunk joint')
        return root, int(tops[0])

    def trunk_length(self, joints=None):
        joints = self.rest_joints if joints is None else joints
        return float(np.linalg.norm(joints[self.trunk_bone] -
                                    joints[self.root]))

    def bone_lengths(self, joints=None):
        joints = self.rest_joints if joints is None else joints
        return np.array([np.linalg.norm(joints[c] - joints[p])
                         for p, c in self.bones])

    def height(self):
        extent = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(extent[1])

    def part_chart(self, part):
        """ Vertex indices of a part, ascending, and their uv. """
        idx = np.flatnonzero(self.part_ids == part)
        return idx, self.part_uv[idx]

    def to_dict(self):
        rows, cols = np.nonzero(self.skin_weights)
        return {
            'vertices': self.vertices.tolist(),
            'faces': self.faces.tolist(),
            'parents': self.parents.tolist(),
            'rest_offsets': self.rest_offsets.tolist(),
            'skin_weights': [[int(i), int(j), float(self.skin_weights[i, j])]
                             for i, j in zip(rows, cols)],
            'hinge_axes': {str(j): axis.tolist()
                           for j, axis in sorted(self.hinge_axes.items())},
            'symmetry_pairs': [list(p) for p in self.symmetry_pairs],
            'adjacency': self.adjacency,
            'trunk_bone': self.trunk_bone,
            'part_charts': [[int(p), float(u), float(v)] for p, (u, v)
                            in zip(self.part_ids, self.part_uv)],
            'joint_names': self.joint_names,
            'keypoints': [[name, int(j), int(p)] for name, j, p in
                          zip(self.keypoint_names, self.keypoint_joints,
                              self.keypoint_parents)],
        }

    @classmethod
    def from_dict(cls, data, path='<template>'):
        required = ('vertices', 'faces', 'parents', 'rest_offsets',
                    'skin_weights', 'hinge_axes', 'symmetry_pairs',
                    'adjacency', 'trunk_bone', 'part_charts')
        if not isinstance(data, dict):
            raise MalformedFileError(path, 'expected a JSON object')
        for key in required:
            if key not in data:
                raise MalformedFileError(path, 'missing', field=key)
        try:
            vertices = np.asarray(data['vertices'], dtype=np.float64)
            n, J = len(vertices), len(data['parents'])
            weights = np.zeros((n, J))
            for i, j, w in data['skin_weights']:
                weights[int(i), int(j)] += float(w)
            charts = np.asarray(data['part_charts'], dtype=np.float64)
            return cls(vertices, data['faces'], data['parents'],
                       data['rest_offsets'], weights,
                       charts[:, 0].astype(np.int64), charts[:, 1:3],
                       data['hinge_axes'], data['symmetry_pairs'],
                       data['adjacency'], data['trunk_bone'],
                       joint_names=data.get('joint_names'),
                       keypoints=data.get('keypoints'))
        except (ContractViolation, ValueError, TypeError, IndexError) as e:
            raise MalformedFileError(path, str(e))


def vertex_normals(vertices, faces):
    """ Area-weighted unit vertex normals; (n, 3) zeros for point clouds. """
    vertices = np.asarray(vertices, dtype=np.float64)
    normals = np.zeros_like(vertices)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if not len(faces):
        return normals
    tri = vertices[faces]
    face_normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    for k in range(3):
        np.add.at(normals, faces[:, k], face_normals)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.where(lengths > 0, lengths, 1.0)


def _perpendicular_basis(axis):
    helper = np.array([0.0, 0.0, 1.0])
    if abs(axis.dot(helper)) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    b1 = np.cross(axis, helper)
    b1 /= np.linalg.norm(b1)
    return b1, np.cross(axis, b1)


def _capsule(start, end, radius, rings, segments):
    """ Vertices, faces (local indices) and uv of one part capsule. """
    axis = end - start
    length = np.linalg.norm(axis)
    unit = axis / length
    b1, b2 = _perpendicular_basis(unit)
    verts, uv = [], []
    for k in range(rings):
        v = (k + 1.0) / (rings + 1.0)
        centre = start + v * axis
        for i in range(segments):
            angle = 2.0 * np.pi * i / segments
            verts.append(centre + radius * (np.cos(angle) * b1 +
                                            np.sin(angle) * b2))
            uv.append((float(i) / segments, v))
    south = rings * segments
    north = south + 1
    verts.append(start - 0.5 * radius * unit)
    uv.append((0.5, 0.0))
    verts.append(end + 0.5 * radius * unit)
    uv.append((0.5, 1.0))

    faces = []
    for k in range(rings - 1):
        for i in range(segments):
            a = k * segments + i
            b = k * segments + (i + 1) % segments
            c = (k + 1) * segments + (i + 1) % segments
            d = (k + 1) * segments + i
            faces.append((a, b, c))
            faces.append((a, c, d))
    last = (rings - 1) * segments
    for i in range(segments):
        faces.append((south, (i + 1) % segments, i))
        faces.append((north, last + i, last + (i + 1) % segments))

    verts = np.array(verts)
    faces = np.array(faces, dtype=np.int64)
    # Wind every face outwards, seen from the capsule centre.
    middle = 0.5 * (start + end)
    tri = verts[faces]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    inward = (normal * (tri.mean(axis=1) - middle)).sum(axis=1) < 0
    faces[inward] = faces[inward][:, ::-1]
    return verts, faces, np.array(uv)


def _segment_distances(points, starts, ends):
    """ (n, J) distances from points to line segments. """
    d = ends - starts
    rel = points[:, None, :] - starts[None, :, :]
    t = (rel * d[None]).sum(axis=2) / (d * d).sum(axis=1)[None]
    t = np.clip(t, 0.0, 1.0)
    closest = starts[None] + t[..., None] * d[None]
    return np.linalg.norm(points[:, None, :] - closest, axis=2)


def build_template(rings=None, segments=None):
    """
    Generate the default humanoid: one capsule of `rings` x `segments`
    vertices plus two poles per part, skinned to the two nearest bones by
    inverse squared distance.
    """
    rings = rings or config['TEMPLATE_RINGS']
    segments = segments or config['TEMPLATE_SEGMENTS']
    if rings < 2 or segments < 3:
        raise ContractViolation('template needs rings >= 2 and segments >= 3')
    names = [j[0] for j in JOINTS]
    parents = [j[1] for j in JOINTS]
    offsets = np.array([j[2] for j in JOINTS], dtype=np.float64)
    joints = np.zeros((NUM_JOINTS, 3))
    for j in range(NUM_JOINTS):
        if parents[j] >= 0:
            joints[j] = joints[parents[j]] + offsets[j]
    children = [[c for c in range(NUM_JOINTS) if parents[c] == j]
                for j in range(NUM_JOINTS)]

    starts = joints.copy()
    ends = np.empty_like(joints)
    for j in range(NUM_JOINTS):
        if j in PART_EXTENTS:
            ends[j] = joints[j] + np.array(PART_EXTENTS[j])
        else:
            ends[j] = joints[children[j][0]]

    vertices, faces, part_ids, part_uv = [], [], [], []
    for j in range(NUM_JOINTS):
        v, f, uv = _capsule(starts[j], ends[j], PART_RADII[j], rings,
                            segments)
        faces.append(f + sum(len(x) for x in vertices))
        vertices.append(v)
        part_ids.append(np.full(len(v), j, dtype=np.int64))
        part_uv.append(uv)
    vertices = np.concatenate(vertices)

    distances = _segment_distances(vertices, starts, ends)
    nearest = np.argsort(distances, axis=1, kind='stable')[:, :2]
    rows = np.arange(len(vertices))[:, None]
    inverse = 1.0 / (distances[rows, nearest] ** 2 + 1e-6)
    weights = np.zeros((len(vertices), NUM_JOINTS))
    weights[rows, nearest] = inverse / inverse.sum(axis=1, keepdims=True)

    adjacency = [sorted(children[j] + ([parents[j]] if parents[j] >= 0
                                       else []))
                 for j in range(NUM_JOINTS)]
    template = BodyTemplate(vertices, np.concatenate(faces), parents, offsets,
                            weights, np.concatenate(part_ids),
                            np.concatenate(part_uv), HINGE_AXES,
                            SYMMETRY_PAIRS, adjacency, TRUNK_JOINT,
                            joint_names=names)
    log.debug('built template', vertices=template.num_vertices,
              faces=len(template.faces))
    return template


def read_template(path):
    with open(path) as f:
        try:
            data = json.load(f)
        except ValueError as e:
            raise MalformedFileError(path, 'invalid JSON: {}'.format(e))
    return BodyTemplate.from_dict(data, path=path)


def write_template(template, path):
    with open(path, 'w') as f:
        json.dump(template.to_dict(), f)


def load_template(path=None):
    """ The template at `path`, else TEMPLATE_PATH, else the built-in one. """
    path = path or config.get('TEMPLATE_PATH')
    if path:
        return read_template(path)
    return build_template()
