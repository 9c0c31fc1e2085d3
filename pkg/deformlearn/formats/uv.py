""" Nearest template vertex to a (part, u, v) triple. """
import numpy as np
from scipy.spatial import cKDTree

from deformlearn.exc import ContractViolation

# Distances this close count as a tie.
TIE_TOLERANCE = 1e-12


class UvIndex(object):
    """ One k-d tree per part chart of a template, built on first use. """
    def __init__(self, template):
        self.template = template
        self._charts = {}

    def _chart(self, part):
        if part not in self._charts:
            if not 0 <= part < self.template.num_joints:
                raise ContractViolation('unknown part {}'.format(part))
            indices, uv = self.template.part_chart(part)
            if not len(indices):
                raise ContractViolation('part {} has an empty chart'.format(
                    part))
            self._charts[part] = (indices, uv, cKDTree(uv))
        return self._charts[part]

    def lookup(self, part, uv):
        """
        Vertex of `part` whose chart coordinates are closest to `uv`.
        Equidistant vertices resolve to the smallest index.

        Raises
        ------
        ContractViolation
            For an unknown part or an empty chart.
        """
        indices, coords, tree = self._chart(int(part))
        uv = np.asarray(uv, dtype=np.float64).reshape(2)
        nearest, _ = tree.query(uv)
        # All vertices inside the tie band.
        rows = np.array(tree.query_ball_point(uv, nearest + 2 * TIE_TOLERANCE),
                        dtype=np.int64)
        # Re-measure so ties are judged on the same arithmetic.
        exact = np.linalg.norm(coords[rows] - uv, axis=1)
        best = exact.min()
        tied = rows[exact <= best + TIE_TOLERANCE]
        return int(indices[tied].min())

    def lookup_many(self, parts, uvs):
        return np.array([self.lookup(p, uv) for p, uv in zip(parts, uvs)],
                        dtype=np.int64)


def uv_to_vertex(part, uv, template):
    return UvIndex(template).lookup(part, uv)
