import numpy as np

from deformlearn.exc import ContractViolation


class SampleAnnotation(object):
    """
    What is known about one image.

    Attributes
    ----------
    sample_id : str
    dense_points : (m, 2) array
        Annotated image points (pixels).
    dense_indices : (m,) int array
        Template vertex matched to each point.
    keypoints : (N, 3) array
        x, y (pixels) and visibility (0 or 1).
    gan_depths : (N,) array or None
        Root-centered keypoint depths from the pose prior (pixels). NaN
        entries count as absent.
    width, height : int
        Image size.
    tags : list of str
        Dataset tags, used by per-round sample schedules.
    """
    def __init__(self, sample_id, dense_points, dense_indices, keypoints,
                 gan_depths=None, width=256, height=256, tags=None):
        self.sample_id = str(sample_id)
        self.dense_points = np.asarray(dense_points,
                                       dtype=np.float64).reshape(-1, 2)
        self.dense_indices = np.asarray(dense_indices,
                                        dtype=np.int64).reshape(-1)
        self.keypoints = np.asarray(keypoints, dtype=np.float64).reshape(-1,
                                                                         3)
        self.gan_depths = None if gan_depths is None else \
            np.asarray(gan_depths, dtype=np.float64).reshape(-1)
        self.width = int(width)
        self.height = int(height)
        self.tags = list(tags or [])
        if len(self.dense_points) != len(self.dense_indices):
            raise ContractViolation('{}: {} dense points but {} indices'
                                    .format(self.sample_id,
                                            len(self.dense_points),
                                            len(self.dense_indices)))
        if self.gan_depths is not None and \
                len(self.gan_depths) != len(self.keypoints):
            raise ContractViolation('{}: gan_depths and keypoints differ in '
                                    'length'.format(self.sample_id))

    @property
    def image_size(self):
        return float(max(self.width, self.height))

    @property
    def visible(self):
        return self.keypoints[:, 2] > 0

    def check(self, template, need_dense=True):
        if need_dense and not len(self.dense_indices):
            raise ContractViolation('{}: no dense correspondences'.format(
                self.sample_id))
        if len(self.dense_indices) and (
                self.dense_indices.min() < 0 or
                self.dense_indices.max() >= template.num_vertices):
            raise ContractViolation('{}: vertex index out of range'.format(
                self.sample_id))
        if len(self.keypoints) != template.num_keypoints:
            raise ContractViolation('{}: expected {} keypoints, got {}'
                                    .format(self.sample_id,
                                            template.num_keypoints,
                                            len(self.keypoints)))

    def scaled(self, factor):
        """ Image coordinates (and depths) multiplied by `factor`. """
        keypoints = self.keypoints.copy()
        keypoints[:, :2] *= factor
        depths = None if self.gan_depths is None else self.gan_depths * factor
        return self._replace(dense_points=self.dense_points * factor,
                             keypoints=keypoints, gan_depths=depths)

    def translated(self, offset):
        offset = np.asarray(offset, dtype=np.float64)
        keypoints = self.keypoints.copy()
        keypoints[:, :2] += offset
        return self._replace(dense_points=self.dense_points + offset,
                             keypoints=keypoints)

    def with_gan_depths(self, depths):
        return self._replace(gan_depths=depths)

    def with_dense(self, points, indices):
        return self._replace(dense_points=points, dense_indices=indices)

    def _replace(self, **changes):
        fields = dict(sample_id=self.sample_id,
                      dense_points=self.dense_points,
                      dense_indices=self.dense_indices,
                      keypoints=self.keypoints, gan_depths=self.gan_depths,
                      width=self.width, height=self.height, tags=self.tags)
        fields.update(changes)
        return SampleAnnotation(**fields)

    def __repr__(self):
        return 'SampleAnnotation({!r}, dense={}, visible={}/{})'.format(
            self.sample_id, len(self.dense_indices), int(self.visible.sum()),
            len(self.keypoints))
