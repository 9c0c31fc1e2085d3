"""
Synthetic samples with known ground truth.

Every sample poses the template with a random theta*, projects a random
subset of the vertices facing the camera as dense correspondences, projects
the keypoints, and optionally adds Gaussian pixel noise. Output depends on
the seed only.
"""
import numpy as np

from deformlearn.config import config
from deformlearn.log import get_logger
from deformlearn.models.body import BodyParams, pose
from deformlearn.models.camera import camera_frame, WeakPerspectiveCamera
from deformlearn.models.rotation import rotation_about
from deformlearn.models.template import vertex_normals
from deformlearn.registration.annotation import SampleAnnotation
log = get_logger()

SYNTH_TAG = 'synthetic'


def random_params(template, rng, cfg=None):
    """
    theta* with |a|_inf <= SYNTH_POSE_BOUND (hinge joints bend one way about
    their axis), S uniform in [SYNTH_SCALE_MIN, SYNTH_SCALE_MAX] and a
    camera that looks at the body from a bounded yaw and tilt.
    """
    cfg = cfg or config
    J = template.num_joints
    bound = cfg['SYNTH_POSE_BOUND']
    a = rng.uniform(-bound, bound, size=(J, 3))
    for joint in template.hinge_joints:
        axis = np.asarray(template.hinge_axes[joint], dtype=np.float64)
        a[joint] = axis * rng.uniform(-bound, 0.0)
    S = rng.uniform(cfg['SYNTH_SCALE_MIN'], cfg['SYNTH_SCALE_MAX'], size=J)
    yaw = np.radians(rng.uniform(-1.0, 1.0) * cfg['SYNTH_MAX_YAW_DEG'])
    tilt = np.radians(rng.uniform(-1.0, 1.0) * cfg['SYNTH_MAX_TILT_DEG'])
    R = rotation_about((1.0, 0.0, 0.0), tilt).dot(
        rotation_about((0.0, 1.0, 0.0), yaw))
    size = float(cfg['SYNTH_IMAGE_SIZE'])
    s = size * rng.uniform(0.6, 0.75) / template.height()
    t = size * (0.5 + rng.uniform(-0.05, 0.05, size=2))
    return BodyParams(a, S, R, s, t)


def visible_vertices(template, posed_vertices, rotation):
    """ Indices of vertices whose normal points towards the camera. """
    normals = vertex_normals(posed_vertices, template.faces).dot(rotation.T)
    return np.flatnonzero(normals[:, 2] < 0)


def _camera_points(points, params):
    cam = WeakPerspectiveCamera.from_params(params)
    return camera_frame(points, cam).data


def render_sample(template, params, sample_id, rng, cfg=None,
                  dense_points=None):
    """
    Annotation of one posed body.

    Parameters
    ----------
    dense_points : int, optional
        Number of correspondences; defaults to SYNTH_DENSE_POINTS. Zero or
        a negative value takes every visible vertex.
    """
    cfg = cfg or config
    dense_points = cfg['SYNTH_DENSE_POINTS'] if dense_points is None \
        else dense_points
    size = int(cfg['SYNTH_IMAGE_SIZE'])
    noise = cfg['SYNTH_PIXEL_NOISE']
    posed = pose(template, params)
    framed = _camera_points(posed.vertex_world, params)
    visible = visible_vertices(template, posed.vertex_world, params.R)
    if 0 < dense_points < len(visible):
        visible = np.sort(rng.choice(visible, size=dense_points,
                                     replace=False))
    points = framed[visible, :2] + params.t
    joints = _camera_points(posed.joint_world[template.keypoint_joints],
                            params)
    keypoints = np.ones((template.num_keypoints, 3))
    keypoints[:, :2] = joints[:, :2] + params.t
    if noise > 0:
        points = points + rng.normal(0.0, noise, size=points.shape)
        keypoints[:, :2] += rng.normal(0.0, noise,
                                       size=(len(keypoints), 2))
    inside = np.all((keypoints[:, :2] >= 0) & (keypoints[:, :2] <= size),
                    axis=1)
    keypoints[~inside, 2] = 0.0
    depths = None
    if cfg['SYNTH_GAN_DEPTHS'] == 'oracle':
        root = template.keypoint_trunk[0]
        depths = joints[:, 2] - joints[root, 2]
    return SampleAnnotation(sample_id, points, visible, keypoints, depths,
                            width=size, height=size, tags=[SYNTH_TAG])


def synth_dataset(template, count=None, seed=None, cfg=None,
                  dense_points=None):
    """
    Returns
    -------
    (list of SampleAnnotation, dict of sample id -> BodyParams)
    """
    cfg = cfg or config
    count = cfg['SYNTH_COUNT'] if count is None else count
    seed = cfg['SEED'] if seed is None else seed
    rng = np.random.default_rng(seed)
    samples, truths = [], {}
    for k in range(count):
        sample_id = 's{:05d}'.format(k)
        params = random_params(template, rng, cfg)
        samples.append(render_sample(template, params, sample_id, rng, cfg,
                                     dense_points))
        truths[sample_id] = params
    log.info('synthesized samples', count=count, seed=seed,
             noise=cfg['SYNTH_PIXEL_NOISE'])
    return samples, truths


def synth_prior_poses(template, count=None, seed=None, cfg=None):
    """
    2D keypoint sets (pixels, all visible) and their true root-centered
    camera-frame depths, for training and scoring the pose prior.

    Returns
    -------
    ((M, N, 3) array, (M, N) array)
    """
    cfg = cfg or config
    count = cfg['PRIOR_DATASET_SIZE'] if count is None else count
    seed = cfg['SEED'] if seed is None else seed
    rng = np.random.default_rng(seed)
    root = template.keypoint_trunk[0]
    keypoints = np.ones((count, template.num_keypoints, 3))
    depths = np.empty((count, template.num_keypoints))
    for k in range(count):
        params = random_params(template, rng, cfg)
        joints = pose(template, params, with_vertices=False).joint_world
        framed = _camera_points(joints[template.keypoint_joints], params)
        keypoints[k, :, :2] = framed[:, :2] + params.t
        depths[k] = framed[:, 2] - framed[root, 2]
    return keypoints, depths
