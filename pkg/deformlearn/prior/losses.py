""" Losses of the adversarial 2D-to-3D lifter. """
import numpy as np

from deformlearn.diffcore import ops
from deformlearn.exc import ContractViolation, DegeneratePose
from deformlearn.prior.skeleton import MIN_TRUNK, Pose2D

# Keeps bone-length derivatives finite for coincident joints.
_LENGTH_EPS = 1e-12


def _as_batch(u):
    """ Pose2D, (N, 2) or (B, N, 2) -> ((B, N, 2) Value, was_single). """
    if isinstance(u, Pose2D):
        u = u.u
    u = ops.as_value(u)
    if u.ndim == 2:
        return ops.reshape(u, (1,) + u.shape), True
    if u.ndim != 3 or u.shape[-1] != 2:
        raise ContractViolation('poses must be (N, 2) or (B, N, 2), got {}'
                                .format(u.shape))
    return u, False


def generate_depths(G, u, leaves=None):
    """
    z = G(flatten(u)).

    Returns a (N,) Value for a single pose and (B, N) for a batch.
    """
    batch, single = _as_batch(u)
    B, N = batch.shape[0], batch.shape[1]
    z = G.forward(ops.reshape(batch, (B, 2 * N)), leaves)
    if z.shape[-1] != N:
        raise ContractViolation('generator outputs {} depths for {} joints'
                                .format(z.shape[-1], N))
    return ops.reshape(z, (N,)) if single else z


def rotate_project(u, z, phi):
    """
    Rotate (x, y, z) about the vertical (y) axis by phi and drop depth:
    x' = x cos(phi) + z sin(phi), y' = y.
    """
    if not np.isfinite(phi):
        raise ContractViolation('view angle must be finite')
    if isinstance(u, Pose2D):
        u = u.u
    u = ops.as_value(u)
    z = ops.as_value(z)
    x = ops.getitem(u, (Ellipsis, 0))
    y = ops.getitem(u, (Ellipsis, 1))
    if phi == 0.0:
        x_rot = x
    else:
        x_rot = ops.add(ops.mul(x, np.cos(phi)), ops.mul(z, np.sin(phi)))
    return ops.stack([x_rot, y], axis=-1)


def discriminator_log_probs(D, poses, leaves=None):
    """ (log D(p), log(1 - D(p))) per pose, from logits. """
    batch, _ = _as_batch(poses)
    B, N = batch.shape[0], batch.shape[1]
    logits = D.forward(ops.reshape(batch, (B, 2 * N)), leaves)
    return ops.log_sigmoid(logits), ops.log_sigmoid(ops.neg(logits))


def adv_losses(D, real, fake, leaves=None):
    """
    Returns
    -------
    (Value, Value)
        Generator loss E[log(1 - D(fake))], minimized by G, and the negated
        discriminator objective -(E[log D(real)] + E[log(1 - D(fake))]),
        minimized by D.

    Raises
    ------
    ContractViolation
        If either batch is empty.
    """
    real_batch, _ = _as_batch(real)
    fake_batch, _ = _as_batch(fake)
    if real_batch.shape[0] == 0 or fake_batch.shape[0] == 0:
        raise ContractViolation('adversarial losses need non-empty batches')
    log_real, _ = discriminator_log_probs(D, real_batch, leaves)
    _, log_not_fake = discriminator_log_probs(D, fake_batch, leaves)
    loss_g = ops.mean(log_not_fake)
    loss_d = ops.neg(ops.add(ops.mean(log_real), loss_g))
    return loss_g, loss_d


def _length(vec):
    return ops.sqrt(ops.add(ops.sum(ops.square(vec), axis=-1), _LENGTH_EPS))


def assemble_3d(u, z):
    """ (B, N, 2) and (B, N) -> (B, N, 3) Value. """
    batch, single = _as_batch(u)
    z = ops.as_value(z)
    if single:
        z = ops.reshape(z, (1,) + z.shape)
    return ops.concatenate([batch, ops.reshape(z, z.shape + (1,))], axis=-1)


def geometric_losses(u, z, stats):
    """
    Bone-ratio and symmetry losses of the 3D pose (x, y, z), averaged over
    the batch:

        L_ratio = sum_e (l_e / l_trunk - canonical_e)^2
        L_sym   = sum_{(i, j)} (l_i - l_j)^2

    Raises
    ------
    DegeneratePose
        If any trunk is shorter than MIN_TRUNK.
    """
    pose3d = assemble_3d(u, z)
    parents = np.array([p for p, _ in stats.bones])
    children = np.array([c for _, c in stats.bones])
    bone_vecs = ops.sub(ops.getitem(pose3d, (slice(None), children)),
                        ops.getitem(pose3d, (slice(None), parents)))
    lengths = _length(bone_vecs)

    root, top = stats.trunk_pair
    trunk = _length(ops.sub(ops.getitem(pose3d, (slice(None), top)),
                            ops.getitem(pose3d, (slice(None), root))))
    if np.any(trunk.data < MIN_TRUNK):
        raise DegeneratePose('trunk length {:.3g} below {}'.format(
            float(trunk.data.min()), MIN_TRUNK))
    ratios = ops.div(lengths, ops.reshape(trunk, (trunk.shape[0], 1)))
    l_ratio = ops.mean(ops.sum(ops.square(ops.sub(ratios, stats.ratios)),
                               axis=1))

    if stats.symmetry_bones:
        left = np.array([i for i, _ in stats.symmetry_bones])
        right = np.array([j for _, j in stats.symmetry_bones])
        diff = ops.sub(ops.getitem(lengths, (slice(None), left)),
                       ops.getitem(lengths, (slice(None), right)))
        l_sym = ops.mean(ops.sum(ops.square(diff), axis=1))
    else:
        l_sym = ops.mul(ops.sum(lengths), 0.0)
    return l_ratio, l_sym
