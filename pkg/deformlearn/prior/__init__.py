from deformlearn.prior.mlp import Mlp, build_mlp
from deformlearn.prior.skeleton import (Pose2D, SkeletonStats,
                                        normalize_keypoints)
from deformlearn.prior.losses import (generate_depths, rotate_project,
                                      adv_losses, geometric_losses)
from deformlearn.prior.train import (train_prior, new_prior,
                                     generator_loss, predict_gan_depths,
                                     save_prior, load_prior)

__all__ = ['Mlp', 'build_mlp', 'Pose2D', 'SkeletonStats',
           'normalize_keypoints', 'generate_depths', 'rotate_project',
           'adv_losses', 'geometric_losses', 'generator_loss', 'train_prior',
           'new_prior', 'predict_gan_depths', 'save_prior', 'load_prior']
