from deformlearn.registration.annotation import SampleAnnotation
from deformlearn.registration.losses import (dense_loss, keypoint_loss,
                                             keypoint_terms,
                                             scale_smoothness_loss,
                                             joint_loss, det_loss,
                                             regist_loss)
from deformlearn.registration.register import (RegistConfig, RegistResult,
                                               register, initial_params)

__all__ = ['SampleAnnotation', 'dense_loss', 'keypoint_loss',
           'keypoint_terms', 'scale_smoothness_loss', 'joint_loss',
           'det_loss', 'regist_loss', 'RegistConfig', 'RegistResult',
           'register', 'initial_params']
