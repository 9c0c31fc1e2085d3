from deformlearn.models.template import (BodyTemplate, build_template,
                                         load_template)
from deformlearn.models.body import (BodyParams, PosedBody, JointTransforms,
                                     forward_kinematics, skin, skin_points,
                                     pose)
from deformlearn.models.camera import (WeakPerspectiveCamera, gram_schmidt,
                                       project)

__all__ = ['BodyTemplate', 'build_template', 'load_template', 'BodyParams',
           'PosedBody', 'JointTransforms', 'forward_kinematics', 'skin',
           'skin_points', 'pose', 'WeakPerspectiveCamera', 'gram_schmidt',
           'project']
