from deformlearn.learn.regressor import (RegressorParams132, Regressor,
                                         ConvWeights,
                                         params_to_regressor_space,
                                         regressor_space_to_params, smooth_l1,
                                         train_regressor)
from deformlearn.learn.loop import (TrainState, deform_learn_loop, refine,
                                    run_round)
from deformlearn.learn.checkpoint import save_checkpoint, load_checkpoint

__all__ = ['RegressorParams132', 'Regressor', 'ConvWeights',
           'params_to_regressor_space', 'regressor_space_to_params',
           'smooth_l1', 'train_regressor', 'TrainState', 'deform_learn_loop',
           'refine', 'run_round', 'save_checkpoint', 'load_checkpoint']
