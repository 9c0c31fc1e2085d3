from deformlearn.diffcore.tape import (Value, Tape, GradientMap, backward,
                                       variable, constant)
from deformlearn.diffcore import ops
from deformlearn.diffcore.optim import AdamState, Adam, adam_step
from deformlearn.diffcore.gradcheck import check_gradient, GradientCheck

__all__ = ['Value', 'Tape', 'GradientMap', 'backward', 'variable',
           'constant', 'ops', 'AdamState', 'Adam', 'adam_step',
           'check_gradient', 'GradientCheck']
