from __future__ import absolute_import

__all__ = [
    'ShapeError', 'NumericInputError', 'InvalidTapeError',
    'NumericDivergenceError', 'TrainingFailure', 'CheckpointError'
]


class ShapeError(ValueError):
    """Raised when a tensor does not have the expected shape."""


class NumericInputError(ValueError):
    """Raised when an input contains NaN or Inf."""


class InvalidTapeError(ValueError):
    """Raised when a gradient tape does not belong to the given net."""


class NumericDivergenceError(FloatingPointError):
    """Raised when gradients or sampled states stop being finite."""


class CheckpointError(ValueError):
    """Raised when a checkpoint file cannot be parsed."""


class TrainingFailure(RuntimeError):
    """Raised when a training loss becomes non-finite.

    Args:
        step (int): index of the failing optimization step.
        diagnostics (dict, optional): values that help locating the failure,
            e.g. timestep, delta norm and guidance scale.
    """

    def __init__(self, step, diagnostics=None):
        self.step = step
        self.diagnostics = dict(diagnostics or {})
        details = ', '.join(
            '{}={}'.format(k, v) for k, v in sorted(self.diagnostics.items())
        )
        msg = 'Non-finite loss at step {}'.format(step)
        if details:
            msg += ' ({})'.format(details)
        super(TrainingFailure, self).__init__(msg)
