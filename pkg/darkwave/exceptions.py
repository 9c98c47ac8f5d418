__all__ = [
    'ShapeError',
    'NonFiniteError',
    'TrainingDiverged',
    'CheckpointError',
    'DatasetError',
]


class ShapeError(ValueError):
    """An array operand violates a shape precondition."""


class NonFiniteError(ArithmeticError):
    def __init__(self, module, message=None):
        self.module = module
        super().__init__(message or f'non-finite activations in {module}')


class TrainingDiverged(RuntimeError):
    def __init__(self, step, module, message=None):
        self.step = step
        self.module = module
        super().__init__(
            message or f'training diverged at step {step}: non-finite value in {module}'
        )


class CheckpointError(ValueError):
    pass


class DatasetError(ValueError):
    pass
