from django.core.exceptions import ValidationError

__all__ = [
    'positive',
    'nonnegative',
    'strictly_increasing',
    'ordered_range',
]


def positive(value):
    if value <= 0:
        raise ValidationError('Value must be positive')


def nonnegative(value):
    if value < 0:
        raise ValidationError('Value cannot be negative')


def strictly_increasing(values):
    values = list(values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValidationError('Values must be strictly increasing')


def ordered_range(value):
    low, high = value
    if low > high:
        raise ValidationError(f'Range lower bound {low} exceeds upper bound {high}')
