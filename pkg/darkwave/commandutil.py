import contextlib

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from darkwave.exceptions import (
    CheckpointError,
    DatasetError,
    NonFiniteError,
    ShapeError,
    TrainingDiverged,
)

# errors the numerics layer raises that should end a command with a message
# instead of a traceback
COMMAND_FAILURES = (
    CheckpointError,
    DatasetError,
    NonFiniteError,
    ShapeError,
    TrainingDiverged,
)


def flatten_detail(detail, prefix=''):
    """'section.key: message' lines out of a nested REST framework error"""
    if isinstance(detail, dict):
        lines = []
        for key, value in detail.items():
            lines += flatten_detail(value, f'{prefix}{key}.')
        return lines
    if isinstance(detail, list):
        lines = []
        for value in detail:
            lines += flatten_detail(value, prefix)
        return lines
    return [f'{prefix.rstrip(".")}: {detail}' if prefix else str(detail)]


def describe_validation_error(error: ValidationError):
    if hasattr(error, 'error_dict'):
        return '; '.join(
            f'{field}: {" ".join(messages)}' for field, messages in error.message_dict.items()
        )
    return '; '.join(error.messages)


class DarkwaveCommand(BaseCommand):
    requires_system_checks = []

    def __init__(self, *args, **kwargs):
        super(DarkwaveCommand, self).__init__(*args, **kwargs)
        self.verbosity = 0

    def message(self, message, verbosity_level=1):
        if self.verbosity >= verbosity_level:
            self.stdout.write(message)

    def fail(self, message):
        raise CommandError(message)

    @contextlib.contextmanager
    def failures_as_errors(self):
        try:
            yield
        except COMMAND_FAILURES as e:
            self.fail(f'{type(e).__name__}: {e}')
        except ValidationError as e:
            self.fail(describe_validation_error(e))
        except serializers.ValidationError as e:
            self.fail('; '.join(flatten_detail(e.detail)))

    def handle(self, *args, **options):
        if 'verbosity' in options:
            self.verbosity = options['verbosity']
        else:
            self.verbosity = 1
        self.message('Positional arguments: {0}'.format(args), 3)
        self.message('Named arguments: {0}'.format(options), 3)
