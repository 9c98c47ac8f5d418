"""`darkwave` console script: the app's management commands without a host
project, e.g. `darkwave train --config run.json`."""

import os
import sys

DEFAULT_SETTINGS = 'darkwave.default_settings'
COMMANDS = ('train', 'infer', 'eval', 'verify', 'ablate')


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', DEFAULT_SETTINGS)

    from django.core.management import execute_from_command_line

    if argv and argv[0] not in COMMANDS and not argv[0].startswith('-') and argv[0] != 'help':
        sys.stderr.write(f'Unknown command {argv[0]!r}; available: {", ".join(COMMANDS)}\n')
        return 2
    execute_from_command_line(['darkwave', *argv])
    return 0


if __name__ == '__main__':
    sys.exit(main())
