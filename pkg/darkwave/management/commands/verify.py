from darkwave import commandutil, verification


class Command(commandutil.DarkwaveCommand):
    help = 'Run the numerical self checks; exits nonzero when any fails'

    def add_arguments(self, parser):
        parser.add_argument(
            '-r', '--report', help='also write the report to this file', default=None
        )
        parser.add_argument(
            '-k',
            '--check',
            help='run only the named check (repeatable): ' + ', '.join(verification.CHECKS),
            action='append',
            choices=list(verification.CHECKS),
            default=None,
        )

    def handle(self, *args, **options):
        super(Command, self).handle(*args, **options)

        with self.failures_as_errors():
            results = verification.run_checks(options['check'])

        lines = []
        for result in results:
            lines.append(f'[{"PASS" if result.passed else "FAIL"}] {result.name}')
            lines += [f'    {line}' for line in result.lines]
        for line in lines:
            self.message(line)
        if options['report']:
            with open(options['report'], 'w') as handle:
                handle.write('\n'.join(lines) + '\n')

        failed = [result.name for result in results if not result.passed]
        if failed:
            self.fail(f'Failed check(s): {", ".join(failed)}')
