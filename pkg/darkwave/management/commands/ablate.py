import os

from darkwave import ablation, commandutil, serializers, util

ABLATION_NAME = 'ablation.csv'


class Command(commandutil.DarkwaveCommand):
    help = 'Train and evaluate one model per ablation row, writing a CSV'

    def add_arguments(self, parser):
        parser.add_argument(
            '-c', '--config', help='path of the JSON run configuration', required=True
        )
        rows = parser.add_mutually_exclusive_group()
        rows.add_argument(
            '-d',
            '--disable',
            help='comma separated toggles to turn off for one row (repeatable, one row each)',
            action='append',
            default=None,
        )
        rows.add_argument(
            '-p',
            '--preset',
            help='a predefined set of rows',
            choices=sorted(ablation.PRESETS),
            default=None,
        )
        parser.add_argument(
            '-o',
            '--output',
            help=f'CSV path (defaults to {ABLATION_NAME} in the configured output directory)',
            default=None,
        )

    def rows(self, base, options):
        if options['preset']:
            return ablation.PRESETS[options['preset']](base)
        if not options['disable']:
            return [ablation.disable_row(base, [])]
        return [
            ablation.disable_row(base, util.natural_list_parse(spec, symbol_only=True))
            for spec in options['disable']
        ]

    def handle(self, *args, **options):
        super(Command, self).handle(*args, **options)

        with self.failures_as_errors():
            base = serializers.read_run_config(options['config'])
            rows = self.rows(base, options)
            self.message(f'Running {len(rows)} ablation row(s): {", ".join(row.name for row in rows)}')
            results = ablation.ablate(base, rows)
            output = options['output'] or os.path.join(base.output, ABLATION_NAME)
            directory = os.path.dirname(output)
            if directory:
                os.makedirs(directory, exist_ok=True)
            ablation.write_ablation_csv(output, results)

        for values in results:
            self.message(
                f'{values["name"]:<20} {values["tag"] or "-":>2}  {values["params"]:>8,} params  '
                f'PSNR {util.format_metric(values["psnr"])}  SSIM {util.format_metric(values["ssim"])}'
            )
        self.message(f'Ablation written to {output}', 2)
