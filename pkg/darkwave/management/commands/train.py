import os

from darkwave import commandutil, serializers
from darkwave.data import datasets_for
from darkwave.training import train

REPORT_NAME = 'report.csv'


class Command(commandutil.DarkwaveCommand):
    help = 'Train an enhancement model from a JSON run configuration'

    def add_arguments(self, parser):
        parser.add_argument(
            '-c', '--config', help='path of the JSON run configuration', required=True
        )
        parser.add_argument(
            '-n',
            '--iters',
            help='override train.iters (0 writes the initial checkpoint only)',
            type=int,
            default=None,
        )
        parser.add_argument(
            '-s', '--seed', help='override train.seed', type=int, default=None
        )
        parser.add_argument(
            '-o', '--output', help='override the output directory', default=None
        )

    def handle(self, *args, **options):
        super(Command, self).handle(*args, **options)

        with self.failures_as_errors():
            config = serializers.read_run_config(options['config'])
            changes = {
                key: options[key]
                for key in ('iters', 'seed')
                if options[key] is not None
            }
            if changes:
                config = config.replace(train=config.train.replace(**changes))
            if options['output']:
                config = config.replace(output=options['output'])
            config.full_clean()

            train_set, test_set = datasets_for(config.data)
            echo = serializers.write_run_config(config, config.output)
            self.message(f'Configuration written to {echo}', 2)

            state, report = train(
                train_set,
                config.model,
                config.train,
                eval_set=test_set,
                checkpoint_dir=config.output,
            )
            report_path = os.path.join(config.output, REPORT_NAME)
            report.write_csv(report_path)

        self.message(f'Trained {state.step} step(s), outputs in {config.output}')
        last = report.last_eval
        if last is not None:
            self.message(
                f'Last evaluation at step {last["step"]}: '
                f'PSNR {last["eval_psnr"]:.4f}, SSIM {last["eval_ssim"]:.4f}'
            )
