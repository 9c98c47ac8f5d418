import csv
import math
import pathlib

from darkwave import commandutil, data, settings, util
from darkwave.checkpoint import load_checkpoint
from darkwave.inference import enhance, evaluate, pad_to_multiple
from darkwave.transforms import decompose

EVAL_FIELDS = ('name', 'psnr', 'ssim')
MEAN_ROW = 'mean'


def write_eval_csv(path, result):
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=EVAL_FIELDS)
        writer.writeheader()
        for row in result.rows:
            writer.writerow(
                dict(
                    name=row.name,
                    psnr=util.format_metric(row.psnr),
                    ssim=util.format_metric(row.ssim),
                )
            )
        writer.writerow(
            dict(
                name=MEAN_ROW,
                psnr=util.format_metric(result.mean_psnr),
                ssim=util.format_metric(result.mean_ssim),
            )
        )


def reference_low_band(image, depth):
    """the deepest low band of a ground truth image, scaled back to [0, 1]"""
    height, width = image.shape[:2]
    batch = pad_to_multiple(data.to_tensor(image), 2**depth)
    band = decompose(batch, depth).coarsest.L / 2**depth
    return data.to_image(band[..., : math.ceil(height / 2**depth), : math.ceil(width / 2**depth)])


class Command(commandutil.DarkwaveCommand):
    help = 'Report PSNR/SSIM of a checkpoint on a paired test set'

    def add_arguments(self, parser):
        parser.add_argument('-k', '--ckpt', help='checkpoint archive', required=True)
        parser.add_argument(
            '-d',
            '--data',
            help='dataset root holding low/ and high/ (or a split directory that does)',
            required=True,
        )
        parser.add_argument(
            '--split', help='split directory under the dataset root', default='test'
        )
        parser.add_argument(
            '-o',
            '--output',
            help='CSV report path (defaults to <checkpoint>-eval.csv)',
            default=None,
        )
        parser.add_argument(
            '-p',
            '--dump-priors',
            help='write mined priors and the reference low band per pair to this directory',
            default=None,
        )

    def dump_priors(self, model, dataset, directory):
        depth = model.config.depth
        for name, low, high in zip(dataset.names, dataset.lows, dataset.highs):
            stem = pathlib.Path(name).stem
            result = enhance(model, low, with_priors=True)
            if result.structure is not None:
                data.write_image(directory / f'{stem}_structure.png', result.structure)
                data.write_image(directory / f'{stem}_gradient.png', result.gradient)
            data.write_image(directory / f'{stem}_reference_low.png', reference_low_band(high, depth))

    def handle(self, *args, **options):
        super(Command, self).handle(*args, **options)

        checkpoint = pathlib.Path(options['ckpt'])
        output = options['output'] or checkpoint.with_name(f'{checkpoint.stem}-eval.csv')
        with self.failures_as_errors():
            state = load_checkpoint(checkpoint, device=settings.DARKWAVE_DEVICE)
            dataset = data.load_pairs(options['data'], options['split'])
            if not len(dataset):
                self.fail(f'No image pairs found under {options["data"]}')
            result = evaluate(state.model, dataset)
            write_eval_csv(output, result)
            if options['dump_priors']:
                self.dump_priors(state.model, dataset, pathlib.Path(options['dump_priors']))

        for row in result.rows:
            self.message(
                f'{row.name}: PSNR {util.format_metric(row.psnr)}, SSIM {util.format_metric(row.ssim)}',
                2,
            )
        self.message(
            f'{len(result.rows)} pair(s): mean PSNR {util.format_metric(result.mean_psnr)}, '
            f'mean SSIM {util.format_metric(result.mean_ssim)}'
        )
        self.message(f'Report written to {output}', 2)
