import concurrent.futures
import pathlib

from darkwave import commandutil, data, settings
from darkwave.checkpoint import load_checkpoint
from darkwave.exceptions import DatasetError
from darkwave.inference import enhance


def input_paths(source):
    source = pathlib.Path(source)
    if source.is_dir():
        return [source / name for name in data.list_images(source)]
    if not source.exists():
        raise DatasetError(f'{source} does not exist')
    return [source]


class Command(commandutil.DarkwaveCommand):
    help = 'Enhance PNG images with a trained checkpoint'

    def add_arguments(self, parser):
        parser.add_argument('-k', '--ckpt', help='checkpoint archive', required=True)
        parser.add_argument(
            '-i', '--input', help='a PNG file or a directory of them', required=True
        )
        parser.add_argument(
            '-o', '--output', help='directory for the enhanced images', required=True
        )
        parser.add_argument(
            '-p',
            '--dump-priors',
            help='also write the mined structure/gradient priors to this directory',
            default=None,
        )

    def enhance_one(self, model, path, output, dump_priors):
        result = enhance(model, data.read_image(path), with_priors=dump_priors is not None)
        target = output / path.name
        data.write_image(target, result.image)
        if dump_priors is not None and result.structure is not None:
            data.write_image(dump_priors / f'{path.stem}_structure.png', result.structure)
            data.write_image(dump_priors / f'{path.stem}_gradient.png', result.gradient)
        return target

    def handle(self, *args, **options):
        super(Command, self).handle(*args, **options)

        output = pathlib.Path(options['output'])
        dump_priors = None
        if options['dump_priors']:
            dump_priors = pathlib.Path(options['dump_priors'])
        with self.failures_as_errors():
            state = load_checkpoint(options['ckpt'], device=settings.DARKWAVE_DEVICE)
            model = state.model.eval()
            paths = input_paths(options['input'])
            output.mkdir(parents=True, exist_ok=True)
            workers = settings.DARKWAVE_INFER_WORKERS
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                written = list(
                    pool.map(
                        lambda path: self.enhance_one(model, path, output, dump_priors),
                        paths,
                    )
                )

        for target in written:
            self.message(f'Wrote {target}', 2)
        self.message(f'Enhanced {len(written)} image(s) into {output}')
