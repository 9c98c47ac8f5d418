import io
import os
import random
from unittest.mock import patch

import numpy as np
from django.core.exceptions import ValidationError
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, override_settings

from darkwave import commandutil, data, metrics, serializers, util
from darkwave.checkpoint import load_checkpoint, save_checkpoint
from darkwave.config import ModelConfig
from darkwave.network import ModelState, build_model
from darkwave.verification import CheckResult

from . import randgen
from .util import TempDirMixin, parse_csv, parse_csv_dicts, write_json


def tiny_run_document(output, **train):
    model = randgen.tiny_model_config()
    return {
        'model': {
            key: getattr(model, key)
            for key in ('depth', 'prior_width', 'low_width', 'high_width', 'res_blocks')
        },
        'train': {'crop': 16, 'batch': 1, 'iters': 2, 'checkpoint_every': 1, **train},
        'data': {'synth': {'count': 2, 'eval_count': 1, 'size': 16}},
        'output': output,
    }


class CommandTestCase(TempDirMixin, SimpleTestCase):
    def run_command(self, name, *args):
        stdout = io.StringIO()
        call_command(name, *args, stdout=stdout)
        return stdout.getvalue()

    def write_checkpoint(self, config=None, name='model.zip'):
        state = ModelState(build_model(config or randgen.tiny_model_config(), seed=3), step=0)
        path = self.path(name)
        save_checkpoint(state, path)
        return path


class TestTrainCommand(CommandTestCase):
    def test_missing_config(self):
        with self.assertRaisesRegex(CommandError, 'nope.json'):
            self.run_command('train', '--config', self.path('nope.json'))

    def test_invalid_config(self):
        config = write_json(self.path('run.json'), {'train': {'crop': 48}})
        with self.assertRaisesRegex(CommandError, 'crop'):
            self.run_command('train', '--config', config)

    def test_zero_iterations(self):
        output = self.path('run')
        config = write_json(self.path('run.json'), tiny_run_document(output))
        self.run_command('train', '--config', config, '--iters', '0')
        self.assertEqual(
            sorted(os.listdir(output)),
            ['config.json', 'report.csv', 'step-0000000.zip'],
        )
        echoed = serializers.read_run_config(os.path.join(output, 'config.json'))
        self.assertEqual(echoed.train.iters, 0)
        self.assertEqual(parse_csv(os.path.join(output, 'report.csv'))[1:], [])

    def test_short_run(self):
        config = write_json(self.path('run.json'), tiny_run_document(self.path('ignored')))
        output = self.path('elsewhere')
        out = self.run_command('train', '-c', config, '-o', output, '-s', '5')
        self.assertIn('Trained 2 step(s)', out)
        self.assertIn('Last evaluation at step 2', out)
        self.assertFalse(os.path.exists(self.path('ignored')))
        self.assertEqual(load_checkpoint(os.path.join(output, 'step-0000002.zip')).step, 2)
        rows = parse_csv_dicts(os.path.join(output, 'report.csv'))
        self.assertEqual([row['step'] for row in rows], ['1', '2'])
        self.assertEqual(serializers.read_run_config(os.path.join(output, 'config.json')).train.seed, 5)


class TestInferCommand(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.rand = random.Random(121)
        self.ckpt = self.write_checkpoint()
        os.makedirs(self.path('in'))
        data.write_image(self.path('in', 'odd.png'), randgen.random_image(self.rand, 250))
        data.write_image(self.path('in', 'small.png'), randgen.random_image(self.rand, 20, 36))

    def test_keeps_size_and_names(self):
        out = self.run_command('infer', '-k', self.ckpt, '-i', self.path('in'), '-o', self.path('out'))
        self.assertIn('Enhanced 2 image(s)', out)
        self.assertEqual(sorted(os.listdir(self.path('out'))), ['odd.png', 'small.png'])
        self.assertEqual(data.read_image(self.path('out', 'odd.png')).shape, (250, 250, 3))
        self.assertEqual(data.read_image(self.path('out', 'small.png')).shape, (20, 36, 3))

    @override_settings(DARKWAVE_INFER_WORKERS=2)
    def test_repeatable(self):
        self.run_command('infer', '-k', self.ckpt, '-i', self.path('in'), '-o', self.path('first'))
        self.run_command('infer', '-k', self.ckpt, '-i', self.path('in'), '-o', self.path('second'))
        for name in ('odd.png', 'small.png'):
            with open(self.path('first', name), 'rb') as first, open(self.path('second', name), 'rb') as second:
                self.assertEqual(first.read(), second.read())

    def test_single_file(self):
        self.run_command('infer', '-k', self.ckpt, '-i', self.path('in', 'small.png'), '-o', self.path('out'))
        self.assertEqual(os.listdir(self.path('out')), ['small.png'])

    def test_dump_priors(self):
        self.run_command(
            'infer', '-k', self.ckpt, '-i', self.path('in'), '-o', self.path('out'), '-p', self.path('priors')
        )
        self.assertEqual(
            sorted(os.listdir(self.path('priors'))),
            ['odd_gradient.png', 'odd_structure.png', 'small_gradient.png', 'small_structure.png'],
        )
        # depth 1 halves the padded input
        self.assertEqual(data.read_image(self.path('priors', 'odd_structure.png')).shape, (125, 125, 3))

    def test_missing_input(self):
        with self.assertRaisesRegex(CommandError, 'DatasetError: .*gone'):
            self.run_command('infer', '-k', self.ckpt, '-i', self.path('gone'), '-o', self.path('out'))

    def test_bad_checkpoint(self):
        with self.assertRaisesRegex(CommandError, 'CheckpointError'):
            self.run_command('infer', '-k', self.path('none.zip'), '-i', self.path('in'), '-o', self.path('out'))


class TestEvalCommand(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.rand = random.Random(122)

    def test_report(self):
        data.write_pair_tree(self.path('pairs', 'test'), randgen.generate_dataset(self.rand, 3, 16))
        ckpt = self.write_checkpoint()
        self.run_command('eval', '-k', ckpt, '-d', self.path('pairs'))
        rows = parse_csv(self.path('model-eval.csv'))
        self.assertEqual(rows[0], ['name', 'psnr', 'ssim'])
        self.assertEqual(len(rows), 1 + 3 + 1)
        self.assertEqual(rows[-1][0], 'mean')

    def test_ground_truth_against_itself(self):
        data.write_pair_tree(self.path('pairs'), randgen.generate_dataset(self.rand, 2, 16, dark=False))
        ckpt = self.write_checkpoint(ModelConfig.all_off(depth=1))
        self.run_command('eval', '-k', ckpt, '-d', self.path('pairs'), '-o', self.path('report.csv'))
        for row in parse_csv_dicts(self.path('report.csv')):
            self.assertEqual((row['psnr'], row['ssim']), ('inf', '1.0000'))

    def test_sixteen_bit_targets_match_written_outputs(self):
        data.write_pair_tree(self.path('pairs'), randgen.generate_dataset(self.rand, 2, 16), bits=16)
        ckpt = self.write_checkpoint()
        self.run_command('eval', '-k', ckpt, '-d', self.path('pairs'), '-o', self.path('report.csv'))
        self.run_command('infer', '-k', ckpt, '-i', self.path('pairs', 'low'), '-o', self.path('out'))
        rows = [row for row in parse_csv_dicts(self.path('report.csv')) if row['name'] != 'mean']
        self.assertEqual(len(rows), 2)
        for row in rows:
            # the score of the 8 bit file infer writes against the 16 bit target as read
            output = data.read_image(self.path('out', row['name']))
            target = data.read_image(self.path('pairs', 'high', row['name']))
            self.assertEqual(row['psnr'], util.format_metric(metrics.psnr(output, target)))
            self.assertEqual(row['ssim'], util.format_metric(metrics.ssim(output, target)))

    def test_split_and_dump(self):
        data.write_pair_tree(self.path('pairs', 'val'), randgen.generate_dataset(self.rand, 1, 16))
        ckpt = self.write_checkpoint()
        self.run_command(
            'eval', '-k', ckpt, '-d', self.path('pairs'), '--split', 'val', '-p', self.path('priors')
        )
        stem = data.list_images(self.path('pairs', 'val', 'low'))[0][: -len('.png')]
        self.assertEqual(
            sorted(os.listdir(self.path('priors'))),
            [f'{stem}_gradient.png', f'{stem}_reference_low.png', f'{stem}_structure.png'],
        )

    def test_empty_set(self):
        os.makedirs(self.path('pairs', 'low'))
        os.makedirs(self.path('pairs', 'high'))
        with self.assertRaisesRegex(CommandError, 'No image pairs'):
            self.run_command('eval', '-k', self.write_checkpoint(), '-d', self.path('pairs'))

    def test_unmatched_pairs(self):
        data.write_pair_tree(self.path('pairs'), randgen.generate_dataset(self.rand, 1, 16))
        data.write_image(self.path('pairs', 'low', 'stray.png'), np.zeros((16, 16, 3), np.float32))
        with self.assertRaisesRegex(CommandError, 'stray.png'):
            self.run_command('eval', '-k', self.write_checkpoint(), '-d', self.path('pairs'))


class TestVerifyCommand(CommandTestCase):
    def test_all_pass(self):
        results = [CheckResult('fourier', True, ['max error 1e-7']), CheckResult('budget', True, [])]
        with patch('darkwave.verification.run_checks', return_value=results) as run_checks:
            out = self.run_command('verify', '-r', self.path('report.txt'))
        run_checks.assert_called_once_with(None)
        self.assertIn('[PASS] fourier', out)
        with open(self.path('report.txt')) as handle:
            self.assertEqual(
                handle.read(), '[PASS] fourier\n    max error 1e-7\n[PASS] budget\n'
            )

    def test_failure(self):
        results = [CheckResult('identity', False, ['image 3 differs'])]
        with patch('darkwave.verification.run_checks', return_value=results) as run_checks:
            with self.assertRaisesRegex(CommandError, 'Failed check\\(s\\): identity'):
                self.run_command('verify', '--check', 'identity')
        run_checks.assert_called_once_with(['identity'])

    def test_real_check(self):
        out = self.run_command('verify', '-k', 'fourier', '-k', 'identity')
        self.assertIn('[PASS] fourier', out)
        self.assertIn('[PASS] identity', out)


class TestAblateCommand(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.config = write_json(self.path('run.json'), tiny_run_document(self.path('run'), iters=1))

    def test_unknown_toggle(self):
        with self.assertRaisesRegex(CommandError, 'd_mid'):
            self.run_command('ablate', '-c', self.config, '--disable', 'd_mid')

    def test_disable_rows(self):
        with patch('darkwave.ablation.ablate', return_value=[]) as ablate:
            self.run_command('ablate', '-c', self.config, '--disable', 'smgm,d_high', '-d', 'pha')
        rows = ablate.call_args.args[1]
        self.assertEqual([row.name for row in rows], ['no_smgm_d_high', 'no_pha'])
        self.assertFalse(rows[0].model.smgm or rows[0].model.d_high)

    def test_default_row(self):
        out = self.run_command('ablate', '-c', self.config, '-o', self.path('table.csv'))
        self.assertIn('default', out)
        rows = parse_csv_dicts(self.path('table.csv'))
        self.assertEqual([row['name'] for row in rows], ['default'])
        self.assertEqual(rows[0]['tag'], 'J')

    def test_preset_default_output(self):
        self.run_command('ablate', '-c', self.config, '--preset', 'identity')
        rows = parse_csv_dicts(self.path('run', 'ablation.csv'))
        self.assertEqual([(row['name'], row['params']) for row in rows], [('identity', '0')])

    def test_disable_and_preset_exclusive(self):
        with self.assertRaises(CommandError):
            self.run_command('ablate', '-c', self.config, '-d', 'amp', '-p', 'fine')


class TestErrorMessages(SimpleTestCase):
    def test_flatten_detail(self):
        detail = {'model': {'depth': ['too deep']}, 'non_field_errors': ['bad', 'worse']}
        self.assertEqual(
            commandutil.flatten_detail(detail),
            ['model.depth: too deep', 'non_field_errors: bad', 'non_field_errors: worse'],
        )
        self.assertEqual(commandutil.flatten_detail(['plain']), ['plain'])

    def test_describe_validation_error(self):
        self.assertEqual(
            commandutil.describe_validation_error(
                ValidationError({'crop': ['not divisible', 'too big'], 'lr': ['negative']})
            ),
            'crop: not divisible too big; lr: negative',
        )
        self.assertEqual(commandutil.describe_validation_error(ValidationError('nope')), 'nope')
