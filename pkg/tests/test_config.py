import json
import os

from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, override_settings
from rest_framework import serializers as drf_serializers

from darkwave import serializers
from darkwave.config import (
    FULL_SCALE_MILESTONES,
    TOGGLES,
    DataConfig,
    ModelConfig,
    RunConfig,
    SynthConfig,
    TrainConfig,
)

from .util import TempDirMixin, write_json


class TestModelConfig(SimpleTestCase):
    def test_defaults(self):
        config = ModelConfig()
        self.assertEqual(config.depth, 3)
        self.assertTrue(all(config.toggles().values()))
        self.assertEqual(config.band_multiple, 8)
        self.assertEqual(config.size_multiple, 64)

    def test_size_multiple_follows_toggles(self):
        self.assertEqual(ModelConfig(spa=False).size_multiple, 32)
        self.assertEqual(ModelConfig(wtc=False, dc=False).size_multiple, 32)
        self.assertEqual(ModelConfig.all_off().size_multiple, 8)
        self.assertEqual(ModelConfig.all_off(depth=2, d_high=True).size_multiple, 16)

    def test_with_disabled(self):
        config = ModelConfig().with_disabled('smgm', 'd_high')
        self.assertFalse(config.smgm)
        self.assertFalse(config.d_high)
        self.assertTrue(config.d_low)

    def test_with_disabled_unknown(self):
        with self.assertRaises(ValidationError) as context:
            ModelConfig().with_disabled('d_mid')
        message = ' '.join(context.exception.messages)
        self.assertIn('d_mid', message)
        for name in TOGGLES:
            self.assertIn(name, message)

    def test_full_clean(self):
        with self.assertRaises(ValidationError) as context:
            ModelConfig(depth=0, low_width=2).full_clean()
        self.assertEqual(set(context.exception.message_dict), {'depth', 'low_width'})

    def test_scaled(self):
        config = ModelConfig().scaled(2)
        self.assertEqual((config.prior_width, config.low_width, config.high_width), (32, 32, 32))

    def test_token_cap_holds_smallest_band(self):
        with self.assertRaises(ValidationError) as context:
            ModelConfig(token_cap=63).full_clean()
        self.assertEqual(set(context.exception.message_dict), {'token_cap'})
        ModelConfig(token_cap=64).full_clean()
        # no attention, nothing to cap
        ModelConfig(pha=False, token_cap=4).full_clean()

    def test_band_tokens(self):
        self.assertEqual(ModelConfig().band_tokens(256), 1024)
        self.assertEqual(ModelConfig(depth=2).band_tokens(256), 4096)


class TestTrainConfig(SimpleTestCase):
    def test_milestones_scale_with_iters(self):
        self.assertEqual(TrainConfig().resolved_milestones(), list(FULL_SCALE_MILESTONES))
        self.assertEqual(TrainConfig(iters=1500).resolved_milestones(), [500, 1000, 1250])
        self.assertEqual(TrainConfig(iters=2, milestones=(1,)).resolved_milestones(), [1])

    def test_cadence(self):
        self.assertEqual(TrainConfig(iters=5000).checkpoint_cadence, 500)
        self.assertEqual(TrainConfig(iters=50).checkpoint_cadence, 100)
        self.assertEqual(TrainConfig(iters=50, checkpoint_every=5).checkpoint_cadence, 5)
        self.assertEqual(TrainConfig(iters=5000, eval_every=7).eval_cadence, 7)
        self.assertEqual(TrainConfig(iters=5000).eval_cadence, 500)

    def test_negative_weights(self):
        with self.assertRaises(ValidationError) as context:
            TrainConfig(lambda1=-1.0, lambda2=-0.5).full_clean()
        self.assertEqual(set(context.exception.message_dict), {'lambda1', 'lambda2'})

    def test_milestones_must_increase(self):
        with self.assertRaises(ValidationError):
            TrainConfig(milestones=(10, 5)).full_clean()


class TestRunConfig(SimpleTestCase):
    def test_crop_divisibility(self):
        with self.assertRaisesRegex(ValidationError, 'divisible by 64'):
            RunConfig(train=TrainConfig(crop=48), data=DataConfig(synth=SynthConfig(size=64))).full_clean()
        RunConfig(
            model=ModelConfig(spa=False),
            train=TrainConfig(crop=32),
            data=DataConfig(synth=SynthConfig(size=32)),
        ).full_clean()

    def test_crop_fits_synthetic_images(self):
        with self.assertRaisesRegex(ValidationError, 'does not fit'):
            RunConfig(train=TrainConfig(crop=128), data=DataConfig(synth=SynthConfig(size=64))).full_clean()

    def test_crop_within_token_cap(self):
        pairs = DataConfig(root='pairs')
        capped = ModelConfig(token_cap=256)
        with self.assertRaisesRegex(ValidationError, '1024 phase attention tokens, over the cap of 256'):
            RunConfig(model=capped, train=TrainConfig(crop=256), data=pairs).full_clean()
        RunConfig(model=capped, train=TrainConfig(crop=128), data=pairs).full_clean()
        RunConfig(
            model=ModelConfig(pha=False, token_cap=256), train=TrainConfig(crop=256), data=pairs
        ).full_clean()

    def test_needs_some_data(self):
        with self.assertRaises(ValidationError):
            DataConfig(synth=SynthConfig(enabled=False)).full_clean()

    def test_bad_synth_range(self):
        with self.assertRaises(ValidationError):
            SynthConfig(gamma=(4.0, 2.0)).full_clean()


class TestRunConfigSerializer(TempDirMixin, SimpleTestCase):
    def test_empty_document_is_defaults(self):
        config = serializers.parse_run_config({'train': {'crop': 64}})
        self.assertEqual(config.model, ModelConfig())
        self.assertEqual(config.train, TrainConfig(crop=64))
        self.assertEqual(config.data, DataConfig())
        self.assertEqual(config.output, 'runs/darkwave')

    def test_nested_values(self):
        config = serializers.parse_run_config(
            {
                'model': {'depth': 2, 'pha': False},
                'train': {'crop': 32, 'iters': 10, 'milestones': [4, 8]},
                'data': {'synth': {'size': 32, 'gamma': [1.5, 2.5]}},
                'output': 'elsewhere',
            }
        )
        self.assertEqual(config.model.depth, 2)
        self.assertFalse(config.model.pha)
        self.assertEqual(config.train.milestones, (4, 8))
        self.assertEqual(config.data.synth.gamma, (1.5, 2.5))
        self.assertEqual(config.output, 'elsewhere')

    def test_unknown_keys(self):
        with self.assertRaises(drf_serializers.ValidationError) as context:
            serializers.parse_run_config(
                {'model': {'dpeth': 2}, 'trian': {}, 'train': {'crop': 64}}
            )
        self.assertIn('trian', context.exception.detail)
        with self.assertRaises(drf_serializers.ValidationError) as context:
            serializers.parse_run_config({'model': {'dpeth': 2}, 'train': {'crop': 64}})
        self.assertIn('dpeth', context.exception.detail['model'])

    def test_field_errors(self):
        with self.assertRaises(drf_serializers.ValidationError) as context:
            serializers.parse_run_config({'model': {'depth': 7}, 'train': {'crop': 64}})
        self.assertIn('depth', context.exception.detail['model'])

    def test_cross_section_errors(self):
        with self.assertRaises(drf_serializers.ValidationError) as context:
            serializers.parse_run_config({'train': {'crop': 48}})
        self.assertIn('crop', json.dumps(context.exception.detail))

    @override_settings(DARKWAVE_ATTENTION_TOKEN_CAP=256)
    def test_token_cap_default_from_settings(self):
        config = serializers.parse_run_config({'train': {'crop': 64}})
        self.assertEqual(config.model.token_cap, 256)

    def test_echo_round_trip(self):
        config = serializers.parse_run_config(
            {'model': {'res_blocks': 1}, 'train': {'crop': 64, 'lambda2': 0.2}}
        )
        path = serializers.write_run_config(config, self.path('run'))
        self.assertEqual(os.path.basename(path), serializers.CONFIG_ECHO_NAME)
        self.assertEqual(serializers.read_run_config(path), config)

    def test_read_errors_name_the_path(self):
        missing = self.path('missing.json')
        with self.assertRaisesRegex(drf_serializers.ValidationError, 'missing.json'):
            serializers.read_run_config(missing)
        broken = self.path('broken.json')
        with open(broken, 'w') as handle:
            handle.write('{"model": ')
        with self.assertRaisesRegex(drf_serializers.ValidationError, 'not valid JSON'):
            serializers.read_run_config(broken)
        listed = write_json(self.path('list.json'), [1, 2])
        with self.assertRaisesRegex(drf_serializers.ValidationError, 'JSON object'):
            serializers.read_run_config(listed)
