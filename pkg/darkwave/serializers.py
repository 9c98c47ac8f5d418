"""Validation of the JSON run configuration document through the REST
framework, one serializer per section."""

import json
import logging
import os

from django.utils.translation import gettext_lazy as _
from rest_framework import serializers

from darkwave import settings, util
from darkwave.config import (
    DataConfig,
    ModelConfig,
    RunConfig,
    SynthConfig,
    TrainConfig,
)

__all__ = [
    'ModelConfigSerializer',
    'TrainConfigSerializer',
    'SynthConfigSerializer',
    'DataConfigSerializer',
    'RunConfigSerializer',
    'parse_run_config',
    'read_run_config',
    'write_run_config',
    'CONFIG_ECHO_NAME',
]

log = logging.getLogger(__name__)

CONFIG_ECHO_NAME = 'config.json'
UNKNOWN_KEY = _('Unknown key.')


class RecordSerializer(serializers.Serializer):
    """Rejects keys it does not declare, validates the assembled record with
    its `full_clean`, and `save()`s to the record."""

    # nested sections the record is built from, name -> serializer class
    sections = {}

    def to_internal_value(self, data):
        if isinstance(data, dict):
            _missing, unknown = util.set_mismatch(self.fields.keys(), data.keys())
            if unknown:
                raise serializers.ValidationError({key: [UNKNOWN_KEY] for key in sorted(unknown)})
            # absent sections still get their defaults filled in
            data = {**{name: {} for name in self.sections}, **data}
        return super().to_internal_value(data)

    def build(self, attrs):
        values = dict(attrs)
        for name, serializer_class in self.sections.items():
            values[name] = serializer_class().build(values[name])
        return self.Meta.record(**self.coerce(values))

    def coerce(self, values):
        return values

    def validate(self, attrs):
        self.build(attrs).full_clean()
        return super().validate(attrs)

    def create(self, validated_data):
        return self.build(validated_data)


def _range(default):
    return serializers.ListField(
        child=serializers.FloatField(),
        min_length=2,
        max_length=2,
        default=lambda: list(default),
    )


class ModelConfigSerializer(RecordSerializer):
    depth = serializers.IntegerField(default=3, min_value=1, max_value=4)
    channels = serializers.IntegerField(default=3, min_value=1)
    prior_width = serializers.IntegerField(default=16, min_value=4)
    low_width = serializers.IntegerField(default=16, min_value=4)
    high_width = serializers.IntegerField(default=16, min_value=4)
    res_blocks = serializers.IntegerField(default=2, min_value=0)
    token_cap = serializers.IntegerField(
        default=lambda: settings.DARKWAVE_ATTENTION_TOKEN_CAP, min_value=1
    )

    smgm = serializers.BooleanField(default=True)
    d_low = serializers.BooleanField(default=True)
    d_high = serializers.BooleanField(default=True)
    amp = serializers.BooleanField(default=True)
    pha = serializers.BooleanField(default=True)
    spa = serializers.BooleanField(default=True)
    m_s = serializers.BooleanField(default=True)
    f_hf = serializers.BooleanField(default=True)
    f_s = serializers.BooleanField(default=True)
    wtc = serializers.BooleanField(default=True)
    dc = serializers.BooleanField(default=True)

    class Meta:
        record = ModelConfig


class TrainConfigSerializer(RecordSerializer):
    lr = serializers.FloatField(default=4.0e-4)
    milestones = serializers.ListField(
        child=serializers.IntegerField(min_value=1), allow_null=True, default=None
    )
    decay = serializers.FloatField(default=0.5)
    batch = serializers.IntegerField(default=8, min_value=1)
    crop = serializers.IntegerField(default=256, min_value=1)
    iters = serializers.IntegerField(default=150_000, min_value=0)
    lambda1 = serializers.FloatField(default=1.0)
    lambda2 = serializers.FloatField(default=0.1)
    seed = serializers.IntegerField(default=0, min_value=0)
    beta1 = serializers.FloatField(default=0.9)
    beta2 = serializers.FloatField(default=0.999)
    eps = serializers.FloatField(default=1e-8)
    clip_grad_norm = serializers.FloatField(allow_null=True, default=None)
    checkpoint_every = serializers.IntegerField(allow_null=True, default=None, min_value=1)
    eval_every = serializers.IntegerField(allow_null=True, default=None, min_value=1)
    eval_images = serializers.IntegerField(default=16, min_value=1)

    class Meta:
        record = TrainConfig

    def coerce(self, values):
        if values.get('milestones') is not None:
            values['milestones'] = tuple(values['milestones'])
        return values


class SynthConfigSerializer(RecordSerializer):
    enabled = serializers.BooleanField(default=True)
    count = serializers.IntegerField(default=64, min_value=1)
    eval_count = serializers.IntegerField(default=16, min_value=0)
    size = serializers.IntegerField(default=64, min_value=1)
    gamma = _range((2.0, 4.0))
    scale = _range((0.1, 0.5))
    sigma = _range((0.0, 0.02))
    seed = serializers.IntegerField(default=0, min_value=0)

    class Meta:
        record = SynthConfig

    def coerce(self, values):
        for field in ('gamma', 'scale', 'sigma'):
            values[field] = tuple(values[field])
        return values


class DataConfigSerializer(RecordSerializer):
    root = serializers.CharField(allow_null=True, default=None)
    train_split = serializers.CharField(default='train')
    test_split = serializers.CharField(default='test')
    synth = SynthConfigSerializer()

    sections = {'synth': SynthConfigSerializer}

    class Meta:
        record = DataConfig


class RunConfigSerializer(RecordSerializer):
    model = ModelConfigSerializer()
    train = TrainConfigSerializer()
    data = DataConfigSerializer()
    output = serializers.CharField(default='runs/darkwave')

    sections = {
        'model': ModelConfigSerializer,
        'train': TrainConfigSerializer,
        'data': DataConfigSerializer,
    }

    class Meta:
        record = RunConfig


def parse_run_config(document: dict) -> RunConfig:
    """raises rest_framework.serializers.ValidationError listing every
    offending key"""
    serializer = RunConfigSerializer(data=document)
    serializer.is_valid(raise_exception=True)
    return serializer.save()


def read_run_config(path) -> RunConfig:
    try:
        with open(path) as handle:
            document = json.load(handle)
    except FileNotFoundError:
        raise serializers.ValidationError({'config': [f'Config file {path} does not exist']})
    except json.JSONDecodeError as e:
        raise serializers.ValidationError({'config': [f'Config file {path} is not valid JSON: {e}']})
    if not isinstance(document, dict):
        raise serializers.ValidationError({'config': [f'Config file {path} must hold a JSON object']})
    return parse_run_config(document)


def write_run_config(config: RunConfig, directory) -> str:
    """echoes the complete configuration next to a run's outputs"""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, CONFIG_ECHO_NAME)
    with open(path, 'w') as handle:
        json.dump(config.as_dict(), handle, indent=2, sort_keys=True)
        handle.write('\n')
    log.debug(f'Wrote configuration to {path}')
    return path
