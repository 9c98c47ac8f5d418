"""Typed configuration records for the model, the training loop and the data
pipeline. Parsing and validation of the on-disk JSON document lives in
`darkwave.serializers`."""

import dataclasses
import math
import typing as t

from django.core.exceptions import ValidationError

from darkwave import util, validators

__all__ = [
    'TOGGLES',
    'FULL_SCALE_ITERS',
    'FULL_SCALE_MILESTONES',
    'ModelConfig',
    'TrainConfig',
    'SynthSpec',
    'SynthConfig',
    'DataConfig',
    'RunConfig',
]

# module switches, in the order the ablation tables list them
TOGGLES = (
    'smgm',
    'd_low',
    'd_high',
    'amp',
    'pha',
    'spa',
    'm_s',
    'f_hf',
    'f_s',
    'wtc',
    'dc',
)

FULL_SCALE_ITERS = 150_000
FULL_SCALE_MILESTONES = (50_000, 100_000, 125_000)

# the wavelet convolution inside the low branch halves the deepest band 3 more times
SPATIAL_WAVELET_LEVELS = 3


def _collect(errors, field, check, value):
    try:
        check(value)
    except ValidationError as e:
        errors.setdefault(field, []).extend(e.messages)


class _Record:
    def as_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def clean_fields(self, errors):
        pass

    def full_clean(self):
        errors = {}
        self.clean_fields(errors)
        if errors:
            raise ValidationError(errors)
        return self


@dataclasses.dataclass(frozen=True)
class ModelConfig(_Record):
    depth: int = 3
    channels: int = 3
    prior_width: int = 16
    low_width: int = 16
    high_width: int = 16
    res_blocks: int = 2
    token_cap: int = 1024
    smgm: bool = True
    d_low: bool = True
    d_high: bool = True
    amp: bool = True
    pha: bool = True
    spa: bool = True
    m_s: bool = True
    f_hf: bool = True
    f_s: bool = True
    wtc: bool = True
    dc: bool = True

    @classmethod
    def all_off(cls, **kwargs):
        return cls(**{**{name: False for name in TOGGLES}, **kwargs})

    def toggles(self) -> t.Dict[str, bool]:
        return {name: getattr(self, name) for name in TOGGLES}

    def with_disabled(self, *names) -> 'ModelConfig':
        unknown = set(names) - set(TOGGLES)
        if unknown:
            raise ValidationError(
                f'Unknown toggle(s) {", ".join(sorted(unknown))}; valid names are {", ".join(TOGGLES)}'
            )
        return self.replace(**{name: False for name in names})

    def scaled(self, factor) -> 'ModelConfig':
        return self.replace(
            prior_width=self.prior_width * factor,
            low_width=self.low_width * factor,
            high_width=self.high_width * factor,
        )

    @property
    def uses_spatial_enhance(self):
        return self.d_low and self.spa and (self.wtc or self.dc)

    @property
    def uses_priors(self):
        return self.smgm or self.d_low or self.d_high

    @property
    def uses_attention(self):
        return self.d_low and self.pha

    def band_tokens(self, size):
        """phase attention tokens of the deepest band of a `size` square input"""
        return (size // 2**self.depth) ** 2

    @property
    def band_multiple(self):
        """the deepest band's sides must be a multiple of this"""
        if self.uses_spatial_enhance:
            # wavelet convolution and the dilation 4 reflect padding
            return 2**SPATIAL_WAVELET_LEVELS
        if self.uses_priors:
            # room for the sobel stencil
            return 4
        return 1

    @property
    def size_multiple(self):
        """input height/width must be a multiple of this"""
        return 2**self.depth * self.band_multiple

    def clean_fields(self, errors):
        if not 1 <= self.depth <= 4:
            errors.setdefault('depth', []).append('Depth must be between 1 and 4')
        for field in ('prior_width', 'low_width', 'high_width'):
            if getattr(self, field) < 4:
                errors.setdefault(field, []).append('Widths must be at least 4')
        _collect(errors, 'channels', validators.positive, self.channels)
        _collect(errors, 'res_blocks', validators.nonnegative, self.res_blocks)
        _collect(errors, 'token_cap', validators.positive, self.token_cap)
        if self.uses_attention and isinstance(self.token_cap, int) and self.token_cap > 0:
            if math.isqrt(self.token_cap) < self.band_multiple:
                errors.setdefault('token_cap', []).append(
                    f'Token cap {self.token_cap} is below the {self.band_multiple**2} tokens '
                    f'of the smallest deepest band'
                )
        for name in TOGGLES:
            if type(getattr(self, name)) != bool:
                errors.setdefault(name, []).append('Toggles must be booleans')


@dataclasses.dataclass(frozen=True)
class TrainConfig(_Record):
    lr: float = 4.0e-4
    milestones: t.Optional[t.Tuple[int, ...]] = None
    decay: float = 0.5
    batch: int = 8
    crop: int = 256
    iters: int = FULL_SCALE_ITERS
    lambda1: float = 1.0
    lambda2: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_grad_norm: t.Optional[float] = None
    checkpoint_every: t.Optional[int] = None
    eval_every: t.Optional[int] = None
    eval_images: int = 16

    def resolved_milestones(self) -> t.List[int]:
        if self.milestones is not None:
            return list(self.milestones)
        return util.scale_milestones(FULL_SCALE_MILESTONES, self.iters, FULL_SCALE_ITERS)

    @property
    def checkpoint_cadence(self):
        if self.checkpoint_every:
            return self.checkpoint_every
        return max(self.iters // 10, 100)

    @property
    def eval_cadence(self):
        return self.eval_every or self.checkpoint_cadence

    def clean_fields(self, errors):
        _collect(errors, 'lr', validators.positive, self.lr)
        _collect(errors, 'batch', validators.positive, self.batch)
        _collect(errors, 'crop', validators.positive, self.crop)
        _collect(errors, 'iters', validators.nonnegative, self.iters)
        _collect(errors, 'lambda1', validators.nonnegative, self.lambda1)
        _collect(errors, 'lambda2', validators.nonnegative, self.lambda2)
        _collect(errors, 'decay', validators.positive, self.decay)
        _collect(errors, 'eval_images', validators.positive, self.eval_images)
        if self.milestones is not None:
            _collect(errors, 'milestones', validators.strictly_increasing, self.milestones)
            if any(m < 1 for m in self.milestones):
                errors.setdefault('milestones', []).append('Milestones must be >= 1')
        if self.clip_grad_norm is not None:
            _collect(errors, 'clip_grad_norm', validators.positive, self.clip_grad_norm)
        for field in ('checkpoint_every', 'eval_every'):
            if getattr(self, field) is not None:
                _collect(errors, field, validators.positive, getattr(self, field))


@dataclasses.dataclass(frozen=True)
class SynthSpec(_Record):
    gamma: t.Tuple[float, float] = (2.0, 4.0)
    scale: t.Tuple[float, float] = (0.1, 0.5)
    sigma: t.Tuple[float, float] = (0.0, 0.02)
    seed: int = 0

    def clean_fields(self, errors):
        for field in ('gamma', 'scale', 'sigma'):
            _collect(errors, field, validators.ordered_range, getattr(self, field))
        _collect(errors, 'gamma', validators.positive, self.gamma[0])
        _collect(errors, 'scale', validators.positive, self.scale[0])
        _collect(errors, 'sigma', validators.nonnegative, self.sigma[0])


@dataclasses.dataclass(frozen=True)
class SynthConfig(_Record):
    enabled: bool = True
    count: int = 64
    eval_count: int = 16
    size: int = 64
    gamma: t.Tuple[float, float] = (2.0, 4.0)
    scale: t.Tuple[float, float] = (0.1, 0.5)
    sigma: t.Tuple[float, float] = (0.0, 0.02)
    seed: int = 0

    def spec(self) -> SynthSpec:
        return SynthSpec(gamma=self.gamma, scale=self.scale, sigma=self.sigma, seed=self.seed)

    def clean_fields(self, errors):
        _collect(errors, 'count', validators.positive, self.count)
        _collect(errors, 'eval_count', validators.nonnegative, self.eval_count)
        _collect(errors, 'size', validators.positive, self.size)
        self.spec().clean_fields(errors)


@dataclasses.dataclass(frozen=True)
class DataConfig(_Record):
    root: t.Optional[str] = None
    train_split: str = 'train'
    test_split: str = 'test'
    synth: SynthConfig = SynthConfig()

    def clean_fields(self, errors):
        if self.root is None and not self.synth.enabled:
            errors.setdefault('root', []).append(
                'Either a dataset root or synthetic data is required'
            )
        self.synth.clean_fields(errors)


@dataclasses.dataclass(frozen=True)
class RunConfig(_Record):
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    data: DataConfig = DataConfig()
    output: str = 'runs/darkwave'

    def clean_fields(self, errors):
        self.model.clean_fields(errors)
        self.train.clean_fields(errors)
        self.data.clean_fields(errors)
        multiple = self.model.size_multiple
        if self.train.crop % multiple:
            errors.setdefault('crop', []).append(
                f'Crop {self.train.crop} must be divisible by {multiple} '
                f'(2^{self.model.depth} for the decomposition, '
                f'{self.model.band_multiple} for the deepest band)'
            )
        tokens = self.model.band_tokens(self.train.crop)
        if self.model.uses_attention and tokens > self.model.token_cap:
            errors.setdefault('crop', []).append(
                f'Crop {self.train.crop} gives {tokens} phase attention tokens, '
                f'over the cap of {self.model.token_cap}'
            )
        if self.data.root is None and self.data.synth.size < self.train.crop:
            errors.setdefault('crop', []).append(
                f'Crop {self.train.crop} does not fit synthetic images of size {self.data.synth.size}'
            )
