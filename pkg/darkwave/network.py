"""
Full enhancement network: Haar pyramid, priors and the Fourier low branch at
the deepest level, high branches on every level's details, and progressive
reconstruction back to the input resolution.
"""

import dataclasses
import logging
import typing as t

import torch
from torch import nn

from darkwave.config import ModelConfig
from darkwave.exceptions import NonFiniteError, ShapeError
from darkwave.highband import HighBranch
from darkwave.lowband import LowBranch, PhaseAttention
from darkwave.priors import GammaEstimator, PriorPack, level_gradient_prior, mine_priors
from darkwave.transforms import decompose, idwt2

__all__ = [
    'EnhanceNet',
    'ModelState',
    'build_model',
    'count_params',
    'param_report',
    'estimate_macs',
    'check_budget',
    'REFERENCE_PARAMS',
]

logger = logging.getLogger(__name__)

# published size of the reference model, reported next to our own count
REFERENCE_PARAMS = 210_000


def _check_finite(module, *tensors):
    for tensor in tensors:
        if not torch.isfinite(tensor).all():
            raise NonFiniteError(module)


class EnhanceNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.estimator = (
            GammaEstimator(config.channels, config.prior_width) if config.smgm else None
        )
        self.low = LowBranch(config) if config.d_low else None
        self.high = (
            nn.ModuleList(HighBranch(config) for _ in range(config.depth))
            if config.d_high
            else None
        )

    def check_input(self, x):
        if x.dim() != 4 or x.shape[1] != self.config.channels:
            raise ShapeError(
                f'expected an (N, {self.config.channels}, H, W) batch, got {tuple(x.shape)}'
            )
        multiple = self.config.size_multiple
        for axis, size in (('height', x.shape[-2]), ('width', x.shape[-1])):
            if size % multiple:
                raise ShapeError(
                    f'{axis} {size} is not a multiple of {multiple} for this configuration'
                )

    def forward(
        self, x: torch.Tensor, trace: t.Optional[dict] = None
    ) -> t.Tuple[torch.Tensor, t.Optional[PriorPack]]:
        self.check_input(x)
        depth = self.config.depth
        pyramid = decompose(x, depth)
        low = pyramid.coarsest.L

        priors = None
        if self.config.uses_priors:
            priors = mine_priors(low, depth, self.estimator)
            _check_finite('priors', priors.structure, priors.gradient, priors.gamma)
            if trace is not None:
                trace['gamma'] = priors.gamma

        if self.low is not None:
            # the branch works on the band in image range
            scale = 2**depth
            low = self.low(low / scale, priors.structure, trace) * scale
            _check_finite('low_branch', low)

        for index in reversed(range(depth)):
            number = index + 1
            level = pyramid.levels[index].replace(L=low)
            if self.high is not None:
                branch = self.high[index]
                prior = None
                if branch.needs_prior:
                    if number == depth:
                        prior = priors.gradient
                    else:
                        prior = level_gradient_prior(low, number)
                level_trace = None
                if trace is not None:
                    level_trace = trace.setdefault('levels', {}).setdefault(number, {})
                level = branch(level, prior, level_trace)
                _check_finite(f'high_branch[{number}]', *level.details)
            low = idwt2(level)

        if not self.training:
            low = low.clamp(0.0, 1.0)
        return low, priors


@dataclasses.dataclass
class ModelState:
    model: EnhanceNet
    step: int = 0

    @property
    def config(self) -> ModelConfig:
        return self.model.config


def build_model(config: ModelConfig, seed: t.Optional[int] = None) -> EnhanceNet:
    if seed is None:
        return EnhanceNet(config)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return EnhanceNet(config)


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def param_report(model: EnhanceNet) -> t.Dict[str, int]:
    """trainable scalars per module, branches broken down one level further"""
    report = {}
    for name, parameter in model.named_parameters():
        if not parameter.requires_grad:
            continue
        parts = name.split('.')
        key = '.'.join(parts[:2]) if parts[0] in ('low', 'high') else parts[0]
        report[key] = report.get(key, 0) + parameter.numel()
    return report


def check_budget(model: nn.Module, budget: int) -> t.Tuple[int, bool]:
    count = count_params(model)
    if count > budget:
        logger.warning(f'Model has {count} trainable parameters, over the budget of {budget}')
    return count, count <= budget


def estimate_macs(model: EnhanceNet, height: int, width: int) -> int:
    """Multiply-accumulates of one forward pass at the given size, counted per
    convolution, linear layer and attention product."""
    total = 0

    def conv_hook(module, inputs, output):
        nonlocal total
        kernel = module.kernel_size[0] * module.kernel_size[1]
        total += output[0].numel() * (module.in_channels // module.groups) * kernel

    def linear_hook(module, inputs, output):
        nonlocal total
        total += module.in_features * module.out_features

    def attention_hook(module, inputs, output):
        nonlocal total
        tokens = inputs[0].shape[-2] * inputs[0].shape[-1]
        # QK^T and attention @ V
        total += 2 * tokens * tokens * module.width

    handles = []
    for module in model.modules():
        if isinstance(module, nn.Conv2d):
            handles.append(module.register_forward_hook(conv_hook))
        elif isinstance(module, nn.Linear):
            handles.append(module.register_forward_hook(linear_hook))
        elif isinstance(module, PhaseAttention):
            handles.append(module.register_forward_hook(attention_hook))
    was_training = model.training
    try:
        model.eval()
        with torch.no_grad():
            model(torch.zeros(1, model.config.channels, height, width))
    finally:
        for handle in handles:
            handle.remove()
        model.train(was_training)
    return total
