"""High-frequency branch: gradient-prior gated enhancement of one level's HL, LH
and HH subbands."""

import typing as t

import torch
from torch import nn

from darkwave.config import ModelConfig
from darkwave.exceptions import ShapeError
from darkwave.transforms import WaveletLevel

__all__ = ['SeparableConv', 'GateMap', 'ResBlock', 'HighBranch']

# keeps the gate strictly inside (0, 1) when the sigmoid saturates in float32
GATE_MARGIN = 1e-6


class SeparableConv(nn.Module):
    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.depthwise = nn.Conv2d(
            in_channels, in_channels, 3, padding=1, groups=in_channels
        )
        self.pointwise = nn.Conv2d(in_channels, out_channels, 1)

    def forward(self, x):
        return self.pointwise(self.depthwise(x))


class GateMap(nn.Module):
    """single channel spatial gate M_s = sigmoid(1x1(separable(G)))"""

    def __init__(self, channels=3, width=16):
        super().__init__()
        self.features = SeparableConv(channels, width)
        self.gate = nn.Conv2d(width, 1, 1)

    def forward(self, prior):
        gate = torch.sigmoid(self.gate(self.features(prior)))
        return gate.clamp(GATE_MARGIN, 1 - GATE_MARGIN)


class ResBlock(nn.Module):
    def __init__(self, width):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(width, width, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(width, width, 3, padding=1),
        )

    def forward(self, x):
        return x + self.body(x)


class HighBranch(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        channels, width = config.channels, config.high_width
        self.gate = GateMap(channels, width) if config.m_s else None
        if config.f_s:
            self.spatial = SeparableConv(3 * channels, width)
        else:
            self.spatial = nn.Conv2d(3 * channels, width, 1)
        self.use_hf = config.f_hf
        self.fuse = nn.Conv2d(
            width + (channels if config.f_hf else 0), width, 3, padding=1
        )
        self.blocks = nn.Sequential(*(ResBlock(width) for _ in range(config.res_blocks)))
        self.heads = nn.ModuleList(
            nn.Conv2d(width, channels, 3, padding=1) for _ in range(3)
        )

    @property
    def needs_prior(self):
        return self.gate is not None or self.use_hf

    def forward(
        self,
        level: WaveletLevel,
        prior: t.Optional[torch.Tensor],
        trace: t.Optional[dict] = None,
    ) -> WaveletLevel:
        shapes = {tuple(band.shape) for band in level.details}
        if len(shapes) != 1:
            raise ShapeError(
                'HL, LH and HH must share a shape, got {0}, {1} and {2}'.format(
                    *(tuple(band.shape) for band in level.details)
                )
            )
        if self.needs_prior:
            if prior is None:
                raise ValueError('this high branch needs a gradient prior')
            if tuple(prior.shape) not in shapes:
                raise ShapeError(
                    f'gradient prior {tuple(prior.shape)} does not match subbands {shapes.pop()}'
                )
        features = self.spatial(torch.cat(level.details, dim=1))
        if self.gate is not None:
            gate = self.gate(prior)
            if trace is not None:
                trace['gate'] = gate
                trace['spatial_features'] = features
            features = features * gate + features
        if self.use_hf:
            combined = level.HL + level.LH + level.HH + prior
            features = torch.cat((features, combined), dim=1)
        refined = self.blocks(self.fuse(features))
        HL, LH, HH = (head(refined) for head in self.heads)
        return level.replace(HL=HL, LH=LH, HH=HH)
