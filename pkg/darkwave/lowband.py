"""
Low-frequency branch: the deepest wavelet low band is moved to the Fourier
domain, its amplitude is re-weighted and its phase re-mixed under guidance of
the structural prior's spectrum, then it comes back to the spatial domain for
a residual refinement (dilated convolution plus wavelet convolution).
"""

import math
import typing as t

import torch
from torch import nn

from darkwave.config import SPATIAL_WAVELET_LEVELS, ModelConfig
from darkwave.exceptions import ShapeError
from darkwave.transforms import (
    FourierPair,
    WaveletPyramid,
    decompose,
    fourier_merge,
    fourier_split,
    reconstruct,
)

__all__ = [
    'ChannelAttention',
    'AmplitudeEnhance',
    'PhaseAttention',
    'WaveletConv',
    'SpatialEnhance',
    'LowBranch',
    'attend',
]


def _same_shape(first, second, names):
    if first.shape != second.shape:
        raise ShapeError(
            f'{names[0]} {tuple(first.shape)} and {names[1]} {tuple(second.shape)} differ in shape'
        )


class ChannelAttention(nn.Module):
    def __init__(self, in_channels, out_channels, hidden):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(in_channels, hidden),
            nn.ReLU(),
            nn.Linear(hidden, out_channels),
        )

    def forward(self, x):
        return torch.sigmoid(self.mlp(x.mean(dim=(-2, -1))))[..., None, None]


class AmplitudeEnhance(nn.Module):
    """B1 = CA(A_cat) * reduce(A_cat), B2 = sigmoid(gate(A_cat)) * A, result B1 + B2"""

    def __init__(self, channels=3, width=16):
        super().__init__()
        self.attention = ChannelAttention(2 * channels, channels, width)
        self.reduce = nn.Conv2d(2 * channels, channels, 1)
        self.gate = nn.Conv2d(2 * channels, channels, 1)
        nn.init.zeros_(self.reduce.weight)
        nn.init.zeros_(self.reduce.bias)

    def forward(self, amplitude, prior_amplitude, trace=None):
        _same_shape(amplitude, prior_amplitude, ('amplitude', 'prior amplitude'))
        stacked = torch.cat((amplitude, prior_amplitude), dim=1)
        modulated = self.attention(stacked) * self.reduce(stacked)
        gated = torch.sigmoid(self.gate(stacked)) * amplitude
        if trace is not None:
            trace['amplitude'] = amplitude
            trace['amplitude_gated'] = gated
        return modulated + gated


def attend(query, key, value):
    """Scaled dot-product attention over (N, T, D) token arrays; returns the
    mixed values and the row-stochastic attention matrix."""
    logits = query @ key.transpose(-2, -1) / math.sqrt(query.shape[-1])
    weights = torch.softmax(logits, dim=-1)
    return weights @ value, weights


class PhaseAttention(nn.Module):
    def __init__(self, channels=3, width=16, token_cap=1024):
        super().__init__()
        self.width = width
        self.token_cap = token_cap
        self.query_key = nn.Conv2d(2 * channels, 2 * width, 1)
        self.value = nn.Conv2d(channels, width, 1)
        self.project = nn.Conv2d(width, channels, 1)

    def forward(self, phase, prior_phase, trace=None):
        _same_shape(phase, prior_phase, ('phase', 'prior phase'))
        batch, _, height, width = phase.shape
        tokens = height * width
        if tokens > self.token_cap:
            raise ShapeError(
                f'phase attention over {height}x{width} = {tokens} tokens exceeds the cap of {self.token_cap}'
            )
        query, key = self.query_key(torch.cat((prior_phase, phase), dim=1)).chunk(2, dim=1)
        value = self.value(phase)
        mixed, weights = attend(
            query.flatten(2).transpose(1, 2),
            key.flatten(2).transpose(1, 2),
            value.flatten(2).transpose(1, 2),
        )
        if trace is not None:
            trace['attention'] = weights
            trace['attention_values'] = value.flatten(2).transpose(1, 2)
            trace['attention_mixed'] = mixed
        mixed = mixed.transpose(1, 2).reshape(batch, self.width, height, width)
        return self.project(mixed)


class WaveletConv(nn.Module):
    """depthwise 3x3 convolution on every subband of a multi-level Haar pyramid"""

    def __init__(self, channels=3, levels=SPATIAL_WAVELET_LEVELS):
        super().__init__()
        self.levels = levels
        self.detail_convs = nn.ModuleList(
            nn.Conv2d(
                3 * channels,
                3 * channels,
                3,
                padding=1,
                groups=3 * channels,
                bias=False,
            )
            for _ in range(levels)
        )
        self.low_conv = nn.Conv2d(
            channels, channels, 3, padding=1, groups=channels, bias=False
        )

    def forward(self, x):
        pyramid = decompose(x, self.levels)
        levels = []
        for level, conv in zip(pyramid.levels, self.detail_convs):
            HL, LH, HH = conv(torch.cat(level.details, dim=1)).chunk(3, dim=1)
            levels.append(level.replace(HL=HL, LH=LH, HH=HH))
        levels[-1] = levels[-1].replace(L=self.low_conv(levels[-1].L))
        return reconstruct(WaveletPyramid(tuple(levels)))


class SpatialEnhance(nn.Module):
    """y = x + fuse(dilated(x), wavelet(x)); fuse starts at zero so y = x"""

    def __init__(self, channels=3, dilated=True, wavelet=True):
        super().__init__()
        self.dilated = (
            nn.Conv2d(channels, channels, 3, padding=4, dilation=4, padding_mode='reflect')
            if dilated
            else None
        )
        self.wavelet = WaveletConv(channels) if wavelet else None
        paths = int(dilated) + int(wavelet)
        if not paths:
            raise ValueError('spatial enhancement needs the dilated or the wavelet path')
        self.fuse = nn.Conv2d(paths * channels, channels, 1)
        nn.init.zeros_(self.fuse.weight)
        nn.init.zeros_(self.fuse.bias)

    def forward(self, x):
        outputs = []
        if self.dilated is not None:
            outputs.append(self.dilated(x))
        if self.wavelet is not None:
            outputs.append(self.wavelet(x))
        return x + self.fuse(torch.cat(outputs, dim=1))


class LowBranch(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        channels, width = config.channels, config.low_width
        self.amplitude = AmplitudeEnhance(channels, width) if config.amp else None
        self.phase = (
            PhaseAttention(channels, width, config.token_cap) if config.pha else None
        )
        self.spatial = (
            SpatialEnhance(channels, dilated=config.dc, wavelet=config.wtc)
            if config.uses_spatial_enhance
            else None
        )

    def forward(self, band, structure, trace: t.Optional[dict] = None):
        _same_shape(band, structure, ('low band', 'structural prior'))
        spectrum = fourier_split(band)
        prior = fourier_split(structure)
        amplitude, phase = spectrum.amplitude, spectrum.phase
        if self.amplitude is not None:
            amplitude = self.amplitude(amplitude, prior.amplitude, trace)
        if self.phase is not None:
            phase = self.phase(phase, prior.phase, trace)
        spatial = fourier_merge(FourierPair(amplitude, phase))
        if self.spatial is not None:
            spatial = self.spatial(spatial)
        return spatial
