"""
Parameter-free signal transforms: orthonormal Haar DWT/IDWT, Fourier
amplitude/phase split and merge, and Sobel gradient magnitude.

Everything here works on tensors laid out as (..., C, H, W) and is a pure
function of its inputs, so it is safe to call from several threads at once.
"""

import dataclasses
import typing as t

import torch
import torch.nn.functional as F

from darkwave.exceptions import NonFiniteError, ShapeError

__all__ = [
    'WaveletLevel',
    'WaveletPyramid',
    'FourierPair',
    'dwt2',
    'idwt2',
    'decompose',
    'reconstruct',
    'fourier_split',
    'fourier_merge',
    'sobel_grad',
    'SOBEL_X',
    'SOBEL_Y',
]

SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.t().contiguous()


@dataclasses.dataclass(frozen=True)
class WaveletLevel:
    L: torch.Tensor
    HL: torch.Tensor
    LH: torch.Tensor
    HH: torch.Tensor

    @property
    def details(self) -> t.Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return self.HL, self.LH, self.HH

    def replace(self, **changes) -> 'WaveletLevel':
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class WaveletPyramid:
    # index 0 is the finest level (level 1)
    levels: t.Tuple[WaveletLevel, ...]

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def coarsest(self) -> WaveletLevel:
        return self.levels[-1]

    def level(self, i) -> WaveletLevel:
        """1-based access, matching the decomposition level numbering"""
        return self.levels[i - 1]


@dataclasses.dataclass(frozen=True)
class FourierPair:
    amplitude: torch.Tensor
    phase: torch.Tensor


def _spatial_shape(x, op):
    if x.dim() < 2:
        raise ShapeError(f'{op} needs at least 2 dimensions, got shape {tuple(x.shape)}')
    return x.shape[-2], x.shape[-1]


def dwt2(x: torch.Tensor) -> WaveletLevel:
    height, width = _spatial_shape(x, 'dwt2')
    if height % 2:
        raise ShapeError(f'dwt2 needs an even height, got {height}')
    if width % 2:
        raise ShapeError(f'dwt2 needs an even width, got {width}')
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return WaveletLevel(
        L=(a + b + c + d) / 2,
        HL=(a - b + c - d) / 2,
        LH=(a + b - c - d) / 2,
        HH=(a - b - c + d) / 2,
    )


def idwt2(level: WaveletLevel) -> torch.Tensor:
    bands = (level.L, level.HL, level.LH, level.HH)
    shapes = [tuple(band.shape) for band in bands]
    if len(set(shapes)) != 1:
        raise ShapeError(
            'idwt2 needs four subbands of equal shape, got L={0} HL={1} LH={2} HH={3}'.format(
                *shapes
            )
        )
    L, HL, LH, HH = bands
    a = (L + HL + LH + HH) / 2
    b = (L - HL + LH - HH) / 2
    c = (L + HL - LH - HH) / 2
    d = (L - HL - LH + HH) / 2
    # interleave columns, then rows
    top = torch.stack((a, b), dim=-1).flatten(-2)
    bottom = torch.stack((c, d), dim=-1).flatten(-2)
    return torch.stack((top, bottom), dim=-2).flatten(-3, -2)


def decompose(x: torch.Tensor, depth: int) -> WaveletPyramid:
    if depth < 1:
        raise ValueError(f'decomposition depth must be >= 1, got {depth}')
    height, width = _spatial_shape(x, 'decompose')
    factor = 2**depth
    for axis, size in (('height', height), ('width', width)):
        if size % factor:
            raise ShapeError(
                f'{axis} {size} is not divisible by 2^{depth} = {factor}'
            )
    levels = []
    low = x
    for _ in range(depth):
        level = dwt2(low)
        levels.append(level)
        low = level.L
    return WaveletPyramid(tuple(levels))


def reconstruct(pyramid: WaveletPyramid) -> torch.Tensor:
    if not pyramid.levels:
        raise ValueError('cannot reconstruct an empty pyramid')
    low = pyramid.coarsest.L
    for index in reversed(range(pyramid.depth)):
        level = pyramid.levels[index]
        if low.shape != level.HL.shape:
            raise ShapeError(
                f'level {index + 1} details are {tuple(level.HL.shape)} but the '
                f'band reconstructed below it is {tuple(low.shape)}'
            )
        low = idwt2(level.replace(L=low))
    return low


def fourier_split(x: torch.Tensor) -> FourierPair:
    if not torch.isfinite(x).all():
        raise NonFiniteError('fourier_split')
    spectrum = torch.fft.fft2(x, dim=(-2, -1))
    return FourierPair(amplitude=spectrum.abs(), phase=spectrum.angle())


def fourier_merge(pair: FourierPair) -> torch.Tensor:
    if pair.amplitude.shape != pair.phase.shape:
        raise ShapeError(
            f'amplitude {tuple(pair.amplitude.shape)} and phase '
            f'{tuple(pair.phase.shape)} differ in shape'
        )
    real = pair.amplitude * torch.cos(pair.phase)
    imag = pair.amplitude * torch.sin(pair.phase)
    return torch.fft.ifft2(torch.complex(real, imag), dim=(-2, -1)).real


def sobel_grad(x: torch.Tensor) -> torch.Tensor:
    height, width = _spatial_shape(x, 'sobel_grad')
    if height < 3 or width < 3:
        raise ShapeError(
            f'sobel_grad needs at least 3x3 pixels, got {height}x{width}'
        )
    lead = x.shape[:-2]
    flat = x.reshape(-1, 1, height, width)
    padded = F.pad(flat, (1, 1, 1, 1), mode='reflect')
    kernels = torch.stack((SOBEL_X, SOBEL_Y)).unsqueeze(1).to(x)
    squared = F.conv2d(padded, kernels).pow(2).sum(dim=1)
    # sqrt has an infinite slope at 0, keep flat regions out of it
    nonzero = squared > 0
    safe = torch.where(nonzero, squared, torch.ones_like(squared))
    magnitude = torch.where(nonzero, safe.sqrt(), torch.zeros_like(squared))
    return magnitude.reshape(*lead, height, width)
