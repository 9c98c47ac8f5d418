"""
Self-mined guidance priors.

The coarsest wavelet low band is normalized to [eps, 1], brightened with a
learned per-channel gamma, and turned into a structural prior (the brightened
band) plus a gradient prior (its Sobel magnitude). `prior_loss` supervises
both against the ground truth's band at the same level.
"""

import dataclasses
import typing as t

import torch
import torch.nn.functional as F
from django.core.exceptions import ValidationError
from torch import nn

from darkwave.transforms import sobel_grad

__all__ = [
    'EPSILON',
    'EDGE_DIVISOR',
    'PriorPack',
    'GammaEstimator',
    'normalize_low',
    'mine_priors',
    'level_gradient_prior',
    'edge_map',
    'prior_loss',
]

EPSILON = 1e-6
# sobel response of a unit ramp
EDGE_DIVISOR = 8.0
# keeps gamma strictly inside (0, 1) when the sigmoid saturates in float32
GAMMA_MARGIN = 1e-6


@dataclasses.dataclass(frozen=True)
class PriorPack:
    structure: torch.Tensor
    gradient: torch.Tensor
    # (N, C, 1, 1)
    gamma: torch.Tensor


def normalize_low(band: torch.Tensor, level: int) -> torch.Tensor:
    if (band < 0).any():
        raise ValueError(
            f'level {level} low band has negative entries, expected a band of a [0,1] image'
        )
    return (band / 2**level).clamp(EPSILON, 1.0)


class GammaEstimator(nn.Module):
    """conv stack -> global average pool -> MLP -> sigmoid, one gamma per channel"""

    def __init__(self, channels=3, width=16):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(channels, width, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(width, width, 3, padding=1),
            nn.ReLU(),
        )
        self.mlp = nn.Sequential(
            nn.Linear(width, width),
            nn.ReLU(),
            nn.Linear(width, channels),
        )

    def forward(self, band: torch.Tensor) -> torch.Tensor:
        pooled = self.features(band).mean(dim=(-2, -1))
        gamma = torch.sigmoid(self.mlp(pooled))
        return gamma.clamp(GAMMA_MARGIN, 1 - GAMMA_MARGIN)[..., None, None]


def mine_priors(
    band: torch.Tensor,
    level: int,
    estimator: t.Optional[GammaEstimator] = None,
    gamma: t.Optional[torch.Tensor] = None,
) -> PriorPack:
    """Without an estimator (or an explicit gamma) the exponent is 1 and the
    structural prior is the normalized band itself."""
    normalized = normalize_low(band, level)
    if gamma is None:
        if estimator is not None:
            gamma = estimator(normalized)
        else:
            gamma = normalized.new_ones(*normalized.shape[:-2], 1, 1)
    structure = normalized.pow(gamma)
    return PriorPack(structure=structure, gradient=sobel_grad(structure), gamma=gamma)


def level_gradient_prior(band: torch.Tensor, level: int) -> torch.Tensor:
    # reconstructed bands may dip slightly below zero once details are edited
    return sobel_grad(normalize_low(band.clamp(min=0), level))


def edge_map(structure: torch.Tensor) -> torch.Tensor:
    return (sobel_grad(structure) / EDGE_DIVISOR).clamp(0.0, 1.0)


def _check_weight(name, value):
    if value < 0:
        raise ValidationError(f'{name} cannot be negative, got {value}')


def prior_loss(
    priors: PriorPack,
    target_low: torch.Tensor,
    level: int,
    lambda1: float = 1.0,
    lambda2: float = 0.1,
) -> torch.Tensor:
    """lambda1 * mean |G - G_gt| + lambda2 * BCE(edge(S), edge(S_gt)), the
    ground truth edges acting as a soft target"""
    _check_weight('lambda1', lambda1)
    _check_weight('lambda2', lambda2)
    target = normalize_low(target_low, level)
    gradient_term = (priors.gradient - sobel_grad(target)).abs().mean()
    edge_term = F.binary_cross_entropy(edge_map(priors.structure), edge_map(target))
    return lambda1 * gradient_term + lambda2 * edge_term
