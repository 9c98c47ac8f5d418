"""Full-reference image quality metrics over (H, W, C) images in [0, 1]."""

import math

import numpy as np
import torch
import torch.nn.functional as F

from darkwave.exceptions import ShapeError

__all__ = ['psnr', 'ssim', 'gaussian_window', 'SSIM_WINDOW', 'SSIM_SIGMA']

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 1.0


def _as_float64(image):
    if isinstance(image, torch.Tensor):
        return image.detach().cpu().to(torch.float64)
    return torch.from_numpy(np.asarray(image, dtype=np.float64))


def _pair(a, b, metric):
    a, b = _as_float64(a), _as_float64(b)
    if a.shape != b.shape:
        raise ShapeError(f'{metric} needs equal shapes, got {tuple(a.shape)} and {tuple(b.shape)}')
    return a, b


def psnr(a, b) -> float:
    """10 log10(1 / MSE) over every channel jointly; identical images give inf"""
    a, b = _pair(a, b, 'psnr')
    mse = float(((a - b) ** 2).mean())
    if mse == 0:
        return math.inf
    return 10 * math.log10(DYNAMIC_RANGE**2 / mse)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA) -> torch.Tensor:
    offsets = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    profile = torch.exp(-(offsets**2) / (2 * sigma**2))
    profile = profile / profile.sum()
    return torch.outer(profile, profile)


def _luminance(image):
    if image.dim() == 3:
        return image.mean(dim=-1)
    if image.dim() == 2:
        return image
    raise ShapeError(f'ssim expects an (H, W) or (H, W, C) image, got {tuple(image.shape)}')


def ssim(a, b) -> float:
    """mean SSIM over the valid 11x11 gaussian windows of the channel-mean
    luminance"""
    a, b = _pair(a, b, 'ssim')
    a, b = _luminance(a), _luminance(b)
    height, width = a.shape
    if height < SSIM_WINDOW or width < SSIM_WINDOW:
        raise ShapeError(
            f'ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {height}x{width}'
        )
    window = gaussian_window()[None, None]

    def local_mean(x):
        return F.conv2d(x[None, None], window)[0, 0]

    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    mean_a, mean_b = local_mean(a), local_mean(b)
    mean_ab = mean_a * mean_b
    var_a = local_mean(a * a) - mean_a * mean_a
    var_b = local_mean(b * b) - mean_b * mean_b
    covariance = local_mean(a * b) - mean_ab
    numerator = (2 * mean_ab + c1) * (2 * covariance + c2)
    denominator = (mean_a * mean_a + mean_b * mean_b + c1) * (var_a + var_b + c2)
    return float((numerator / denominator).mean())
