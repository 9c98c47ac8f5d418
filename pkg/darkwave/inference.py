import dataclasses
import logging
import math
import typing as t

import numpy as np
import torch
import torch.nn.functional as F

from darkwave import data, metrics, util
from darkwave.config import ModelConfig
from darkwave.exceptions import ShapeError
from darkwave.network import EnhanceNet

__all__ = [
    'EnhanceResult',
    'EvalRow',
    'EvalResult',
    'pad_to_multiple',
    'tile_extent',
    'enhance',
    'evaluate',
]

logger = logging.getLogger(__name__)

# tile overlap on each side, as a fraction of the tile
TILE_MARGIN_DIVISOR = 8


@dataclasses.dataclass
class EnhanceResult:
    image: np.ndarray
    # deepest level priors, (H', W', C) images
    structure: t.Optional[np.ndarray] = None
    gradient: t.Optional[np.ndarray] = None


@dataclasses.dataclass(frozen=True)
class EvalRow:
    name: str
    psnr: float
    ssim: float


@dataclasses.dataclass
class EvalResult:
    rows: t.List[EvalRow]

    @property
    def mean_psnr(self):
        if not self.rows:
            return math.nan
        return float(np.mean([row.psnr for row in self.rows]))

    @property
    def mean_ssim(self):
        if not self.rows:
            return math.nan
        return float(np.mean([row.ssim for row in self.rows]))


@dataclasses.dataclass(frozen=True)
class _Window:
    """one tile along one axis of the padded input"""

    start: int
    extent: int
    # the slice of the tile's output that is kept, and where it lands
    core: int
    length: int
    target: int

    def source(self, scale=1):
        return slice(self.core // scale, self.core // scale + math.ceil(self.length / scale))

    def destination(self, scale=1):
        return slice(self.target // scale, self.target // scale + math.ceil(self.length / scale))


def _pad(batch: torch.Tensor, top, bottom, left, right) -> torch.Tensor:
    if not (top or bottom or left or right):
        return batch
    height, width = batch.shape[-2:]
    reflect = max(top, bottom) < height and max(left, right) < width
    return F.pad(batch, (left, right, top, bottom), mode='reflect' if reflect else 'replicate')


def pad_to_multiple(batch: torch.Tensor, multiple: int) -> torch.Tensor:
    """pads bottom/right up to the next multiple, reflecting where the image is
    big enough and replicating otherwise"""
    height, width = batch.shape[-2:]
    return _pad(
        batch,
        0,
        util.next_multiple(height, multiple) - height,
        0,
        util.next_multiple(width, multiple) - width,
    )


def tile_extent(config: ModelConfig) -> t.Optional[int]:
    """side of the largest square input whose deepest band the phase attention
    accepts, or None when nothing caps the input size"""
    if not config.uses_attention:
        return None
    extent = math.isqrt(config.token_cap) * 2**config.depth
    extent -= extent % config.size_multiple
    if not extent:
        raise ShapeError(
            f'a token cap of {config.token_cap} leaves no room for a '
            f'{config.size_multiple} pixel input'
        )
    return extent


def _axis_windows(size, multiple, extent, scale):
    """(pad before, pad after, windows) covering `size` pixels of one axis"""
    padded = util.next_multiple(size, multiple)
    if extent is None or padded <= extent:
        return 0, padded - size, [_Window(0, padded, 0, size, 0)]
    if extent % multiple:
        raise ShapeError(f'tiles of {extent} pixels are not a multiple of {multiple}')
    margin = max(scale, extent // TILE_MARGIN_DIVISOR // scale * scale)
    stride = extent - 2 * margin
    if stride <= 0:
        raise ShapeError(f'tiles of {extent} pixels leave no room past a {margin} pixel overlap')
    count = math.ceil(size / stride)
    windows = []
    for index in range(count):
        start = index * stride
        windows.append(_Window(start, extent, margin, min(stride, size - start), start))
    return margin, (count - 1) * stride + extent - margin - size, windows


def enhance(
    model: EnhanceNet, image: np.ndarray, with_priors=False, tile: t.Optional[int] = None
) -> EnhanceResult:
    """
    Enhances one (H, W, C) image. The input is reflect padded to the model's
    size multiple and the output cropped back. Inputs whose deepest band would
    hold more tokens than the phase attention accepts are run as overlapping
    tiles of `tile` pixels (by default the largest the cap allows), keeping the
    centre of every tile.
    """
    config = model.config
    height, width = image.shape[:2]
    scale = 2**config.depth
    extent = tile if tile is not None else tile_extent(config)
    top, bottom, rows = _axis_windows(height, config.size_multiple, extent, scale)
    left, right, columns = _axis_windows(width, config.size_multiple, extent, scale)
    if len(rows) * len(columns) > 1:
        logger.debug(
            f'Enhancing {width}x{height} as {len(columns)}x{len(rows)} tiles of {extent} pixels'
        )

    device = next(model.parameters(), torch.empty(0)).device
    batch = _pad(data.to_tensor(image).to(device), top, bottom, left, right)
    output = batch.new_zeros(1, config.channels, height, width)
    structure = gradient = None
    if with_priors and config.uses_priors:
        band_shape = (1, config.channels, math.ceil(height / scale), math.ceil(width / scale))
        structure = batch.new_zeros(band_shape)
        gradient = batch.new_zeros(band_shape)

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for row in rows:
                for column in columns:
                    window = batch[
                        ...,
                        row.start : row.start + row.extent,
                        column.start : column.start + column.extent,
                    ]
                    enhanced, priors = model(window)
                    output[..., row.destination(), column.destination()] = enhanced[
                        ..., row.source(), column.source()
                    ]
                    if structure is not None:
                        band = (..., row.destination(scale), column.destination(scale))
                        source = (..., row.source(scale), column.source(scale))
                        structure[band] = priors.structure[source]
                        gradient[band] = priors.gradient[source]
    finally:
        model.train(was_training)

    result = EnhanceResult(data.to_image(output))
    if structure is not None:
        result.structure = data.to_image(structure)
        result.gradient = data.to_image(gradient)
    return result


def evaluate(model: EnhanceNet, dataset: data.PairedDataset, limit=None) -> EvalResult:
    """PSNR/SSIM of the model's output, quantized to 8 bits as it would be
    written to disk, against the ground truth as loaded"""
    if limit is not None:
        dataset = dataset.subset(limit)
    rows = []
    for name, low, high in zip(dataset.names, dataset.lows, dataset.highs):
        prediction = data.quantize(enhance(model, low).image)
        rows.append(EvalRow(name, metrics.psnr(prediction, high), metrics.ssim(prediction, high)))
    result = EvalResult(rows)
    logger.debug(
        f'Evaluated {len(rows)} image(s): PSNR {util.format_metric(result.mean_psnr)}, '
        f'SSIM {util.format_metric(result.mean_ssim)}'
    )
    return result
