"""
Paired low/high image datasets, synthetic dark/bright pair generation and the
numpy <-> torch boundary.

Images are float32 numpy arrays in [0, 1] laid out (H, W, C) with RGB channel
order; the network side uses (N, C, H, W) tensors.
"""

import concurrent.futures
import dataclasses
import logging
import os
import pathlib
import typing as t

import cv2
import numpy as np
import torch

from darkwave import settings, util
from darkwave.config import DataConfig, SynthConfig, SynthSpec
from darkwave.exceptions import DatasetError

__all__ = [
    'IMAGE_SUFFIX',
    'PairedDataset',
    'read_image',
    'write_image',
    'quantize',
    'list_images',
    'load_pairs',
    'synth_clean',
    'synth_pair',
    'synth_dataset',
    'datasets_for',
    'write_pair_tree',
    'to_tensor',
    'to_image',
]

logger = logging.getLogger(__name__)

IMAGE_SUFFIX = '.png'
_DEPTH_SCALE = {np.dtype(np.uint8): 255.0, np.dtype(np.uint16): 65535.0}


@dataclasses.dataclass
class PairedDataset:
    split: str
    names: t.List[str] = dataclasses.field(default_factory=list)
    lows: t.List[np.ndarray] = dataclasses.field(default_factory=list)
    highs: t.List[np.ndarray] = dataclasses.field(default_factory=list)

    def __post_init__(self):
        if not (len(self.names) == len(self.lows) == len(self.highs)):
            raise DatasetError(
                f'{self.split}: {len(self.names)} names for {len(self.lows)} low and {len(self.highs)} high images'
            )
        for name, low, high in zip(self.names, self.lows, self.highs):
            if low.shape != high.shape:
                raise DatasetError(
                    f'{self.split}/{name}: low image is {low.shape[:2]} but high image is {high.shape[:2]}'
                )

    def __len__(self):
        return len(self.names)

    def __getitem__(self, index) -> t.Tuple[np.ndarray, np.ndarray]:
        return self.lows[index], self.highs[index]

    def subset(self, limit) -> 'PairedDataset':
        return PairedDataset(
            self.split, self.names[:limit], self.lows[:limit], self.highs[:limit]
        )


def read_image(path) -> np.ndarray:
    path = pathlib.Path(path)
    if path.suffix.lower() != IMAGE_SUFFIX:
        raise DatasetError(f'{path}: only PNG images are supported')
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DatasetError(f'{path}: could not decode image')
    scale = _DEPTH_SCALE.get(raw.dtype)
    if scale is None:
        raise DatasetError(f'{path}: unsupported sample type {raw.dtype}, expected 8 or 16 bit')
    if raw.ndim == 2:
        rgb = cv2.cvtColor(raw, cv2.COLOR_GRAY2RGB)
    elif raw.shape[2] == 4:
        rgb = cv2.cvtColor(raw, cv2.COLOR_BGRA2RGB)
    else:
        rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return (rgb.astype(np.float32) / scale).astype(np.float32)


def quantize(image: np.ndarray, bits=8) -> np.ndarray:
    """rounds to the nearest representable sample of a `bits` deep PNG, still
    as a float image"""
    top = 2**bits - 1
    return (np.clip(np.rint(np.asarray(image, dtype=np.float64) * top), 0, top) / top).astype(
        np.float32
    )


def write_image(path, image: np.ndarray, bits=8) -> None:
    top = 2**bits - 1
    dtype = np.uint8 if bits == 8 else np.uint16
    samples = np.clip(np.rint(np.asarray(image, dtype=np.float64) * top), 0, top).astype(dtype)
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), cv2.cvtColor(samples, cv2.COLOR_RGB2BGR)):
        raise DatasetError(f'{path}: could not encode image')


def list_images(directory) -> t.List[str]:
    """sorted file names in `directory`, hidden files skipped"""
    directory = pathlib.Path(directory)
    names = []
    for entry in sorted(os.listdir(directory)):
        if entry.startswith('.') or not (directory / entry).is_file():
            continue
        if pathlib.Path(entry).suffix.lower() != IMAGE_SUFFIX:
            raise DatasetError(f'{directory / entry}: only PNG images are supported')
        names.append(entry)
    return names


def _read_all(paths, workers):
    # map keeps submission order, so the result order stays sorted
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(read_image, paths))


def load_pairs(root, split='train', workers=None) -> PairedDataset:
    root = pathlib.Path(root)
    base = root / split if (root / split / 'low').is_dir() else root
    low_dir, high_dir = base / 'low', base / 'high'
    for directory in (low_dir, high_dir):
        if not directory.is_dir():
            raise DatasetError(f'{directory} does not exist, expected {base}/low and {base}/high')
    low_names = list_images(low_dir)
    high_names = list_images(high_dir)
    only_low, only_high = util.set_mismatch(low_names, high_names)
    if only_low or only_high:
        unmatched = [f'low/{name}' for name in sorted(only_low)]
        unmatched += [f'high/{name}' for name in sorted(only_high)]
        raise DatasetError(f'{base}: unmatched file(s) {", ".join(unmatched)}')
    workers = workers or settings.DARKWAVE_INFER_WORKERS
    lows = _read_all([low_dir / name for name in low_names], workers)
    highs = _read_all([high_dir / name for name in low_names], workers)
    logger.info(f'Loaded {len(low_names)} {split} pair(s) from {base}')
    return PairedDataset(split, list(low_names), lows, highs)


def synth_clean(size: int, seed) -> np.ndarray:
    """A smooth colour field with a few flat shapes on top, so images carry
    both illumination gradients and sharp edges."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    channels = []
    for _ in range(3):
        base, tilt_x, tilt_y = rng.uniform(0.2, 0.6), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)
        frequency, phase = rng.uniform(1.0, 4.0, size=2), rng.uniform(0, 2 * np.pi)
        wave = 0.15 * np.sin(2 * np.pi * (frequency[0] * xx + frequency[1] * yy) + phase)
        channels.append(base + tilt_x * xx + tilt_y * yy + wave)
    image = np.ascontiguousarray(np.stack(channels, axis=-1), dtype=np.float32)
    for _ in range(int(rng.integers(2, 6))):
        colour = tuple(float(c) for c in rng.uniform(0.05, 0.95, size=3))
        centre = tuple(int(c) for c in rng.integers(0, size, size=2))
        extent = int(rng.integers(max(2, size // 10), max(3, size // 3)))
        if rng.random() < 0.5:
            cv2.circle(image, centre, extent, colour, thickness=-1)
        else:
            corner = (centre[0] + extent, centre[1] + extent)
            cv2.rectangle(image, centre, corner, colour, thickness=-1)
    return np.clip(image, 0.0, 1.0)


def synth_pair(clean: np.ndarray, spec: SynthSpec, seed) -> t.Tuple[np.ndarray, np.ndarray]:
    """dark = clip(clean ** gamma * scale + noise, 0, 1), with gamma, scale and
    the noise level drawn from the spec's ranges"""
    rng = np.random.default_rng([spec.seed, *np.ravel(seed).tolist()])
    gamma = rng.uniform(*spec.gamma)
    scale = rng.uniform(*spec.scale)
    sigma = rng.uniform(*spec.sigma)
    clean = np.asarray(clean, dtype=np.float32)
    dark = np.power(clean, gamma, dtype=np.float32) * np.float32(scale)
    if sigma > 0:
        dark = dark + rng.normal(0.0, sigma, size=clean.shape).astype(np.float32)
    return np.clip(dark, 0.0, 1.0).astype(np.float32), clean


def synth_dataset(config: SynthConfig, split='train') -> PairedDataset:
    count = config.count if split == 'train' else config.eval_count
    # held-out images come from a disjoint seed stream
    stream = 0 if split == 'train' else 1
    spec = config.spec()
    names, lows, highs = [], [], []
    for index in range(count):
        clean = synth_clean(config.size, [config.seed, stream, index])
        dark, clean = synth_pair(clean, spec, [stream, index])
        names.append(f'synth_{index:04d}{IMAGE_SUFFIX}')
        lows.append(dark)
        highs.append(clean)
    logger.info(f'Generated {count} synthetic {split} pair(s) at {config.size}x{config.size}')
    return PairedDataset(split, names, lows, highs)


def write_pair_tree(root, dataset: PairedDataset, bits=8) -> None:
    root = pathlib.Path(root)
    for name, low, high in zip(dataset.names, dataset.lows, dataset.highs):
        write_image(root / 'low' / name, low, bits)
        write_image(root / 'high' / name, high, bits)


def to_tensor(image: np.ndarray) -> torch.Tensor:
    """(H, W, C) image to a (1, C, H, W) float32 batch"""
    return torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1)[None]


def to_image(tensor: torch.Tensor) -> np.ndarray:
    if tensor.dim() == 4:
        if tensor.shape[0] != 1:
            raise ValueError(f'expected a single image batch, got {tuple(tensor.shape)}')
        tensor = tensor[0]
    return tensor.detach().cpu().permute(1, 2, 0).numpy().astype(np.float32)


def datasets_for(config: DataConfig) -> t.Tuple[PairedDataset, PairedDataset]:
    """(train, test) pairs for a run: the paired tree when a root is set,
    otherwise synthetic pairs"""
    if config.root is not None:
        return (
            load_pairs(config.root, config.train_split),
            load_pairs(config.root, config.test_split),
        )
    return synth_dataset(config.synth, 'train'), synth_dataset(config.synth, 'test')
