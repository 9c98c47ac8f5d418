"""
Self checks of the numerics, run by the `verify` command.

Each check returns a `CheckResult` with human readable report lines; a check
fails by returning `passed=False`, never by raising.
"""

import dataclasses
import logging
import math
import typing as t

import numpy as np
import torch
import torch.nn.functional as F

from darkwave import data, metrics, settings, util
from darkwave.config import ModelConfig, TrainConfig
from darkwave.network import (
    REFERENCE_PARAMS,
    build_model,
    count_params,
    estimate_macs,
    param_report,
)
from darkwave.training import total_loss
from darkwave.transforms import (
    decompose,
    fourier_merge,
    fourier_split,
    reconstruct,
)

__all__ = [
    'CheckResult',
    'SamplingRow',
    'SAMPLING_METHODS',
    'round_trip',
    'sampling_comparison',
    'check_sampling',
    'check_fourier',
    'gradient_probes',
    'check_gradients',
    'check_budget',
    'check_identity',
    'check_ranges',
    'CHECKS',
    'run_checks',
]

logger = logging.getLogger(__name__)

ROUNDS = 3
LOSSLESS_TOLERANCE = 1e-5
GRADIENT_TOLERANCE = 1e-3
ATTENTION_TOLERANCE = 1e-6
SAMPLING_IMAGES = 20
SAMPLING_SIZE = 64


@dataclasses.dataclass
class CheckResult:
    name: str
    passed: bool
    lines: t.List[str] = dataclasses.field(default_factory=list)


@dataclasses.dataclass(frozen=True)
class SamplingRow:
    method: str
    psnr: float
    ssim: float
    max_abs: float


def _resample(x, method, factor):
    if method == 'strided':
        if factor < 1:
            return x[..., ::2, ::2]
        return x.repeat_interleave(2, dim=-2).repeat_interleave(2, dim=-1)
    return F.interpolate(x, scale_factor=factor, mode=method, align_corners=False)


def round_trip(x: torch.Tensor, method: str, rounds=ROUNDS) -> torch.Tensor:
    """down- then up-sample `rounds` times with the given method"""
    if method == 'wavelet':
        return reconstruct(decompose(x, rounds))
    for _ in range(rounds):
        x = _resample(x, method, 0.5)
    for _ in range(rounds):
        x = _resample(x, method, 2.0)
    return x.clamp(0.0, 1.0)


SAMPLING_METHODS = ('wavelet', 'bilinear', 'bicubic', 'strided')


def checkerboard(size, cell=1):
    pattern = (np.indices((size, size)) // cell).sum(axis=0) % 2
    return np.repeat(pattern[..., None], 3, axis=-1).astype(np.float32)


def sampling_images(count=SAMPLING_IMAGES, size=SAMPLING_SIZE):
    # 8-bit exact inputs, as if read from PNG files
    images = [checkerboard(size)]
    images += [data.quantize(data.synth_clean(size, [7, index])) for index in range(count - 1)]
    return images


def sampling_comparison(images, methods=SAMPLING_METHODS) -> t.List[SamplingRow]:
    rows = []
    for method in methods:
        psnrs, ssims, max_abs = [], [], 0.0
        for image in images:
            batch = data.to_tensor(image)
            restored = round_trip(batch, method)
            max_abs = max(max_abs, float((restored - batch).abs().max()))
            restored = data.quantize(data.to_image(restored))
            psnrs.append(metrics.psnr(restored, image))
            ssims.append(metrics.ssim(restored, image))
        rows.append(SamplingRow(method, float(np.mean(psnrs)), float(np.mean(ssims)), max_abs))
    return rows


def _format_row(row: SamplingRow):
    return (
        f'{row.method:<9} PSNR {util.format_metric(row.psnr, 2):>8}  '
        f'SSIM {util.format_metric(row.ssim):>6}  max|err| {row.max_abs:.2e}'
    )


def check_sampling() -> CheckResult:
    rows = sampling_comparison(sampling_images())
    lines = [f'{ROUNDS}-round down/up sampling on {SAMPLING_IMAGES} images']
    lines += [_format_row(row) for row in rows]
    passed = True
    for row in rows:
        if row.method == 'wavelet':
            lossless = (
                row.max_abs < LOSSLESS_TOLERANCE and math.isinf(row.psnr) and row.ssim == 1.0
            )
            if not lossless:
                lines.append('FAIL: wavelet sampling is not lossless')
                passed = False
        elif row.ssim >= 1.0:
            lines.append(f'FAIL: {row.method} sampling unexpectedly reports SSIM 1.0')
            passed = False
    return CheckResult('sampling', passed, lines)


def check_fourier(count=20) -> CheckResult:
    generator = torch.Generator().manual_seed(11)
    worst = 0.0
    for _ in range(count):
        x = torch.rand(3, 32, 32, generator=generator)
        worst = max(worst, float((fourier_merge(fourier_split(x)) - x).abs().max()))
    passed = worst < LOSSLESS_TOLERANCE
    lines = [f'Fourier split/merge on {count} arrays: max|err| {worst:.2e}']
    if not passed:
        lines.append('FAIL: Fourier round trip is not an identity')
    return CheckResult('fourier', passed, lines)


# one probe per tensor, covering every learned stage the loss reaches
PROBED_PARAMETERS = (
    'estimator.features.0.weight',
    'estimator.mlp.2.weight',
    'low.amplitude.gate.weight',
    'low.amplitude.reduce.weight',
    'low.amplitude.attention.mlp.0.weight',
    'low.phase.query_key.weight',
    'low.phase.value.weight',
    'low.phase.project.weight',
    'low.spatial.fuse.weight',
    'high.0.gate.gate.weight',
    'high.0.gate.features.pointwise.weight',
)

GRADIENT_CONFIG = ModelConfig(depth=1, prior_width=8, low_width=8, high_width=8, res_blocks=1)


def gradient_probes(
    config: ModelConfig = GRADIENT_CONFIG,
    size=16,
    seed=0,
    names=PROBED_PARAMETERS,
    step=1e-6,
) -> t.List[t.Tuple[str, float, float]]:
    """(name[index], analytic, central difference) for one entry of every named
    parameter, on the float64 total loss of a random pair"""
    generator = torch.Generator().manual_seed(seed)
    model = build_model(config, seed=seed).double()
    model.train()
    with torch.no_grad():
        # zero-initialized blends would hide every gradient upstream of them
        for parameter in model.parameters():
            parameter.add_(
                0.1 * torch.randn(parameter.shape, generator=generator, dtype=torch.float64)
            )
    low = torch.rand(1, config.channels, size, size, generator=generator, dtype=torch.float64)
    high = torch.rand(1, config.channels, size, size, generator=generator, dtype=torch.float64)
    train_config = TrainConfig()

    def loss():
        prediction, priors = model(low)
        target_low = decompose(high, config.depth).coarsest.L
        return total_loss(prediction, high, priors, target_low, config.depth, train_config).total

    parameters = dict(model.named_parameters())
    model.zero_grad()
    loss().backward()
    probes = []
    with torch.no_grad():
        for name in names:
            parameter = parameters[name]
            index = int(torch.randint(parameter.numel(), (1,), generator=generator))
            flat = parameter.view(-1)
            original = float(flat[index])
            flat[index] = original + step
            upper = float(loss())
            flat[index] = original - step
            lower = float(loss())
            flat[index] = original
            numeric = (upper - lower) / (2 * step)
            probes.append((f'{name}[{index}]', float(parameter.grad.view(-1)[index]), numeric))
    return probes


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients() -> CheckResult:
    probes = gradient_probes()
    lines = ['Analytic vs central difference gradients of the total loss (16x16, float64)']
    passed = True
    for name, analytic, numeric in probes:
        error = relative_error(analytic, numeric)
        ok = error <= GRADIENT_TOLERANCE
        passed = passed and ok
        lines.append(
            f'{"ok  " if ok else "FAIL"} {name:<48} {analytic:+.6e} {numeric:+.6e} rel {error:.1e}'
        )
    return CheckResult('gradients', passed, lines)


def check_budget() -> CheckResult:
    model = build_model(ModelConfig(), seed=0)
    count = count_params(model)
    budget = settings.DARKWAVE_PARAM_BUDGET
    lines = [
        f'Default model: {count:,} trainable parameters '
        f'(budget {budget:,}, reference {REFERENCE_PARAMS / 1e6:.2f}M)'
    ]
    lines += [f'  {name:<16} {value:>8,}' for name, value in param_report(model).items()]
    lines.append(f'  ~{estimate_macs(model, 256, 256) / 1e9:.3f} GMACs at 256x256')
    passed = count <= budget
    if not passed:
        lines.append('FAIL: parameter count is over budget')
    return CheckResult('budget', passed, lines)


def check_identity(count=10, size=64) -> CheckResult:
    model = build_model(ModelConfig.all_off(), seed=0).eval()
    generator = torch.Generator().manual_seed(5)
    worst = 0.0
    with torch.no_grad():
        for _ in range(count):
            x = torch.rand(1, 3, size, size, generator=generator)
            output, _ = model(x)
            worst = max(worst, float((output - x).abs().max()))
    passed = worst < LOSSLESS_TOLERANCE
    lines = [f'All modules off, {count} images: max|output - input| {worst:.2e}']
    if not passed:
        lines.append('FAIL: identity fallback does not reproduce the input')
    return CheckResult('identity', passed, lines)


def range_violations(trace) -> t.List[str]:
    violations = []
    gamma = trace.get('gamma')
    if gamma is not None and not ((gamma > 0) & (gamma < 1)).all():
        violations.append('gamma outside (0, 1)')
    attention = trace.get('attention')
    if attention is not None:
        if (attention.sum(dim=-1) - 1).abs().max() > ATTENTION_TOLERANCE:
            violations.append('attention rows do not sum to 1')
        mixed, values = trace['attention_mixed'], trace['attention_values']
        lower = values.min(dim=-2, keepdim=True).values
        upper = values.max(dim=-2, keepdim=True).values
        slack = 1e-5 * (1 + values.abs().max())
        if ((mixed < lower - slack) | (mixed > upper + slack)).any():
            violations.append('attention output leaves the span of the values')
    if 'amplitude_gated' in trace:
        if (trace['amplitude_gated'].abs() > trace['amplitude'].abs()).any():
            violations.append('gated amplitude exceeds the input amplitude')
    for number, level in trace.get('levels', {}).items():
        gate = level.get('gate')
        if gate is not None and not ((gate > 0) & (gate < 1)).all():
            violations.append(f'level {number} gate outside (0, 1)')
    return violations


def check_ranges(models=10, forwards=10, size=64) -> CheckResult:
    generator = torch.Generator().manual_seed(3)
    failures = []
    for seed in range(models):
        model = build_model(ModelConfig(), seed=seed).eval()
        with torch.no_grad():
            for _ in range(forwards):
                trace = {}
                model(torch.rand(1, 3, size, size, generator=generator), trace=trace)
                failures.extend(range_violations(trace))
    total = models * forwards
    lines = [f'Range invariants over {total} random forwards: {len(failures)} violation(s)']
    lines += [f'FAIL: {failure}' for failure in sorted(set(failures))]
    return CheckResult('ranges', not failures, lines)


CHECKS = {
    'sampling': check_sampling,
    'fourier': check_fourier,
    'gradients': check_gradients,
    'budget': check_budget,
    'identity': check_identity,
    'ranges': check_ranges,
}


def run_checks(names=None) -> t.List[CheckResult]:
    results = []
    for name in names or CHECKS:
        logger.info(f'Running check {name}')
        results.append(CHECKS[name]())
    return results
