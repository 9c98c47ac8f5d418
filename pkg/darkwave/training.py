"""
Loss assembly and the training loop.

One update stream owns the model: Adam with a multi-step learning rate decay,
random crops and flips drawn from a seeded generator, periodic evaluation on
a snapshot of the parameters and periodic checkpoints.
"""

import copy
import csv
import dataclasses
import logging
import os
import time
import typing as t

import torch
from django.core.exceptions import ValidationError
from torch import nn

from darkwave import settings, util
from darkwave.checkpoint import save_checkpoint
from darkwave.config import ModelConfig, TrainConfig
from darkwave.data import PairedDataset
from darkwave.exceptions import DatasetError, NonFiniteError, ShapeError, TrainingDiverged
from darkwave.inference import evaluate
from darkwave.network import ModelState, build_model, check_budget
from darkwave.priors import PriorPack, prior_loss
from darkwave.transforms import decompose

__all__ = [
    'REPORT_FIELDS',
    'Losses',
    'TrainReport',
    'BatchSampler',
    'total_loss',
    'train',
    'checkpoint_name',
]

logger = logging.getLogger(__name__)

REPORT_FIELDS = (
    'step',
    'lr',
    'loss_total',
    'loss_l1',
    'loss_prior',
    'elapsed',
    'eval_psnr',
    'eval_ssim',
)


@dataclasses.dataclass
class Losses:
    total: torch.Tensor
    l1: torch.Tensor
    prior: torch.Tensor


def _cell(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return util.format_metric(value, 8)
    return value


@dataclasses.dataclass
class TrainReport:
    rows: t.List[dict] = dataclasses.field(default_factory=list)

    def log_step(self, **values):
        self.rows.append({field: values.get(field) for field in REPORT_FIELDS})

    @property
    def lr_trace(self):
        return [row['lr'] for row in self.rows]

    @property
    def evaluations(self):
        return [row for row in self.rows if row['eval_psnr'] is not None]

    @property
    def last_eval(self) -> t.Optional[dict]:
        evaluations = self.evaluations
        return evaluations[-1] if evaluations else None

    def write_csv(self, path):
        with open(path, 'w', newline='') as handle:
            writer = csv.DictWriter(handle, fieldnames=REPORT_FIELDS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({key: _cell(value) for key, value in row.items()})


def total_loss(
    prediction: torch.Tensor,
    target: torch.Tensor,
    priors: t.Optional[PriorPack],
    target_low: t.Optional[torch.Tensor],
    level: int,
    config: TrainConfig,
) -> Losses:
    """mean |y_hat - y| plus the prior supervision at the deepest level"""
    if prediction.shape != target.shape:
        raise ShapeError(
            f'prediction {tuple(prediction.shape)} and target {tuple(target.shape)} differ in shape'
        )
    l1 = (prediction - target).abs().mean()
    if priors is None:
        prior = l1.new_zeros(())
    else:
        prior = prior_loss(priors, target_low, level, config.lambda1, config.lambda2)
    return Losses(total=l1 + prior, l1=l1, prior=prior)


class BatchSampler:
    """Endless stream of (low, high) crops. Every epoch visits the pairs in a
    fresh permutation; crops and flips come from the same generator, so the
    stream is a pure function of the seed."""

    def __init__(self, dataset: PairedDataset, batch, crop, generator: torch.Generator):
        if not len(dataset):
            raise DatasetError(f'the {dataset.split} set is empty')
        for name, low in zip(dataset.names, dataset.lows):
            if low.shape[0] < crop or low.shape[1] < crop:
                raise DatasetError(
                    f'{dataset.split}/{name} is {low.shape[0]}x{low.shape[1]}, smaller than the {crop} crop'
                )
        self.dataset = dataset
        self.batch = batch
        self.crop = crop
        self.generator = generator
        self.order = []
        self.tensors = [
            (torch.from_numpy(low).permute(2, 0, 1), torch.from_numpy(high).permute(2, 0, 1))
            for low, high in zip(dataset.lows, dataset.highs)
        ]

    def _next_index(self):
        if not self.order:
            self.order = torch.randperm(len(self.dataset), generator=self.generator).tolist()
        return self.order.pop(0)

    def _randint(self, high):
        return int(torch.randint(high, (1,), generator=self.generator))

    def sample(self):
        low, high = self.tensors[self._next_index()]
        top = self._randint(low.shape[-2] - self.crop + 1)
        left = self._randint(low.shape[-1] - self.crop + 1)
        window = (slice(None), slice(top, top + self.crop), slice(left, left + self.crop))
        low, high = low[window], high[window]
        flips = torch.rand(2, generator=self.generator)
        if flips[0] < 0.5:
            low, high = low.flip(-1), high.flip(-1)
        if flips[1] < 0.5:
            low, high = low.flip(-2), high.flip(-2)
        return low, high

    def __iter__(self):
        return self

    def __next__(self):
        pairs = [self.sample() for _ in range(self.batch)]
        return (
            torch.stack([low for low, _ in pairs]).contiguous(),
            torch.stack([high for _, high in pairs]).contiguous(),
        )


def checkpoint_name(step):
    return f'step-{step:07d}.zip'


def _first_non_finite_parameter(model: nn.Module):
    for name, parameter in model.named_parameters():
        if not torch.isfinite(parameter).all():
            return name
    return None


def _diverged(step, module):
    logger.error(f'Training diverged at step {step}: non-finite value in {module}')
    return TrainingDiverged(step, module)


def train(
    dataset: PairedDataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    eval_set: t.Optional[PairedDataset] = None,
    checkpoint_dir=None,
    device=None,
) -> t.Tuple[ModelState, TrainReport]:
    device = torch.device(device or settings.DARKWAVE_DEVICE)
    generator = torch.Generator().manual_seed(train_config.seed)
    model = build_model(model_config, seed=train_config.seed).to(device)
    budget = settings.DARKWAVE_PARAM_BUDGET
    count, within = check_budget(model, budget)
    if not within:
        raise ValidationError(
            f'The model has {count} trainable parameters, over DARKWAVE_PARAM_BUDGET ({budget})'
        )
    logger.info(f'Training a {count} parameter model for {train_config.iters} step(s)')
    state = ModelState(model=model, step=0)
    report = TrainReport()

    def write_checkpoint():
        if checkpoint_dir is not None:
            save_checkpoint(state, os.path.join(checkpoint_dir, checkpoint_name(state.step)))

    if train_config.iters == 0:
        write_checkpoint()
        return state, report

    sampler = BatchSampler(dataset, train_config.batch, train_config.crop, generator)
    parameters = [p for p in model.parameters() if p.requires_grad]
    optimizer = None
    scheduler = None
    if parameters:
        optimizer = torch.optim.Adam(
            parameters,
            lr=train_config.lr,
            betas=(train_config.beta1, train_config.beta2),
            eps=train_config.eps,
        )
        scheduler = torch.optim.lr_scheduler.MultiStepLR(
            optimizer,
            milestones=train_config.resolved_milestones(),
            gamma=train_config.decay,
        )
    started = time.monotonic()

    for step in range(1, train_config.iters + 1):
        lr = optimizer.param_groups[0]['lr'] if optimizer is not None else train_config.lr
        low, high = (tensor.to(device) for tensor in next(sampler))
        model.train()
        try:
            prediction, priors = model(low)
        except NonFiniteError as e:
            raise _diverged(step, e.module) from e
        target_low = None
        if priors is not None:
            target_low = decompose(high, model_config.depth).coarsest.L
        losses = total_loss(prediction, high, priors, target_low, model_config.depth, train_config)
        if not torch.isfinite(losses.total):
            if not torch.isfinite(losses.l1):
                module = 'l1_loss'
            elif not torch.isfinite(losses.prior):
                module = 'prior_loss'
            else:
                module = 'total_loss'
            raise _diverged(step, module)

        if optimizer is not None:
            optimizer.zero_grad(set_to_none=True)
            losses.total.backward()
            if train_config.clip_grad_norm is not None:
                nn.utils.clip_grad_norm_(parameters, train_config.clip_grad_norm)
            optimizer.step()
            scheduler.step()
            bad = _first_non_finite_parameter(model)
            if bad is not None:
                raise _diverged(step, bad)
        state.step = step

        row = dict(
            step=step,
            lr=lr,
            loss_total=float(losses.total),
            loss_l1=float(losses.l1),
            loss_prior=float(losses.prior),
            elapsed=time.monotonic() - started,
        )
        last = step == train_config.iters
        if step % train_config.checkpoint_cadence == 0 or last:
            write_checkpoint()
        if eval_set is not None and len(eval_set) and (step % train_config.eval_cadence == 0 or last):
            # evaluate a snapshot so the update stream never sees eval mode
            result = evaluate(copy.deepcopy(model), eval_set, limit=train_config.eval_images)
            row.update(eval_psnr=result.mean_psnr, eval_ssim=result.mean_ssim)
            logger.info(
                f'Step {step}: lr {lr:.3g}, loss {row["loss_total"]:.5f} '
                f'(l1 {row["loss_l1"]:.5f}, prior {row["loss_prior"]:.5f}), '
                f'PSNR {util.format_metric(result.mean_psnr)}, SSIM {util.format_metric(result.mean_ssim)}'
            )
        report.log_step(**row)

    return state, report
