"""
Ablation studies: one model per row, every row trained under the same seed
and data, results gathered into a CSV with one line per row.

Rows are either run in process or, with DARKWAVE_HAS_CELERY, fanned out as
Celery tasks.
"""

import csv
import dataclasses
import logging
import typing as t

from django.core.exceptions import ValidationError

from darkwave import settings, util
from darkwave.config import TOGGLES, ModelConfig, RunConfig
from darkwave.data import datasets_for
from darkwave.inference import evaluate
from darkwave.network import count_params
from darkwave.training import train

__all__ = [
    'AblationRow',
    'ABLATION_FIELDS',
    'PRESETS',
    'core_tag',
    'core_rows',
    'fine_rows',
    'identity_row',
    'disable_row',
    'run_row',
    'ablate',
    'write_ablation_csv',
]

logger = logging.getLogger(__name__)

ABLATION_FIELDS = (
    ('name', 'tag', 'depth')
    + TOGGLES
    + ('lambda1', 'lambda2', 'params', 'psnr', 'ssim')
)

# (smgm, d_low, d_high) patterns of the core component rows at the base depth
_CORE_PATTERNS = {
    (False, True, True): 'D',
    (True, False, True): 'E',
    (True, True, False): 'F',
    (False, True, False): 'G',
    (True, False, False): 'H',
    (False, False, True): 'I',
    (True, True, True): 'J',
}
_FINE_TOGGLES = tuple(name for name in TOGGLES if name not in ('smgm', 'd_low', 'd_high'))


@dataclasses.dataclass(frozen=True)
class AblationRow:
    name: str
    model: ModelConfig
    lambda1: float = 1.0
    lambda2: float = 0.1

    def as_dict(self):
        return {
            'name': self.name,
            'model': self.model.as_dict(),
            'lambda1': self.lambda1,
            'lambda2': self.lambda2,
        }

    @classmethod
    def from_dict(cls, values):
        return cls(
            name=values['name'],
            model=ModelConfig(**values['model']),
            lambda1=values['lambda1'],
            lambda2=values['lambda2'],
        )


def core_tag(row: AblationRow, base_depth=3) -> str:
    """letter of the core component table whose pattern the row matches, or ''"""
    model = row.model
    if not all(getattr(model, name) for name in _FINE_TOGGLES):
        return ''
    everything = model.smgm and model.d_low and model.d_high
    loss_on = row.lambda1 > 0 or row.lambda2 > 0
    if model.depth != base_depth:
        if everything and loss_on:
            return {base_depth - 1: 'A', base_depth + 1: 'B'}.get(model.depth, '')
        return ''
    if not loss_on:
        return 'C' if everything else ''
    return _CORE_PATTERNS.get((model.smgm, model.d_low, model.d_high), '')


def core_rows(base: RunConfig) -> t.List[AblationRow]:
    """The depth rows are left out, with a warning, when the base crop or
    depth cannot accommodate them. A shallower row raises the token cap to
    what the base crop needs at its depth."""
    model, train_config = base.model, base.train
    full = dict(lambda1=train_config.lambda1, lambda2=train_config.lambda2)
    rows = []
    for name, depth in (('depth_minus_1', model.depth - 1), ('depth_plus_1', model.depth + 1)):
        shifted = model.replace(depth=depth)
        shifted = shifted.replace(
            token_cap=max(model.token_cap, shifted.band_tokens(train_config.crop))
        )
        row = AblationRow(name, shifted, **full)
        try:
            _row_config(base, row)
        except ValidationError as e:
            logger.warning(f'Skipping ablation row {name}: {"; ".join(e.messages)}')
            continue
        rows.append(row)
    return rows + [
        AblationRow('no_prior_loss', model, lambda1=0.0, lambda2=0.0),
        AblationRow('no_smgm', model.with_disabled('smgm'), **full),
        AblationRow('no_d_low', model.with_disabled('d_low'), **full),
        AblationRow('no_d_high', model.with_disabled('d_high'), **full),
        AblationRow('no_smgm_d_high', model.with_disabled('smgm', 'd_high'), **full),
        AblationRow('no_d_low_d_high', model.with_disabled('d_low', 'd_high'), **full),
        AblationRow('no_smgm_d_low', model.with_disabled('smgm', 'd_low'), **full),
        AblationRow('full', model, **full),
    ]


def fine_rows(base: RunConfig) -> t.List[AblationRow]:
    model, train_config = base.model, base.train
    full = dict(lambda1=train_config.lambda1, lambda2=train_config.lambda2)
    rows = [AblationRow(f'no_{name}', model.with_disabled(name), **full) for name in _FINE_TOGGLES]
    rows += [
        AblationRow('lambda1_0.8', model, lambda1=0.8, lambda2=train_config.lambda2),
        AblationRow('lambda2_0.2', model, lambda1=train_config.lambda1, lambda2=0.2),
        AblationRow('full', model, **full),
    ]
    return rows


def identity_row(base: RunConfig) -> AblationRow:
    return AblationRow(
        'identity', ModelConfig.all_off(depth=base.model.depth, channels=base.model.channels)
    )


PRESETS = {
    'core': core_rows,
    'fine': fine_rows,
    'identity': lambda base: [identity_row(base)],
}


def disable_row(base: RunConfig, names: t.Sequence[str]) -> AblationRow:
    """row with the named toggles off; no names gives the default row"""
    names = list(dict.fromkeys(names))
    label = 'no_' + '_'.join(names) if names else 'default'
    return AblationRow(
        label,
        base.model.with_disabled(*names),
        lambda1=base.train.lambda1,
        lambda2=base.train.lambda2,
    )


def _row_config(base: RunConfig, row: AblationRow) -> RunConfig:
    train_config = base.train.replace(lambda1=row.lambda1, lambda2=row.lambda2)
    return base.replace(model=row.model, train=train_config).full_clean()


def run_row(base: RunConfig, row: AblationRow, datasets=None) -> dict:
    train_set, test_set = datasets if datasets is not None else datasets_for(base.data)
    config = _row_config(base, row)
    logger.info(f'Ablation row {row.name}: training')
    state, _ = train(train_set, config.model, config.train)
    result = evaluate(state.model, test_set)
    values = {
        'name': row.name,
        'tag': core_tag(row, base.model.depth),
        'depth': row.model.depth,
        **{name: int(getattr(row.model, name)) for name in TOGGLES},
        'lambda1': row.lambda1,
        'lambda2': row.lambda2,
        'params': count_params(state.model),
        'psnr': result.mean_psnr,
        'ssim': result.mean_ssim,
    }
    logger.info(
        f'Ablation row {row.name}: PSNR {util.format_metric(values["psnr"])}, '
        f'SSIM {util.format_metric(values["ssim"])}'
    )
    return values


def _check_rows(base, rows):
    seen = set()
    duplicates = []
    for row in rows:
        if row.name in seen:
            duplicates.append(row.name)
        seen.add(row.name)
    if duplicates:
        raise ValidationError(
            f'Duplicate ablation row name(s): {", ".join(sorted(set(duplicates)))}'
        )
    for row in rows:
        try:
            _row_config(base, row)
        except ValidationError as e:
            raise ValidationError(f'Ablation row {row.name} is invalid: {"; ".join(e.messages)}')


def ablate(base: RunConfig, rows: t.Sequence[AblationRow]) -> t.List[dict]:
    _check_rows(base, rows)
    if not rows:
        return []
    if settings.DARKWAVE_HAS_CELERY:
        from darkwave import tasks

        pending = [tasks.run_ablation_row.delay(base.as_dict(), row.as_dict()) for row in rows]
        return [result.get() for result in pending]
    datasets = datasets_for(base.data)
    return [run_row(base, row, datasets) for row in rows]


def write_ablation_csv(path, results: t.Sequence[dict]) -> None:
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=ABLATION_FIELDS)
        writer.writeheader()
        for values in results:
            writer.writerow(
                {
                    key: util.format_metric(value) if isinstance(value, float) else value
                    for key, value in values.items()
                }
            )
