"""
Checkpoint archives.

A checkpoint is a zip archive with these entries:

    format_version        ASCII integer, currently 1
    config.json           ModelConfig fields, sorted keys
    step                  ASCII integer, training steps taken
    params/<name>.npy     one little-endian float32 array per parameter,
                          named as in `EnhanceNet.named_parameters()`

Entry timestamps are fixed, so equal parameters give byte-identical archives.
"""

import io
import json
import logging
import os
import zipfile

import numpy as np
import torch
from django.core.exceptions import ValidationError

from darkwave import util
from darkwave.config import ModelConfig
from darkwave.exceptions import CheckpointError
from darkwave.network import ModelState, build_model

__all__ = ['FORMAT_VERSION', 'dump_checkpoint', 'save_checkpoint', 'load_checkpoint']

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
PARAM_DTYPE = '<f4'
_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


def _entry(archive, name, payload):
    info = zipfile.ZipInfo(name, date_time=_TIMESTAMP)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    archive.writestr(info, payload)


def dump_checkpoint(state: ModelState) -> bytes:
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, 'w') as archive:
        _entry(archive, 'format_version', f'{FORMAT_VERSION}\n')
        _entry(
            archive,
            'config.json',
            json.dumps(state.config.as_dict(), sort_keys=True, indent=2) + '\n',
        )
        _entry(archive, 'step', f'{state.step}\n')
        for name, parameter in state.model.named_parameters():
            array = parameter.detach().cpu().numpy().astype(PARAM_DTYPE)
            payload = io.BytesIO()
            np.save(payload, array, allow_pickle=False)
            _entry(archive, f'params/{name}.npy', payload.getvalue())
    return buffer.getvalue()


def save_checkpoint(state: ModelState, path) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as handle:
        handle.write(dump_checkpoint(state))
    logger.info(f'Wrote checkpoint for step {state.step} to {path}')


def _read_text(archive, name):
    try:
        return archive.read(name).decode('ascii').strip()
    except KeyError:
        raise CheckpointError(f'checkpoint has no {name} entry')


def load_checkpoint(path, device='cpu') -> ModelState:
    try:
        archive = zipfile.ZipFile(path)
    except FileNotFoundError:
        raise CheckpointError(f'checkpoint {path} does not exist')
    except zipfile.BadZipFile:
        raise CheckpointError(f'{path} is not a checkpoint archive')
    with archive:
        version = _read_text(archive, 'format_version')
        if version != str(FORMAT_VERSION):
            raise CheckpointError(
                f'{path} has checkpoint format version {version}, expected {FORMAT_VERSION}'
            )
        try:
            config = ModelConfig(**json.loads(_read_text(archive, 'config.json')))
            config.full_clean()
        except (TypeError, ValueError, ValidationError) as e:
            raise CheckpointError(f'{path} has an invalid model configuration: {e}')
        try:
            step = int(_read_text(archive, 'step'))
        except ValueError:
            raise CheckpointError(f'{path} has a malformed step entry')

        model = build_model(config)
        expected = dict(model.named_parameters())
        stored = {
            name[len('params/') : -len('.npy')]
            for name in archive.namelist()
            if name.startswith('params/') and name.endswith('.npy')
        }
        missing, unexpected = util.set_mismatch(expected.keys(), stored)
        if missing or unexpected:
            details = []
            if missing:
                details.append('missing ' + ', '.join(sorted(missing)))
            if unexpected:
                details.append('unexpected ' + ', '.join(sorted(unexpected)))
            raise CheckpointError(f'{path} does not match its configuration: {"; ".join(details)}')

        with torch.no_grad():
            for name, parameter in expected.items():
                array = np.load(io.BytesIO(archive.read(f'params/{name}.npy')), allow_pickle=False)
                if tuple(array.shape) != tuple(parameter.shape):
                    raise CheckpointError(
                        f'{path}: parameter {name} has shape {tuple(array.shape)}, '
                        f'expected {tuple(parameter.shape)}'
                    )
                parameter.copy_(torch.from_numpy(array.astype(np.float32)))
    model.to(device)
    return ModelState(model=model, step=step)
