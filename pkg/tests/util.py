import csv
import json
import math
import os
import shutil
import tempfile
import unittest

import numpy as np
import torch

# set this to run the multi-minute training probes
SLOW_TESTS = bool(os.environ.get('DARKWAVE_SLOW_TESTS'))

slow_test = unittest.skipUnless(SLOW_TESTS, 'set DARKWAVE_SLOW_TESTS to run training probes')


def parse_csv(path):
    with open(path, newline='') as handle:
        return [line for line in csv.reader(handle)]


def parse_csv_dicts(path):
    with open(path, newline='') as handle:
        return list(csv.DictReader(handle))


def write_json(path, document):
    with open(path, 'w') as handle:
        json.dump(document, handle)
    return path


SOBEL_X = ((-1, 0, 1), (-2, 0, 2), (-1, 0, 1))


def sobel_reference(image):
    """gradient magnitude of a 2D array, one pixel at a time, reflect padded"""
    padded = np.pad(np.asarray(image, dtype=np.float64), 1, mode='reflect')
    height, width = padded.shape[0] - 2, padded.shape[1] - 2
    result = np.zeros((height, width))
    for y in range(height):
        for x in range(width):
            gx = gy = 0.0
            for dy in range(3):
                for dx in range(3):
                    gx += SOBEL_X[dy][dx] * padded[y + dy, x + dx]
                    gy += SOBEL_X[dx][dy] * padded[y + dy, x + dx]
            result[y, x] = math.sqrt(gx * gx + gy * gy)
    return result


def central_difference(function, parameter, index, step=1e-6):
    """derivative of the scalar `function()` along one entry of `parameter`"""
    with torch.no_grad():
        flat = parameter.view(-1)
        original = float(flat[index])
        flat[index] = original + step
        upper = float(function())
        flat[index] = original - step
        lower = float(function())
        flat[index] = original
    return (upper - lower) / (2 * step)


class TempDirMixin:
    """a fresh scratch directory per test, removed afterwards"""

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.mkdtemp(prefix='darkwave-test-')
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)


class TensorAssertionsMixin:
    def assertTensorClose(self, actual, expected, atol=1e-5, msg=None):
        actual = torch.as_tensor(actual)
        expected = torch.as_tensor(expected).to(actual.dtype)
        self.assertEqual(tuple(actual.shape), tuple(expected.shape), msg=msg)
        error = float((actual - expected).abs().max()) if actual.numel() else 0.0
        self.assertLess(error, atol, msg=msg or f'max abs error {error:.3e} >= {atol}')

    def assertInOpenUnit(self, tensor, msg=None):
        tensor = torch.as_tensor(tensor)
        self.assertTrue(bool((tensor > 0).all()), msg=msg or 'value <= 0')
        self.assertTrue(bool((tensor < 1).all()), msg=msg or 'value >= 1')

    def assertArrayEqual(self, actual, expected, msg=None):
        self.assertTrue(np.array_equal(actual, expected), msg=msg or 'arrays differ')

    def assertGradientMatches(self, function, parameter, count=4, seed=0, rtol=1e-3):
        """backpropagated gradient of the scalar `function()` against central
        differences on `count` entries of `parameter`; use float64 modules"""
        parameter.grad = None
        function().backward()
        analytic = parameter.grad.detach().view(-1).clone()
        generator = torch.Generator().manual_seed(seed)
        indices = torch.randperm(parameter.numel(), generator=generator)[:count].tolist()
        for index in indices:
            numeric = central_difference(function, parameter, index)
            expected = float(analytic[index])
            error = abs(expected - numeric) / max(abs(expected), abs(numeric), 1e-8)
            self.assertLessEqual(
                error, rtol, msg=f'entry {index}: backprop {expected:+.6e}, numeric {numeric:+.6e}'
            )
