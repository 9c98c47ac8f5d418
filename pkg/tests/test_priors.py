import math
import random

import torch
import torch.nn.functional as F
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from darkwave.priors import (
    EPSILON,
    GammaEstimator,
    edge_map,
    level_gradient_prior,
    mine_priors,
    normalize_low,
    prior_loss,
)
from darkwave.transforms import decompose, sobel_grad

from . import randgen
from .util import TensorAssertionsMixin, sobel_reference


class TestNormalize(TensorAssertionsMixin, SimpleTestCase):
    def test_scales_by_level(self):
        band = torch.full((1, 3, 4, 4), 4.0)
        self.assertTensorClose(normalize_low(band, 2), torch.ones(1, 3, 4, 4))

    def test_clamps_to_epsilon(self):
        normalized = normalize_low(torch.zeros(1, 1, 4, 4), 1)
        self.assertAlmostEqual(float(normalized.min()), EPSILON)

    def test_negative_band(self):
        band = torch.zeros(1, 1, 4, 4)
        band[0, 0, 0, 0] = -0.5
        with self.assertRaisesRegex(ValueError, 'negative'):
            normalize_low(band, 1)


class TestMinePriors(TensorAssertionsMixin, SimpleTestCase):
    def setUp(self):
        self.rand = random.Random(31)
        self.band = decompose(randgen.random_batch(self.rand, 32, batch=2), 3).coarsest.L

    def test_without_estimator_gamma_is_one(self):
        priors = mine_priors(self.band, 3)
        self.assertTensorClose(priors.gamma, torch.ones(2, 3, 1, 1))
        self.assertTensorClose(priors.structure, normalize_low(self.band, 3))
        self.assertTensorClose(priors.gradient, sobel_grad(priors.structure))

    def test_gamma_brightens(self):
        gamma = torch.full((2, 3, 1, 1), 0.5)
        priors = mine_priors(self.band, 3, gamma=gamma)
        self.assertTrue(bool((priors.structure >= normalize_low(self.band, 3)).all()))

    def test_estimator_ranges(self):
        torch.manual_seed(0)
        estimator = GammaEstimator(3, 8)
        priors = mine_priors(self.band, 3, estimator)
        self.assertEqual(tuple(priors.gamma.shape), (2, 3, 1, 1))
        self.assertInOpenUnit(priors.gamma)
        self.assertTrue(bool((priors.structure > 0).all()))
        self.assertTrue(bool((priors.structure <= 1).all()))
        self.assertTrue(bool((priors.gradient >= 0).all()))

    def test_estimator_saturated(self):
        estimator = GammaEstimator(3, 8)
        with torch.no_grad():
            estimator.mlp[2].bias.fill_(100.0)
        self.assertInOpenUnit(estimator(normalize_low(self.band, 3)))
        with torch.no_grad():
            estimator.mlp[2].bias.fill_(-100.0)
        self.assertInOpenUnit(estimator(normalize_low(self.band, 3)))

    def test_all_zero_band(self):
        priors = mine_priors(torch.zeros(1, 3, 4, 4), 2, GammaEstimator(3, 4))
        self.assertTrue(bool(torch.isfinite(priors.structure).all()))
        self.assertTrue(bool(torch.isfinite(priors.gradient).all()))

    def test_level_gradient_prior_ignores_small_negatives(self):
        band = self.band.clone()
        band[0, 0, 0, 0] = -1e-4
        prior = level_gradient_prior(band, 3)
        self.assertEqual(prior.shape, band.shape)


class TestPriorLoss(TensorAssertionsMixin, SimpleTestCase):
    def setUp(self):
        self.rand = random.Random(8)
        self.band = decompose(randgen.random_batch(self.rand, 32), 2).coarsest.L

    def test_zero_at_identical_priors(self):
        priors = mine_priors(self.band, 2)
        loss = prior_loss(priors, self.band, 2, lambda1=1.0, lambda2=0.0)
        self.assertAlmostEqual(float(loss), 0.0, places=6)

    def test_weights(self):
        other = decompose(randgen.random_batch(self.rand, 32), 2).coarsest.L
        priors = mine_priors(self.band, 2)
        gradient_only = float(prior_loss(priors, other, 2, 1.0, 0.0))
        edge_only = float(prior_loss(priors, other, 2, 0.0, 1.0))
        both = float(prior_loss(priors, other, 2, 2.0, 0.5))
        self.assertGreater(gradient_only, 0)
        self.assertGreater(edge_only, 0)
        self.assertAlmostEqual(both, 2.0 * gradient_only + 0.5 * edge_only, places=5)

    def test_zero_weights(self):
        priors = mine_priors(self.band, 2)
        self.assertEqual(float(prior_loss(priors, self.band, 2, 0.0, 0.0)), 0.0)

    def test_negative_weights(self):
        priors = mine_priors(self.band, 2)
        with self.assertRaisesRegex(ValidationError, 'lambda1'):
            prior_loss(priors, self.band, 2, lambda1=-0.1)
        with self.assertRaisesRegex(ValidationError, 'lambda2'):
            prior_loss(priors, self.band, 2, lambda2=-1.0)

    def test_edge_map_range(self):
        edges = edge_map(torch.rand(1, 3, 16, 16, generator=torch.Generator().manual_seed(2)) * 10)
        self.assertTrue(bool((edges >= 0).all()))
        self.assertTrue(bool((edges <= 1).all()))

    def test_gradient_reaches_estimator(self):
        estimator = GammaEstimator(3, 4)
        priors = mine_priors(self.band, 2, estimator)
        other = decompose(randgen.random_batch(self.rand, 32), 2).coarsest.L
        prior_loss(priors, other, 2).backward()
        self.assertIsNotNone(estimator.mlp[2].weight.grad)
        self.assertTrue(bool(torch.isfinite(estimator.mlp[2].weight.grad).all()))


class TestGammaEstimator(TensorAssertionsMixin, SimpleTestCase):
    def setUp(self):
        self.band = torch.rand(1, 3, 8, 8, generator=torch.Generator().manual_seed(40))

    def test_zero_mlp_gives_one_half(self):
        estimator = GammaEstimator(3, 8)
        with torch.no_grad():
            for parameter in estimator.mlp.parameters():
                parameter.zero_()
        self.assertTensorClose(estimator(self.band), torch.full((1, 3, 1, 1), 0.5), atol=1e-12)

    def test_matches_layer_by_layer_evaluation(self):
        torch.manual_seed(41)
        estimator = GammaEstimator(3, 8).double()
        band = self.band.double()
        conv1, conv2 = estimator.features[0], estimator.features[2]
        linear1, linear2 = estimator.mlp[0], estimator.mlp[2]
        features = F.relu(F.conv2d(band, conv1.weight, conv1.bias, padding=1))
        features = F.relu(F.conv2d(features, conv2.weight, conv2.bias, padding=1))
        pooled = features.sum(dim=(2, 3)) / 64
        hidden = F.relu(pooled @ linear1.weight.T + linear1.bias)
        expected = 1 / (1 + torch.exp(-(hidden @ linear2.weight.T + linear2.bias)))
        with torch.no_grad():
            self.assertTensorClose(estimator(band), expected[..., None, None], atol=1e-12)


class TestPriorProperties(TensorAssertionsMixin, SimpleTestCase):
    def setUp(self):
        self.rand = random.Random(42)

    def test_structure_monotone_in_band(self):
        generator = randgen.random_generator(self.rand)
        darker = decompose(randgen.random_batch(self.rand, 32), 2).coarsest.L
        brighter = darker + torch.rand(darker.shape, generator=generator)
        gamma = torch.rand(1, 3, 1, 1, generator=generator).clamp(0.05, 0.95)
        first = mine_priors(darker, 2, gamma=gamma).structure
        second = mine_priors(brighter, 2, gamma=gamma).structure
        self.assertTrue(bool((first <= second).all()))

    def test_loss_by_hand(self):
        # one channel, level 1, so bands normalize by 2
        generator = torch.Generator().manual_seed(43)
        band = 0.2 + 1.6 * torch.rand(1, 1, 4, 4, generator=generator, dtype=torch.float64)
        target = 0.2 + 1.6 * torch.rand(1, 1, 4, 4, generator=generator, dtype=torch.float64)
        gamma = torch.full((1, 1, 1, 1), 0.6, dtype=torch.float64)
        loss = prior_loss(mine_priors(band, 1, gamma=gamma), target, 1, lambda1=1.0, lambda2=0.1)

        structure = (band[0, 0].numpy() / 2) ** 0.6
        reference = target[0, 0].numpy() / 2
        gradient, target_gradient = sobel_reference(structure), sobel_reference(reference)
        gradient_term = 0.0
        cross_entropy = 0.0
        for y in range(4):
            for x in range(4):
                gradient_term += abs(gradient[y, x] - target_gradient[y, x]) / 16
                edge = min(gradient[y, x] / 8, 1.0)
                target_edge = min(target_gradient[y, x] / 8, 1.0)
                log_edge = max(math.log(edge), -100.0) if edge > 0 else -100.0
                log_rest = max(math.log(1 - edge), -100.0) if edge < 1 else -100.0
                cross_entropy -= (target_edge * log_edge + (1 - target_edge) * log_rest) / 16
        self.assertAlmostEqual(float(loss), gradient_term + 0.1 * cross_entropy, places=9)

    def test_matching_priors_leave_edge_entropy(self):
        band = decompose(randgen.random_batch(self.rand, 32, dtype=torch.float64), 2).coarsest.L
        loss = prior_loss(mine_priors(band, 2), band, 2, lambda1=1.0, lambda2=0.1)
        edges = edge_map(normalize_low(band, 2))
        entropy = -(torch.xlogy(edges, edges) + torch.xlogy(1 - edges, 1 - edges)).mean()
        self.assertGreater(float(entropy), 0.0)
        self.assertAlmostEqual(float(loss), 0.1 * float(entropy), places=9)

    def test_loss_gradient_matches_central_differences(self):
        torch.manual_seed(44)
        estimator = GammaEstimator(3, 8).double()
        band = decompose(randgen.random_batch(self.rand, 32, dtype=torch.float64), 2).coarsest.L
        target = decompose(randgen.random_batch(self.rand, 32, dtype=torch.float64), 2).coarsest.L

        def loss():
            return prior_loss(mine_priors(band, 2, estimator), target, 2)

        for parameter in (estimator.mlp[0].weight, estimator.mlp[2].weight):
            self.assertGradientMatches(loss, parameter)
