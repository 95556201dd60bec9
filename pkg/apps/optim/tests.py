from __future__ import annotations

from unittest.mock import patch

from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

import numpy as np
from scipy.special import rel_entr

from apps.grammar.domain import NUM_SLOTS, SLOT_VOCAB_SIZES, SlotIndex
from apps.optim.domain import ExpertBatch, GroupRollout, HybridCoeffs, OptimConfig, OptimizerName
from apps.optim.exceptions import NumericAbortError
from apps.optim.optimizers import AdamOptimizer, SGDOptimizer, build_optimizer
from apps.optim.services import (
    build_optim_config_service,
    clipped_surrogate,
    group_advantages_service,
    grpo_loss_and_grad_service,
    hybrid_step_service,
    rollout_groups_service,
    sft_loss_and_grad_service,
    slot_kl_from_log_probs,
)
from apps.policy.factories import PolicyParamsFactory
from apps.policy.services import (
    gather_log_probs,
    init_params_service,
    slot_distribution_service,
    slot_log_probs_batch,
    slot_probs_batch,
)
from apps.rewards.domain import RewardConfig, WeightMask
from apps.rewards.services import weight_mask_service
from apps.world.domain import WorldConfig
from apps.world.services import expert_slot_tokens_batch, gen_dataset_service, split_dataset_service

STEPWISE_MASK = weight_mask_service(RewardConfig())
CHECKPOINT_ONLY_MASK = WeightMask(weights=(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0))


def _random_tokens(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    columns = [rng.integers(size, size=shape) for size in SLOT_VOCAB_SIZES]
    return np.stack(columns, axis=-1)


def _random_rollout(ref_params, rng: np.random.Generator, batch: int = 3, group: int = 4) -> GroupRollout:
    features = rng.normal(size=(batch, ref_params.feature_dim))
    tokens = _random_tokens(rng, (batch, group))
    rewards = rng.uniform(size=(batch, group))
    return GroupRollout(
        features=features,
        tokens=tokens,
        logprobs=gather_log_probs(slot_log_probs_batch(ref_params, features), tokens),
        rewards=rewards,
        advantages=group_advantages_service(rewards),
    )


def _perturbed(params, rng: np.random.Generator, scale: float):
    return params.with_flat(params.flatten() + scale * rng.normal(size=params.num_parameters))


def _numeric_gradient(fn, theta: np.ndarray, step: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        delta = np.zeros_like(theta)
        delta[i] = step
        grad[i] = (fn(theta + delta) - fn(theta - delta)) / (2 * step)
    return grad


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


# ============================================================================
# Tests Unitarios - Config y ventajas
# ============================================================================


class OptimConfigTestCase(SimpleTestCase):
    """Tests para build_optim_config_service y HybridCoeffs."""

    def test_defaults(self):
        """Test: valores por defecto (ε 0.2, β_KL 0.001, G 8)."""
        cfg = build_optim_config_service()
        self.assertEqual(cfg, OptimConfig())
        self.assertEqual(cfg.optimizer, OptimizerName.ADAM)

    def test_invalid_values(self):
        """Test: clip_ratio fuera de (0, 1), kl_coeff < 0 y G < 2 se rechazan."""
        for data in ({"clip_ratio": 1.0}, {"clip_ratio": 0.0}, {"kl_coeff": -0.1}, {"group_size": 1}):
            with self.assertRaises(ValidationError):
                build_optim_config_service(data)

    def test_coeffs_must_sum_to_one(self):
        """Test: α_t + γ_t = 1 y ambos no negativos."""
        HybridCoeffs(0.85, 0.15)
        with self.assertRaises(ValidationError):
            HybridCoeffs(0.9, 0.2)
        with self.assertRaises(ValidationError):
            HybridCoeffs(1.1, -0.1)


class GroupAdvantagesServiceTestCase(SimpleTestCase):
    """Tests para group_advantages_service."""

    def test_equal_rewards(self):
        """Test: recompensas iguales dan ventajas nulas."""
        np.testing.assert_array_equal(group_advantages_service(np.full(8, 0.7)), np.zeros(8))

    def test_two_rewards(self):
        """Test: (1, 0) da ≈ (+1, −1) con la desviación poblacional."""
        np.testing.assert_allclose(group_advantages_service(np.array([1.0, 0.0])), [1.0, -1.0], atol=1e-7)

    def test_zero_mean(self):
        """Test: la media por grupo es 0 dentro de 1e-9."""
        rewards = np.random.default_rng(0).uniform(size=(50, 8))
        advantages = group_advantages_service(rewards)
        np.testing.assert_allclose(advantages.mean(axis=1), 0.0, atol=1e-9)

    def test_group_too_small(self):
        """Test: G < 2 es un error."""
        with self.assertRaises(ValidationError):
            group_advantages_service(np.array([1.0]))


# ============================================================================
# Tests Unitarios - Surrogate y KL
# ============================================================================


class ClippedSurrogateTestCase(SimpleTestCase):
    """Tests para clipped_surrogate."""

    def test_positive_advantage_clipped(self):
        """Test: Â > 0, ratio 1.5, ε = 0.2 da 1.2·Â·mask."""
        advantage, weight = 0.8, 10.0
        surrogate, active = clipped_surrogate(np.array([1.5]), np.array([weight * advantage]), 0.2)
        self.assertAlmostEqual(surrogate[0], 1.2 * advantage * weight)
        self.assertFalse(active[0])

    def test_negative_advantage(self):
        """Test: Â < 0 recorta por abajo y deja activo el ratio grande."""
        surrogate, active = clipped_surrogate(np.array([0.5, 1.5]), np.array([-1.0, -1.0]), 0.2)
        np.testing.assert_allclose(surrogate, [-0.8, -1.5])
        np.testing.assert_array_equal(active, [False, True])

    def test_clipping_bound(self):
        """Test: con Â > 0 el surrogate nunca supera (1 + ε)·|a|."""
        rng = np.random.default_rng(1)
        ratio = rng.uniform(0.0, 3.0, size=10_000)
        advantage = rng.uniform(0.0, 20.0, size=10_000)
        surrogate, _ = clipped_surrogate(ratio, advantage, 0.2)
        self.assertTrue(np.all(np.abs(surrogate) <= 1.2 * advantage + 1e-12))

    def test_kl_is_non_negative(self):
        """Test: KL(π_θ‖π_ref) por slot es >= 0."""
        rng = np.random.default_rng(2)
        for _ in range(20):
            params, ref = PolicyParamsFactory(scale=2.0), PolicyParamsFactory(scale=2.0)
            features = rng.normal(size=(16, 16))
            for lp, lq in zip(slot_log_probs_batch(params, features), slot_log_probs_batch(ref, features), strict=True):
                self.assertTrue(np.all(slot_kl_from_log_probs(lp, lq) >= 0.0))

    def test_kl_is_exact_relative_entropy(self):
        """Test: la KL por slot es la suma exacta de p·log(p/q), no un estimador muestral."""
        rng = np.random.default_rng(4)
        p = rng.dirichlet(np.ones(5), size=8)
        q = rng.dirichlet(np.ones(5), size=8)
        expected = rel_entr(p, q).sum(axis=-1)
        np.testing.assert_allclose(slot_kl_from_log_probs(np.log(p), np.log(q)), expected, rtol=1e-10)


# ============================================================================
# Tests Unitarios - Pérdidas
# ============================================================================


class GrpoLossAndGradServiceTestCase(SimpleTestCase):
    """Tests para grpo_loss_and_grad_service."""

    def setUp(self):
        self.rng = np.random.default_rng(3)
        self.cfg = OptimConfig(kl_coeff=0.1)

    def test_identity_policy(self):
        """Test: θ = θ_ref da ratios 1, KL 0 y loss = −mean(mask·Â)."""
        params = PolicyParamsFactory()
        rollouts = _random_rollout(params, self.rng)
        loss, _ = grpo_loss_and_grad_service(params, params, rollouts, STEPWISE_MASK, self.cfg)
        weighted = STEPWISE_MASK.as_array()[None, None, :] * rollouts.advantages[:, :, None]
        self.assertAlmostEqual(loss, -weighted.mean(), places=12)

    def test_zero_advantages_leave_only_kl(self):
        """Test: con ventajas nulas el gradiente es β_KL·∇KL."""
        # Arrange
        ref = PolicyParamsFactory()
        params = _perturbed(ref, self.rng, 0.1)
        base = _random_rollout(ref, self.rng)
        rollouts = GroupRollout(
            features=base.features,
            tokens=base.tokens,
            logprobs=base.logprobs,
            rewards=base.rewards,
            advantages=np.zeros_like(base.advantages),
        )

        # Act
        _, unit = grpo_loss_and_grad_service(params, ref, rollouts, STEPWISE_MASK, OptimConfig(kl_coeff=1.0))
        _, scaled = grpo_loss_and_grad_service(params, ref, rollouts, STEPWISE_MASK, OptimConfig(kl_coeff=0.001))
        _, none = grpo_loss_and_grad_service(params, ref, rollouts, STEPWISE_MASK, OptimConfig(kl_coeff=0.0))

        # Assert
        np.testing.assert_allclose(scaled.flatten(), 0.001 * unit.flatten(), rtol=1e-9, atol=1e-15)
        np.testing.assert_array_equal(none.flatten(), np.zeros(params.num_parameters))
        self.assertGreater(np.linalg.norm(unit.flatten()), 0.0)

    def test_finite_differences(self):
        """Test: el gradiente GRPO coincide con diferencias centrales (rel < 1e-4)."""
        for trial in range(10):
            # Arrange
            ref = PolicyParamsFactory(feature_dim=4, seed=100 + trial)
            params = _perturbed(ref, self.rng, 0.02)
            rollouts = _random_rollout(ref, self.rng)

            # Act
            _, grad = grpo_loss_and_grad_service(params, ref, rollouts, STEPWISE_MASK, self.cfg)
            numeric = _numeric_gradient(
                lambda theta: grpo_loss_and_grad_service(
                    params.with_flat(theta), ref, rollouts, STEPWISE_MASK, self.cfg
                )[0],
                params.flatten(),
            )

            # Assert
            self.assertLess(_relative_error(grad.flatten(), numeric), 1e-4, msg=f"trial {trial}")

    def test_group_rollout_samples_view(self):
        """Test: la vista por grupo reproduce tokens y log-probs."""
        params = PolicyParamsFactory()
        rollouts = _random_rollout(params, self.rng, batch=2, group=3)
        sample = rollouts.samples[1][2]
        self.assertEqual(list(sample.tokens), rollouts.tokens[1, 2].tolist())
        np.testing.assert_array_equal(sample.slot_logprobs, rollouts.logprobs[1, 2])
        self.assertEqual(rollouts.group_size, 3)


class SftLossAndGradServiceTestCase(SimpleTestCase):
    """Tests para sft_loss_and_grad_service."""

    def setUp(self):
        self.rng = np.random.default_rng(4)

    def test_uniform_policy_loss(self):
        """Test: política uniforme da (2·ln 5 + 5·ln 2) / 7."""
        batch = ExpertBatch(features=self.rng.normal(size=(12, 16)), tokens=_random_tokens(self.rng, (12,)))
        loss, _ = sft_loss_and_grad_service(init_params_service(16), batch)
        self.assertAlmostEqual(loss, (2 * np.log(5.0) + 5 * np.log(2.0)) / 7, places=12)

    def test_matching_policy_loss_vanishes(self):
        """Test: logits muy grandes en los tokens expertos llevan la pérdida a 0."""
        tokens = np.array([[2, 0, 1, 0, 1, 1, 2]])
        params = init_params_service(16)
        biases = []
        for slot, size in enumerate(SLOT_VOCAB_SIZES):
            bias = np.zeros(size)
            bias[tokens[0, slot]] = 50.0
            biases.append(bias)
        matched = params.with_flat(np.concatenate([w.ravel() for w in params.weights] + biases))
        loss, _ = sft_loss_and_grad_service(matched, ExpertBatch(features=np.ones((1, 16)), tokens=tokens))
        self.assertLess(loss, 1e-15 + 5 * np.exp(-50.0))

    def test_finite_differences(self):
        """Test: el gradiente SFT coincide con diferencias centrales (rel < 1e-5)."""
        params = PolicyParamsFactory(feature_dim=4)
        batch = ExpertBatch(features=self.rng.normal(size=(6, 4)), tokens=_random_tokens(self.rng, (6,)))
        _, grad = sft_loss_and_grad_service(params, batch)
        numeric = _numeric_gradient(
            lambda theta: sft_loss_and_grad_service(params.with_flat(theta), batch)[0], params.flatten()
        )
        self.assertLess(_relative_error(grad.flatten(), numeric), 1e-5)

    def test_empty_batch(self):
        """Test: un batch vacío se rechaza."""
        with self.assertRaises(ValidationError):
            ExpertBatch(features=np.zeros((0, 16)), tokens=np.zeros((0, 7), dtype=np.int64))


# ============================================================================
# Tests Unitarios - Paso híbrido
# ============================================================================


class HybridStepServiceTestCase(SimpleTestCase):
    """Tests para hybrid_step_service."""

    def setUp(self):
        self.rng = np.random.default_rng(5)
        self.cfg = OptimConfig(optimizer=OptimizerName.SGD, learning_rate=0.1)
        self.params = PolicyParamsFactory()
        self.rollouts = _random_rollout(self.params, self.rng)
        self.sft_batch = ExpertBatch(features=self.rng.normal(size=(5, 16)), tokens=_random_tokens(self.rng, (5,)))

    def test_gamma_zero_is_pure_grpo(self):
        """Test: γ_t = 0 coincide bit a bit con un paso GRPO puro."""
        outcome = hybrid_step_service(
            self.params, self.params, self.rollouts, self.sft_batch, HybridCoeffs(1.0, 0.0), STEPWISE_MASK, self.cfg
        )
        _, grad = grpo_loss_and_grad_service(self.params, self.params, self.rollouts, STEPWISE_MASK, self.cfg)
        expected = SGDOptimizer(0.1).step(self.params.flatten(), grad.flatten())
        np.testing.assert_array_equal(outcome.params.flatten(), expected)
        self.assertIsNone(outcome.sft_loss)

    def test_alpha_zero_is_pure_sft(self):
        """Test: α_t = 0 coincide bit a bit con un paso SFT puro."""
        outcome = hybrid_step_service(
            self.params, self.params, None, self.sft_batch, HybridCoeffs(0.0, 1.0), STEPWISE_MASK, self.cfg
        )
        loss, grad = sft_loss_and_grad_service(self.params, self.sft_batch)
        expected = SGDOptimizer(0.1).step(self.params.flatten(), grad.flatten())
        np.testing.assert_array_equal(outcome.params.flatten(), expected)
        self.assertIsNone(outcome.grpo_loss)
        self.assertEqual(outcome.total_loss, loss)

    def test_stage_one_coefficients_logged(self):
        """Test: los coeficientes de la etapa 1 (0.85, 0.15) aparecen en el log."""
        with self.assertLogs("apps.optim.services", level="DEBUG") as captured:
            outcome = hybrid_step_service(
                self.params,
                self.params,
                self.rollouts,
                self.sft_batch,
                HybridCoeffs(0.85, 0.15),
                STEPWISE_MASK,
                self.cfg,
            )
        self.assertIn("alpha_t=0.8500 gamma_t=0.1500", captured.output[0])
        self.assertAlmostEqual(outcome.total_loss, 0.85 * outcome.grpo_loss + 0.15 * outcome.sft_loss)

    def test_step_follows_weighted_gradient_sum(self):
        """Test: el paso SGD híbrido usa α_t·∇L_GRPO + γ_t·∇L_SFT."""
        # Arrange
        _, grpo_grad = grpo_loss_and_grad_service(self.params, self.params, self.rollouts, STEPWISE_MASK, self.cfg)
        _, sft_grad = sft_loss_and_grad_service(self.params, self.sft_batch)
        combined = 0.9 * grpo_grad.flatten() + 0.1 * sft_grad.flatten()

        # Act
        outcome = hybrid_step_service(
            self.params, self.params, self.rollouts, self.sft_batch, HybridCoeffs(0.9, 0.1), STEPWISE_MASK, self.cfg
        )

        # Assert
        np.testing.assert_allclose(outcome.params.flatten(), self.params.flatten() - 0.1 * combined, atol=1e-12)

    def test_hybrid_finite_differences(self):
        """Test: el gradiente híbrido coincide con diferencias centrales (rel < 1e-4)."""
        ref = PolicyParamsFactory(feature_dim=4)
        params = _perturbed(ref, self.rng, 0.02)
        rollouts = _random_rollout(ref, self.rng)
        batch = ExpertBatch(features=self.rng.normal(size=(4, 4)), tokens=_random_tokens(self.rng, (4,)))
        cfg = OptimConfig(kl_coeff=0.05)

        def loss(theta):
            candidate = params.with_flat(theta)
            grpo, _ = grpo_loss_and_grad_service(candidate, ref, rollouts, STEPWISE_MASK, cfg)
            sft, _ = sft_loss_and_grad_service(candidate, batch)
            return 0.9 * grpo + 0.1 * sft

        _, grpo_grad = grpo_loss_and_grad_service(params, ref, rollouts, STEPWISE_MASK, cfg)
        _, sft_grad = sft_loss_and_grad_service(params, batch)
        analytic = 0.9 * grpo_grad.flatten() + 0.1 * sft_grad.flatten()
        self.assertLess(_relative_error(analytic, _numeric_gradient(loss, params.flatten())), 1e-4)

    @patch("apps.optim.services.grpo_loss_and_grad_service")
    def test_non_finite_loss_aborts(self, mock_grpo):
        """Test: una pérdida no finita aborta el paso con NumericAbortError."""
        # Arrange
        _, grad = grpo_loss_and_grad_service(self.params, self.params, self.rollouts, STEPWISE_MASK, self.cfg)
        mock_grpo.return_value = (float("nan"), grad)

        # Act & Assert
        with self.assertRaises(NumericAbortError), self.assertLogs("apps.optim.services", level="ERROR"):
            hybrid_step_service(
                self.params, self.params, self.rollouts, None, HybridCoeffs(1.0, 0.0), STEPWISE_MASK, self.cfg
            )
        mock_grpo.assert_called_once()

    def test_missing_batch(self):
        """Test: falta el batch SFT con γ_t > 0."""
        with self.assertRaises(ValidationError):
            hybrid_step_service(
                self.params, self.params, self.rollouts, None, HybridCoeffs(0.5, 0.5), STEPWISE_MASK, self.cfg
            )


class OptimizersTestCase(SimpleTestCase):
    """Tests para SGDOptimizer y AdamOptimizer."""

    def test_sgd_step(self):
        """Test: θ − η·g."""
        theta = SGDOptimizer(0.5).step(np.array([1.0, 2.0]), np.array([2.0, -2.0]))
        np.testing.assert_allclose(theta, [0.0, 3.0])

    def test_adam_first_step_is_sign(self):
        """Test: el primer paso de Adam mueve η en la dirección de −signo(g)."""
        theta = AdamOptimizer(0.01).step(np.zeros(3), np.array([5.0, -0.1, 0.0]))
        np.testing.assert_allclose(theta, [-0.01, 0.01, 0.0], atol=1e-9)

    def test_build_optimizer(self):
        """Test: build_optimizer respeta cfg.optimizer."""
        self.assertIsInstance(build_optimizer(OptimConfig()), AdamOptimizer)
        self.assertIsInstance(build_optimizer(OptimConfig(optimizer=OptimizerName.SGD)), SGDOptimizer)


# ============================================================================
# Tests de dinámica
# ============================================================================


def _bandit_history(
    coeffs: HybridCoeffs,
    steps: int,
    learning_rate: float,
    seed: int,
    sft_batch: ExpertBatch | None = None,
) -> np.ndarray:
    """
    Bandido de 2 acciones en el slot IRRELEVANT: recompensa 1 para Yes (acción 0).

    Returns:
        Masa de la acción 1 tras cada paso
    """
    features = np.ones((4, 1))
    params = init_params_service(1)
    optimizer = AdamOptimizer(learning_rate)
    cfg = OptimConfig(learning_rate=learning_rate)
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(steps):
        probs = slot_probs_batch(params, features)
        tokens = np.zeros((4, cfg.group_size, NUM_SLOTS), dtype=np.int64)
        tokens[:, :, SlotIndex.IRRELEVANT] = (
            rng.random((4, cfg.group_size)) >= probs[SlotIndex.IRRELEVANT][:, :1]
        ).astype(np.int64)
        rewards = (tokens[:, :, SlotIndex.IRRELEVANT] == 0).astype(np.float64)
        rollouts = GroupRollout(
            features=features,
            tokens=tokens,
            logprobs=gather_log_probs(slot_log_probs_batch(params, features), tokens),
            rewards=rewards,
            advantages=group_advantages_service(rewards),
        )
        params = hybrid_step_service(
            params, params, rollouts, sft_batch, coeffs, CHECKPOINT_ONLY_MASK, cfg, optimizer
        ).params
        history.append(slot_distribution_service(params, features[0], SlotIndex.IRRELEVANT).probs[1])
    return np.asarray(history)


class ModeDynamicsTestCase(SimpleTestCase):
    """Dirección mode-seeking del GRPO y anclaje del término SFT."""

    def test_grpo_is_mode_seeking(self):
        """Test: 200 pasos GRPO aumentan monótonamente la probabilidad de la acción premiada."""
        # Act
        action_zero = 1.0 - _bandit_history(HybridCoeffs(1.0, 0.0), steps=200, learning_rate=1e-2, seed=0)

        # Assert
        moving = np.convolve(action_zero, np.ones(5) / 5, mode="valid")
        self.assertTrue(np.all(np.diff(moving) >= -1e-12))
        self.assertGreater(action_zero[-1], 0.5 + 0.3)

    def test_sft_anchor_keeps_minority_mass(self):
        """Test: con γ_t = 0.15 y 30% de masa experta en la acción 1, la política la conserva."""
        # Arrange
        tokens = np.zeros((10, NUM_SLOTS), dtype=np.int64)
        tokens[7:, SlotIndex.IRRELEVANT] = 1
        expert = ExpertBatch(features=np.ones((10, 1)), tokens=tokens)

        # Act
        balanced = _bandit_history(HybridCoeffs(0.85, 0.15), 1500, 0.05, seed=1, sft_batch=expert)
        pure = _bandit_history(HybridCoeffs(1.0, 0.0), 1500, 0.05, seed=1)

        # Assert
        self.assertGreaterEqual(balanced[-200:].mean(), 0.01)
        self.assertLess(pure[-200:].mean(), 0.01)
        self.assertGreater(balanced[-200:].mean(), pure[-200:].mean())


class FirstTokenSufficiencyTestCase(SimpleTestCase):
    """El primer token condensa la decisión de una política ajustada al experto."""

    def test_argmax_matches_expected_score_rounding(self):
        """Test: argmax de la decisión = redondeo del score esperado en >= 95% del holdout."""
        # Arrange
        dataset = gen_dataset_service(3000, WorldConfig(seed=21))
        train, holdout = split_dataset_service(dataset, 0.2)
        batch = ExpertBatch(features=train.features, tokens=expert_slot_tokens_batch(train, np.arange(len(train))))
        params = init_params_service(dataset.config.feature_dim)
        optimizer = AdamOptimizer(0.05)

        # Act
        for _ in range(600):
            _, grad = sft_loss_and_grad_service(params, batch)
            params = params.with_flat(optimizer.step(params.flatten(), grad.flatten()))
        decision = slot_probs_batch(params, holdout.features)[SlotIndex.DECISION]
        argmax = decision.argmax(axis=1)
        rounded = np.rint(decision @ np.arange(5.0)).astype(np.int64)

        # Assert
        self.assertGreaterEqual(np.mean(argmax == rounded), 0.95)
        self.assertGreaterEqual(np.mean(argmax == holdout.labels), 0.9)


class RolloutGroupsServiceTestCase(SimpleTestCase):
    """Tests para rollout_groups_service."""

    def test_rollout_shapes_and_rewards(self):
        """Test: G rollouts por instancia con recompensas en {0, 1} y ventajas centradas."""
        dataset = gen_dataset_service(16, WorldConfig(seed=2))
        rollouts = rollout_groups_service(
            init_params_service(16),
            dataset.features,
            dataset.labels,
            np.random.default_rng(0),
            RewardConfig(),
            OptimConfig(),
        )
        self.assertEqual(rollouts.tokens.shape, (16, 8, NUM_SLOTS))
        self.assertTrue(np.all(np.isclose(rollouts.rewards, 0.0) | np.isclose(rollouts.rewards, 1.0)))
        np.testing.assert_allclose(rollouts.advantages.mean(axis=1), 0.0, atol=1e-9)
