from __future__ import annotations

import itertools
import tempfile
from pathlib import Path

from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

import numpy as np

from apps.grammar.domain import CHECKPOINT_VOCAB, CheckpointAnswer, Trajectory
from apps.grammar.factories import FigureTrajectoryFactory
from apps.grammar.services import render_trajectory_service
from apps.rewards.domain import RewardConfig
from apps.rewards.services import (
    build_reward_config_service,
    consistency_gate_service,
    infer_label_service,
    infer_labels_batch,
    logic_gate_service,
    ordinal_result_reward_service,
    read_reward_audit_service,
    score_slot_tokens_service,
    total_reward_service,
    weight_mask_service,
    write_reward_audit_service,
)

YES, NO = CheckpointAnswer.YES, CheckpointAnswer.NO


def _all_slot_assignments():
    for y_dec, y_final in itertools.product(range(5), repeat=2):
        for checkpoints in itertools.product(CHECKPOINT_VOCAB, repeat=5):
            yield y_dec, checkpoints, y_final


# ============================================================================
# Tests Unitarios - Config
# ============================================================================


class RewardConfigTestCase(SimpleTestCase):
    """Tests para build_reward_config_service."""

    def test_defaults(self):
        """Test: valores por defecto del config."""
        # Act
        cfg = build_reward_config_service()

        # Assert
        self.assertEqual(cfg, RewardConfig())
        self.assertEqual(cfg.alpha, 0.72)
        self.assertEqual(cfg.format_penalty, -1.0)

    def test_alpha_beta_must_sum_to_one(self):
        """Test: alpha + beta != 1 es un error de config."""
        with self.assertRaises(ValidationError) as ctx:
            build_reward_config_service({"alpha": 0.7, "beta": 0.2})
        self.assertIn("beta", ctx.exception.detail)

    def test_negative_gamma_rejected(self):
        """Test: gamma_ord < 0 se rechaza."""
        with self.assertRaises(ValidationError):
            build_reward_config_service({"gamma_ord": -0.1})

    def test_non_positive_weight_rejected(self):
        """Test: los pesos estructurales deben ser positivos."""
        with self.assertRaises(ValidationError):
            build_reward_config_service({"w_final": 0})


# ============================================================================
# Tests Unitarios - Gates
# ============================================================================


class GateServicesTestCase(SimpleTestCase):
    """Tests para los gates de consistencia y lógica."""

    def test_consistency_gate(self):
        """Test: I_cst compara y_dec con y_final."""
        self.assertEqual(consistency_gate_service(FigureTrajectoryFactory()), 1)
        self.assertEqual(consistency_gate_service(Trajectory.from_slots(2, [NO] * 5, 3)), 0)
        self.assertEqual(consistency_gate_service(Trajectory.from_slots(0, [YES] + [NO] * 4, 0)), 1)

    def test_infer_label_examples(self):
        """Test: árbol de decisión sobre los checkpoints."""
        self.assertEqual(infer_label_service((NO, NO, YES, YES, NO)), 3)
        self.assertEqual(infer_label_service((YES, NO, NO, NO, NO)), 0)
        self.assertEqual(infer_label_service((NO, NO, YES, YES, YES)), 4)
        self.assertEqual(infer_label_service((NO, YES, YES, YES, YES)), 1)
        self.assertEqual(infer_label_service((NO, NO, NO, YES, YES)), 1)
        self.assertEqual(infer_label_service((NO, NO, YES, NO, YES)), 2)

    def test_infer_label_none_answers(self):
        """Test: None cuenta como distinto de Yes."""
        none = CheckpointAnswer.NONE
        self.assertEqual(infer_label_service((none, none, none, none, none)), 1)
        self.assertEqual(infer_label_service(("No", "No", "Yes", "Yes", "None")), 3)

    def test_infer_labels_batch_matches_scalar(self):
        """Test: la versión vectorizada coincide en las 32 combinaciones."""
        # Arrange
        combos = list(itertools.product((0, 1), repeat=5))

        # Act
        batch = infer_labels_batch(np.array(combos))

        # Assert
        for tokens, label in zip(combos, batch, strict=True):
            self.assertEqual(infer_label_service([CHECKPOINT_VOCAB[t] for t in tokens]), label)

    def test_logic_gate(self):
        """Test: I_logic exige ŷ == y_dec == y_gt."""
        figure = FigureTrajectoryFactory()
        self.assertEqual(logic_gate_service(figure, 3), (1, 3))
        self.assertEqual(logic_gate_service(figure, 2), (0, 3))
        wrong_decision = Trajectory.from_slots(2, figure.checkpoints, 2)
        self.assertEqual(logic_gate_service(wrong_decision, 3), (0, 3))


# ============================================================================
# Tests Unitarios - Recompensa
# ============================================================================


class OrdinalResultRewardTestCase(SimpleTestCase):
    """Tests para ordinal_result_reward_service."""

    def test_examples(self):
        """Test: ejemplos de R_res con γ = 0.25."""
        cfg = RewardConfig()
        self.assertEqual(ordinal_result_reward_service(2, 2, cfg), 1.0)
        self.assertEqual(ordinal_result_reward_service(1, 3, cfg), -0.5)
        self.assertEqual(ordinal_result_reward_service(0, 4, cfg), -1.0)

    def test_full_table(self):
        """Test: las 25 parejas siguen la fórmula exacta y son monótonas en la distancia."""
        cfg = RewardConfig()
        for y_gt in range(5):
            values = []
            for y_pred in range(5):
                expected = 1.0 if y_pred == y_gt else -0.25 * abs(y_pred - y_gt)
                value = ordinal_result_reward_service(y_pred, y_gt, cfg)
                self.assertEqual(value, expected)
                values.append((abs(y_pred - y_gt), value))
            values.sort()
            for (_, a), (_, b) in itertools.pairwise(values):
                self.assertGreaterEqual(a, b)

    def test_invalid_label(self):
        """Test: etiquetas fuera de rango se rechazan."""
        with self.assertRaises(ValidationError):
            ordinal_result_reward_service(5, 0, RewardConfig())


class TotalRewardServiceTestCase(SimpleTestCase):
    """Tests para total_reward_service."""

    def setUp(self):
        """Arrange: config por defecto y texto del ejemplo."""
        self.cfg = RewardConfig()
        self.text = render_trajectory_service(FigureTrajectoryFactory())

    def test_figure_trajectory_full_reward(self):
        """Test: todos los gates en 1 dan α + β = 1.0."""
        # Act
        breakdown = total_reward_service(self.text, 3, self.cfg)

        # Assert
        self.assertEqual((breakdown.i_fmt, breakdown.i_cst, breakdown.i_logic), (1, 1, 1))
        self.assertEqual(breakdown.y_hat, 3)
        self.assertEqual(breakdown.r_cot, 1)
        self.assertAlmostEqual(breakdown.total, 1.0, places=12)

    def test_malformed_text_penalty(self):
        """Test: formato inválido devuelve exactamente -1.0 y gates a 0."""
        # Act
        breakdown = total_reward_service("not a trajectory", 3, self.cfg)

        # Assert
        self.assertEqual(breakdown.total, -1.0)
        self.assertEqual((breakdown.i_fmt, breakdown.i_cst, breakdown.i_logic), (0, 0, 0))
        self.assertIsNone(breakdown.y_hat)

    def test_logic_gate_zeroes_reward(self):
        """Test: y_dec = y_final = ŷ = 3 con y_gt = 2 da 0."""
        breakdown = total_reward_service(self.text, 2, self.cfg)
        self.assertEqual(breakdown.total, 0.0)
        self.assertEqual(breakdown.i_logic, 0)

    def test_gating_soundness_brute_force(self):
        """Test: en las 4000 combinaciones, total > 0 sii todos los gates pasan y y_dec == y_gt."""
        # Arrange
        tokens, labels, expected = [], [], []

        # Act & Assert
        for y_dec, checkpoints, y_final in _all_slot_assignments():
            trajectory = Trajectory.from_slots(y_dec, checkpoints, y_final)
            text = render_trajectory_service(trajectory)
            for y_gt in range(5):
                breakdown = total_reward_service(text, y_gt, self.cfg)
                all_pass = breakdown.i_fmt == breakdown.i_cst == breakdown.i_logic == 1
                self.assertEqual(breakdown.total > 0, all_pass and y_dec == y_gt)
                self.assertIn(breakdown.total, (0.0, self.cfg.alpha + self.cfg.beta))
                self.assertGreaterEqual(breakdown.r_res, -4 * self.cfg.gamma_ord)
                self.assertLessEqual(breakdown.r_res, 1.0)
                tokens.append(trajectory.slot_tokens())
                labels.append(y_gt)
                expected.append(breakdown.total)

        self.assertEqual(len(expected), 4000)
        vectorized = score_slot_tokens_service(np.array(tokens), np.array(labels), self.cfg)
        np.testing.assert_array_equal(vectorized, np.array(expected))

    def test_reward_is_deterministic(self):
        """Test: entradas iguales dan desgloses iguales."""
        self.assertEqual(
            total_reward_service(self.text, 3, self.cfg),
            total_reward_service(self.text, 3, self.cfg),
        )


class WeightMaskServiceTestCase(SimpleTestCase):
    """Tests para weight_mask_service."""

    def test_default_mask(self):
        """Test: máscara por defecto (10, 10, 10, 10, 10, 10, 5)."""
        mask = weight_mask_service(RewardConfig())
        self.assertEqual(mask.weights, (10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 5.0))
        self.assertEqual(mask.weights[0], 10.0)
        self.assertEqual(mask.weights[6], 5.0)

    def test_uniform_mask(self):
        """Test: todos los pesos a 1 desactivan el peso por pasos."""
        cfg = build_reward_config_service({"w_decision": 1, "w_trace": 1, "w_final": 1})
        np.testing.assert_array_equal(weight_mask_service(cfg).as_array(), np.ones(7))


class RewardAuditTestCase(SimpleTestCase):
    """Tests para el log JSONL de auditoría."""

    def test_write_and_read_audit(self):
        """Test: un registro por trayectoria con los campos del tipo."""
        # Arrange
        cfg = RewardConfig()
        figure = render_trajectory_service(FigureTrajectoryFactory())
        breakdowns = [total_reward_service(figure, y, cfg) for y in range(5)]
        breakdowns.append(total_reward_service("", 0, cfg))

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "audit.jsonl"

            # Act
            written = write_reward_audit_service(path, breakdowns)
            lines = path.read_text(encoding="utf-8").splitlines()
            restored = read_reward_audit_service(path)

        # Assert
        self.assertEqual(written, 6)
        self.assertEqual(len(lines), 6)
        self.assertIn('"i_fmt": 0', lines[-1])
        self.assertEqual(restored, breakdowns)
