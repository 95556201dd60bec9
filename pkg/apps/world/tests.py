from __future__ import annotations

import itertools
import tempfile
from pathlib import Path

from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

import numpy as np

from apps.grammar.domain import CheckpointAnswer
from apps.grammar.services import render_trajectory_service
from apps.rewards.domain import RewardConfig
from apps.rewards.services import infer_label_service, infer_labels_batch, total_reward_service
from apps.world.domain import F_LONGTAIL, F_OFFICIAL, F_SHORTCUT, WorldConfig
from apps.world.factories import WorldConfigFactory
from apps.world.services import (
    build_world_config_service,
    expert_slot_tokens_batch,
    expert_trajectory_service,
    free_checkpoint_mask,
    gen_dataset_service,
    oracle_checkpoint_tokens,
    oracle_checkpoints_service,
    read_dataset_jsonl_service,
    relabel_checkpoints,
    sample_expert_trajectory_service,
    split_dataset_service,
    write_dataset_jsonl_service,
)

YES, NO = CheckpointAnswer.YES, CheckpointAnswer.NO


class _SharedDatasetMixin:
    """Dataset de 10.000 instancias compartido por la clase."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.cfg = WorldConfig(seed=11)
        cls.dataset = gen_dataset_service(10_000, cls.cfg)


# ============================================================================
# Tests Unitarios - Oráculo
# ============================================================================


class OracleCheckpointsServiceTestCase(SimpleTestCase):
    """Tests para oracle_checkpoints_service."""

    def test_all_zeros_is_irrelevant(self):
        """Test: el vector nulo se mapea a (Yes, No, No, No, No)."""
        self.assertEqual(oracle_checkpoints_service(np.zeros(16)), (YES, NO, NO, NO, NO))

    def test_oracle_is_pure(self):
        """Test: dos llamadas sobre el mismo vector coinciden."""
        features = np.random.default_rng(0).normal(0.5, 1.0, size=16)
        self.assertEqual(oracle_checkpoints_service(features), oracle_checkpoints_service(features.copy()))

    def test_official_requires_longtail_indicator(self):
        """Test: la evidencia oficial sin indicador long-tail no dispara el checkpoint."""
        # Arrange
        features = np.full(16, 1.0)
        features[5] = 0.0

        # Act
        answers = oracle_checkpoints_service(features)

        # Assert
        self.assertEqual(answers[4], NO)
        features[5] = 1.0
        self.assertEqual(oracle_checkpoints_service(features)[4], YES)

    def test_dimension_mismatch(self):
        """Test: dimensión incorrecta es un error."""
        with self.assertRaises(ValidationError):
            oracle_checkpoints_service(np.zeros(5))
        with self.assertRaises(ValidationError):
            oracle_checkpoints_service(np.zeros(16), feature_dim=20)


# ============================================================================
# Tests Unitarios - Config
# ============================================================================


class WorldConfigTestCase(SimpleTestCase):
    """Tests para build_world_config_service."""

    def test_defaults(self):
        """Test: valores por defecto."""
        self.assertEqual(build_world_config_service(), WorldConfig())

    def test_invalid_rates(self):
        """Test: tasas fuera de [0, 1] y D < 7 se rechazan."""
        for data in ({"longtail_rate": 1.5}, {"shortcut_strength": -0.1}, {"feature_dim": 6}):
            with self.assertRaises(ValidationError):
                build_world_config_service(data)

    def test_marginals_must_sum_to_one(self):
        """Test: las marginales deben sumar 1."""
        with self.assertRaises(ValidationError):
            build_world_config_service({"label_marginals": [0.5, 0.5, 0.5, 0.5]})


# ============================================================================
# Tests Unitarios - Generación
# ============================================================================


class GenDatasetServiceTestCase(_SharedDatasetMixin, SimpleTestCase):
    """Tests para gen_dataset_service."""

    def test_longtail_rate_within_bounds(self):
        """Test: n=10.000 con tasa 0.02 da entre 100 y 300 long-tail (y ±1%)."""
        count = int(self.dataset.is_longtail.sum())
        self.assertGreaterEqual(count, 100)
        self.assertLessEqual(count, 300)
        self.assertLess(abs(count / 10_000 - 0.02), 0.01)

    def test_label_oracle_consistency(self):
        """Test: label = infer_label(oracle(features)) en todo el dataset."""
        tokens = oracle_checkpoint_tokens(self.dataset.features)
        np.testing.assert_array_equal(tokens, self.dataset.checkpoint_tokens)
        np.testing.assert_array_equal(infer_labels_batch(tokens), self.dataset.labels)
        for instance in self.dataset.instances[:200]:
            self.assertEqual(instance.label, infer_label_service(instance.truth_checkpoints))

    def test_every_label_present(self):
        """Test: las cinco etiquetas aparecen con n >= 1.000."""
        small = gen_dataset_service(1_000, self.cfg)
        self.assertTrue(np.all(np.bincount(small.labels, minlength=5) > 0))

    def test_longtail_instances_fire_official(self):
        """Test: toda instancia long-tail tiene official = Yes y etiqueta 4."""
        longtail = self.dataset.subset(np.flatnonzero(self.dataset.is_longtail))
        self.assertTrue(np.all(longtail.checkpoint_tokens[:, 4] == 0))
        self.assertTrue(np.all(longtail.labels == 4))
        self.assertTrue(np.all(self.dataset.labels[~self.dataset.is_longtail] < 4))

    def test_single_instance(self):
        """Test: n=1 da una instancia consistente."""
        dataset = gen_dataset_service(1, WorldConfigFactory())
        instance = dataset.instances[0]
        self.assertEqual(len(dataset), 1)
        self.assertEqual(instance.label, infer_label_service(oracle_checkpoints_service(instance.features)))

    def test_determinism(self):
        """Test: (n, cfg, seed) iguales dan datasets idénticos byte a byte."""
        # Arrange
        cfg = WorldConfigFactory()

        # Act
        first = gen_dataset_service(500, cfg)
        second = gen_dataset_service(500, cfg)

        # Assert
        self.assertEqual(first.features.tobytes(), second.features.tobytes())
        np.testing.assert_array_equal(first.labels, second.labels)
        np.testing.assert_array_equal(first.ambiguity, second.ambiguity)

    def test_prefix_independent_of_size(self):
        """Test: los substreams por índice hacen que el prefijo no dependa de n."""
        first = gen_dataset_service(100, self.cfg)
        np.testing.assert_array_equal(first.features, self.dataset.features[:100])

    def test_invalid_n(self):
        """Test: n < 1 es un error."""
        with self.assertRaises(ValidationError):
            gen_dataset_service(0, self.cfg)

    def test_shortcut_collapse_precondition(self):
        """Test: una política que solo lee el atajo acierta relevante/irrelevante pero pierde el long-tail."""
        # Arrange
        head = ~self.dataset.is_longtail
        shortcut_relevant = self.dataset.features[:, F_SHORTCUT] > 0.5
        # Checkpoints de la política atajo: patrón mayoritario de cada grupo, official siempre No
        shortcut_checkpoints = np.where(shortcut_relevant[:, None], [1, 1, 0, 0, 1], [0, 1, 1, 1, 1])

        # Act
        two_acc = np.mean(shortcut_relevant[head] == (self.dataset.labels[head] >= 2))
        longtail_acc = np.mean(
            np.all(
                shortcut_checkpoints[self.dataset.is_longtail]
                == self.dataset.checkpoint_tokens[self.dataset.is_longtail],
                axis=1,
            )
        )

        # Assert
        self.assertGreaterEqual(two_acc, self.cfg.shortcut_strength - 0.01)
        self.assertLessEqual(longtail_acc, 0.5)

    def test_shortcut_agreement_rate(self):
        """Test: el atajo coincide con `label >= 2` con probabilidad shortcut_strength."""
        # Arrange
        dataset = gen_dataset_service(5_000, WorldConfig(seed=12, shortcut_strength=0.6))
        head = ~dataset.is_longtail

        # Act
        shows_relevant = dataset.features[:, F_SHORTCUT] > 0.5
        agreement = np.mean(shows_relevant[head] == (dataset.labels[head] >= 2))

        # Assert
        self.assertAlmostEqual(agreement, 0.6, delta=0.03)

    def test_shortcut_hides_longtail_relevance(self):
        """Test: en long-tail el atajo muestra irrelevante con probabilidad shortcut_strength."""
        shows_relevant = self.dataset.features[self.dataset.is_longtail, F_SHORTCUT] > 0.5
        self.assertGreaterEqual(np.mean(~shows_relevant), 0.8)

    def test_head_near_misses(self):
        """Test: la cabeza nunca tiene las dos evidencias oficiales y 2/3 tienen exactamente una."""
        # Arrange
        head = self.dataset.features[~self.dataset.is_longtail]

        # Act
        cues = (head[:, [F_OFFICIAL, F_LONGTAIL]] > 0.5).sum(axis=1)

        # Assert
        self.assertEqual(int(np.max(cues)), 1)
        self.assertAlmostEqual(np.mean(cues == 1), 2 / 3, delta=0.03)


class SplitDatasetServiceTestCase(_SharedDatasetMixin, SimpleTestCase):
    """Tests para split_dataset_service."""

    def test_split_by_query(self):
        """Test: ninguna query aparece en ambos lados y el holdout es ~20%."""
        train, holdout = split_dataset_service(self.dataset, 0.2)
        self.assertEqual(len(train) + len(holdout), len(self.dataset))
        self.assertFalse(set(train.query_ids.tolist()) & set(holdout.query_ids.tolist()))
        self.assertAlmostEqual(len(holdout) / len(self.dataset), 0.2, delta=0.01)

    def test_split_is_frozen(self):
        """Test: el split es determinista."""
        _, first = split_dataset_service(self.dataset, 0.2)
        _, second = split_dataset_service(self.dataset, 0.2)
        np.testing.assert_array_equal(first.indices, second.indices)


# ============================================================================
# Tests Unitarios - Experto
# ============================================================================


class ExpertTrajectoryServiceTestCase(_SharedDatasetMixin, SimpleTestCase):
    """Tests para expert_trajectory_service y la distribución experta."""

    def test_expert_reward_is_maximal(self):
        """Test: toda trayectoria experta obtiene 1.0 y pasa el formato."""
        cfg = RewardConfig()
        for instance in self.dataset.instances[:300]:
            breakdown = total_reward_service(
                render_trajectory_service(expert_trajectory_service(instance)), instance.label, cfg
            )
            self.assertEqual(breakdown.i_fmt, 1)
            self.assertAlmostEqual(breakdown.total, 1.0, places=12)

    def test_label_zero_has_irrelevant_yes(self):
        """Test: etiqueta 0 implica Step 4 con Yes."""
        position = int(np.flatnonzero(self.dataset.labels == 0)[0])
        trajectory = expert_trajectory_service(self.dataset.instance(position))
        self.assertEqual(trajectory.trace[3].boxed, YES)
        self.assertEqual(trajectory.y_dec, 0)

    def test_relabel_checkpoints_is_consistent(self):
        """Test: la edición mínima produce la etiqueta pedida."""
        for instance in self.dataset.instances[:400]:
            if instance.is_longtail:
                continue
            for label in range(4):
                edited = relabel_checkpoints(instance.truth_checkpoints, label)
                self.assertEqual(infer_label_service(edited), label)

    def test_sampled_expert_is_consistent_and_spread(self):
        """Test: π_data siempre es consistente y reetiqueta una fracción pequeña."""
        # Arrange
        rng = np.random.default_rng(3)
        instances = [i for i in self.dataset.instances[:2000] if not i.is_longtail]

        # Act
        samples = [sample_expert_trajectory_service(i, rng, 0.2) for i in instances]

        # Assert
        changed = sum(s.y_dec != i.label for s, i in zip(samples, instances, strict=True))
        self.assertGreater(changed, 0)
        self.assertLess(changed / len(instances), 0.2)
        for sample in samples:
            self.assertEqual(sample.y_dec, sample.y_final)
            self.assertEqual(infer_label_service(sample.checkpoints), sample.y_dec)

    def test_longtail_never_relabelled(self):
        """Test: las instancias long-tail siempre reciben la trayectoria verdadera."""
        rng = np.random.default_rng(5)
        positions = np.flatnonzero(self.dataset.is_longtail)
        tokens = expert_slot_tokens_batch(self.dataset, positions, rng, label_noise=1.0)
        self.assertTrue(np.all(tokens[:, 0] == 4))

    def test_expert_batch_without_noise(self):
        """Test: sin ruido los tokens son (label, checkpoints, label)."""
        positions = np.arange(50)
        tokens = expert_slot_tokens_batch(self.dataset, positions)
        for row, position in zip(tokens, positions, strict=True):
            self.assertEqual(
                tuple(row), expert_trajectory_service(self.dataset.instance(int(position))).slot_tokens()
            )

    def test_free_checkpoint_mask(self):
        """Test: solo quedan libres los checkpoints posteriores al primer corte del árbol."""
        cases = {
            (0, 1, 1, 1, 1): [False, True, True, True, True],
            (1, 0, 0, 1, 1): [False, False, True, True, True],
            (1, 1, 1, 1, 1): [False, False, False, True, True],
            (1, 1, 0, 1, 1): [False, False, False, False, True],
            (1, 1, 0, 0, 1): [False] * 5,
            (1, 1, 0, 0, 0): [False] * 5,
        }
        for tokens, expected in cases.items():
            with self.subTest(tokens=tokens):
                self.assertEqual(free_checkpoint_mask(np.array(tokens)).tolist(), expected)

    def test_free_checkpoints_never_change_label(self):
        """Test: invertir cualquier subconjunto de checkpoints libres conserva la etiqueta (32 combinaciones)."""
        combos = np.array(list(itertools.product((0, 1), repeat=5)))
        free = free_checkpoint_mask(combos)
        for flips in itertools.product((0, 1), repeat=5):
            flipped = np.where(free & np.array(flips, dtype=bool), 1 - combos, combos)
            np.testing.assert_array_equal(infer_labels_batch(flipped), infer_labels_batch(combos))

    def test_expert_batch_spreads_free_checkpoints(self):
        """Test: con checkpoint_noise = 0.5 los checkpoints libres salen al azar y la etiqueta se conserva."""
        # Arrange
        rng = np.random.default_rng(7)
        positions = np.arange(len(self.dataset))

        # Act
        tokens = expert_slot_tokens_batch(self.dataset, positions, rng, label_noise=0.0, checkpoint_noise=0.5)

        # Assert
        np.testing.assert_array_equal(tokens[:, 0], self.dataset.labels)
        np.testing.assert_array_equal(tokens[:, 6], self.dataset.labels)
        np.testing.assert_array_equal(infer_labels_batch(tokens[:, 1:6]), self.dataset.labels)
        label_zero = self.dataset.labels == 0
        flipped = tokens[label_zero, 2:6] != self.dataset.checkpoint_tokens[label_zero, 1:5]
        self.assertAlmostEqual(float(flipped.mean()), 0.5, delta=0.03)
        decisive = self.dataset.labels >= 3
        np.testing.assert_array_equal(tokens[decisive, 1:6], self.dataset.checkpoint_tokens[decisive])

    def test_sampled_expert_spreads_free_checkpoints(self):
        """Test: la versión por instancia también invierte los checkpoints libres."""
        # Arrange
        rng = np.random.default_rng(8)
        position = int(np.flatnonzero(self.dataset.labels == 0)[0])
        instance = self.dataset.instance(position)

        # Act
        samples = [sample_expert_trajectory_service(instance, rng, 0.0, checkpoint_noise=0.5) for _ in range(400)]

        # Assert
        weak_flipped = np.mean([s.checkpoints[1] != instance.truth_checkpoints[1] for s in samples])
        self.assertAlmostEqual(weak_flipped, 0.5, delta=0.1)
        self.assertTrue(all(s.y_dec == 0 and s.checkpoints[0] is YES for s in samples))


class DatasetJsonlTestCase(SimpleTestCase):
    """Tests para la serialización JSONL del dataset."""

    def test_write_and_read(self):
        """Test: una instancia por línea y lectura sin pérdidas."""
        # Arrange
        dataset = gen_dataset_service(64, WorldConfigFactory())

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "data.jsonl"

            # Act
            written = write_dataset_jsonl_service(dataset, path)
            lines = path.read_text(encoding="utf-8").splitlines()
            restored = read_dataset_jsonl_service(path, dataset.config)

        # Assert
        self.assertEqual(written, 64)
        self.assertEqual(len(lines), 64)
        self.assertIn('"checkpoints": [', lines[0])
        np.testing.assert_array_equal(restored.features, dataset.features)
        np.testing.assert_array_equal(restored.labels, dataset.labels)
        np.testing.assert_array_equal(restored.query_ids, dataset.query_ids)

    def test_inconsistent_label_rejected(self):
        """Test: una etiqueta que contradice al oráculo se rechaza."""
        dataset = gen_dataset_service(4, WorldConfigFactory())
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "data.jsonl"
            write_dataset_jsonl_service(dataset, path)
            text = path.read_text(encoding="utf-8")
            label = int(dataset.labels[0])
            path.write_text(
                text.replace(f'"label": {label}', f'"label": {(label + 1) % 4}', 1), encoding="utf-8"
            )
            with self.assertRaises(ValidationError):
                read_dataset_jsonl_service(path)
