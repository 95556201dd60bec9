from __future__ import annotations

from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

import numpy as np

from apps.curriculum.domain import (
    DEFAULT_STAGES,
    BinnedInstances,
    DifficultyBin,
    StageSpec,
    difficulty_bin_for_count,
)
from apps.curriculum.services import (
    bin_dataset_service,
    build_stage_specs_service,
    estimate_difficulty_service,
    random_batches_service,
    schedule_is_monotone,
    stage_batches_service,
)
from apps.grammar.domain import SLOT_VOCAB_SIZES
from apps.optim.domain import HybridCoeffs
from apps.policy.domain import PolicyParams
from apps.policy.services import init_params_service
from apps.world.domain import WorldConfig
from apps.world.services import expert_trajectory_service, gen_dataset_service


def _forced_policy(tokens: list[int], feature_dim: int = 16) -> PolicyParams:
    """Política determinista que siempre emite `tokens`."""
    uniform = init_params_service(feature_dim)
    biases = []
    for slot, size in enumerate(SLOT_VOCAB_SIZES):
        bias = np.zeros(size)
        bias[tokens[slot]] = 1e6
        biases.append(bias)
    return PolicyParams(weights=uniform.weights, biases=tuple(biases))


def _manual_bins() -> BinnedInstances:
    # 10 Easy, 10 Medium, 10 Hard, 10 Excluded
    return BinnedInstances(counts=np.repeat([8, 4, 1, 0], 10))


# ============================================================================
# Tests Unitarios - Bins
# ============================================================================


class DifficultyBinTestCase(SimpleTestCase):
    """Tests para difficulty_bin_for_count."""

    def test_thresholds_for_all_counts(self):
        """Test: tabla completa de 0 a 8 muestras correctas."""
        expected = {
            0: DifficultyBin.EXCLUDED,
            1: DifficultyBin.HARD,
            2: DifficultyBin.MEDIUM,
            3: DifficultyBin.MEDIUM,
            4: DifficultyBin.MEDIUM,
            5: DifficultyBin.MEDIUM,
            6: DifficultyBin.MEDIUM,
            7: DifficultyBin.EASY,
            8: DifficultyBin.EASY,
        }
        for count, difficulty in expected.items():
            self.assertEqual(difficulty_bin_for_count(count), difficulty, msg=f"count {count}")

    def test_vectorized_labels_match(self):
        """Test: BinnedInstances.labels coincide con la función escalar."""
        counts = np.arange(9)
        binned = BinnedInstances(counts=counts)
        self.assertEqual(binned.labels.tolist(), [difficulty_bin_for_count(int(c)).value for c in counts])

    def test_count_out_of_range(self):
        """Test: count fuera de [0, n] es un error."""
        with self.assertRaises(ValidationError):
            difficulty_bin_for_count(9)

    def test_other_sample_sizes(self):
        """Test: con n = 4, Easy >= 3 y Medium = 2."""
        self.assertEqual(difficulty_bin_for_count(3, 4), DifficultyBin.EASY)
        self.assertEqual(difficulty_bin_for_count(2, 4), DifficultyBin.MEDIUM)


class EstimateDifficultyServiceTestCase(SimpleTestCase):
    """Tests para estimate_difficulty_service."""

    def setUp(self):
        self.instance = gen_dataset_service(1, WorldConfig(seed=3)).instances[0]
        self.correct = list(expert_trajectory_service(self.instance).slot_tokens())

    def test_always_correct_policy(self):
        """Test: política siempre correcta da 8 y Easy."""
        count, difficulty = estimate_difficulty_service(
            _forced_policy(self.correct), self.instance, np.random.default_rng(0)
        )
        self.assertEqual((count, difficulty), (8, DifficultyBin.EASY))

    def test_always_wrong_policy(self):
        """Test: política siempre incorrecta da 0 y Excluded."""
        wrong = list(self.correct)
        wrong[0] = wrong[6] = (self.instance.label + 1) % 5
        count, difficulty = estimate_difficulty_service(_forced_policy(wrong), self.instance, np.random.default_rng(0))
        self.assertEqual((count, difficulty), (0, DifficultyBin.EXCLUDED))

    def test_invalid_sample_count(self):
        """Test: n_samples < 1 es un error."""
        with self.assertRaises(ValidationError):
            estimate_difficulty_service(init_params_service(16), self.instance, np.random.default_rng(0), n_samples=0)


class BinDatasetServiceTestCase(SimpleTestCase):
    """Tests para bin_dataset_service."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dataset = gen_dataset_service(600, WorldConfig(seed=4))

    def test_uniform_policy_partition(self):
        """Test: con la política uniforme la partición es exhaustiva y Excluded es el bin mayoritario."""
        # Act
        binned = bin_dataset_service(init_params_service(16), self.dataset, np.random.default_rng(0))
        sizes = binned.sizes()

        # Assert
        self.assertEqual(sum(sizes.values()), len(self.dataset))
        self.assertEqual(max(sizes, key=sizes.get), DifficultyBin.EXCLUDED)
        positions = np.concatenate([binned.positions(b) for b in DifficultyBin])
        self.assertEqual(sorted(positions.tolist()), list(range(len(self.dataset))))

    def test_rebinning_is_deterministic(self):
        """Test: misma semilla, misma partición."""
        params = init_params_service(16)
        first = bin_dataset_service(params, self.dataset, np.random.default_rng(7))
        second = bin_dataset_service(params, self.dataset, np.random.default_rng(7))
        np.testing.assert_array_equal(first.counts, second.counts)


# ============================================================================
# Tests Unitarios - Etapas
# ============================================================================


class StageBatchesServiceTestCase(SimpleTestCase):
    """Tests para stage_batches_service."""

    def test_stage_three_hard_fraction(self):
        """Test: 10.000 extracciones de la etapa 3 dan Hard en 65.6% ± 2%."""
        batches = list(stage_batches_service(DEFAULT_STAGES[2], _manual_bins(), 100, np.random.default_rng(0), 100))
        drawn = np.concatenate([b.bins for b in batches])
        self.assertEqual(drawn.size, 10_000)
        self.assertAlmostEqual(np.mean(drawn == DifficultyBin.HARD.value), 0.656, delta=0.02)

    def test_stage_one_coefficients(self):
        """Test: cada lote de la etapa 1 lleva (0.85, 0.15)."""
        for batch in stage_batches_service(DEFAULT_STAGES[0], _manual_bins(), 8, np.random.default_rng(1), 20):
            self.assertEqual(batch.coeffs, HybridCoeffs(0.85, 0.15))
            self.assertEqual(batch.stage, 1)

    def test_point_mass_mix(self):
        """Test: mezcla (0, 0, 1) da lotes solo Hard."""
        stage = StageSpec(stage=1, mix=(0.0, 0.0, 1.0), coeffs=HybridCoeffs(0.9, 0.1))
        bins = _manual_bins()
        hard = set(bins.positions(DifficultyBin.HARD).tolist())
        for batch in stage_batches_service(stage, bins, 16, np.random.default_rng(2), 10):
            self.assertTrue(set(batch.positions.tolist()) <= hard)

    def test_excluded_never_sampled(self):
        """Test: ninguna instancia Excluded entra en un lote."""
        bins = _manual_bins()
        excluded = set(bins.positions(DifficultyBin.EXCLUDED).tolist())
        for stage in DEFAULT_STAGES:
            for batch in stage_batches_service(stage, bins, 32, np.random.default_rng(stage.stage), 50):
                self.assertFalse(excluded & set(batch.positions.tolist()))

    def test_empty_bin_fallback(self):
        """Test: sin instancias Hard la masa se reparte y se registra un warning."""
        bins = BinnedInstances(counts=np.repeat([8, 4, 0], 10))
        with self.assertLogs("apps.curriculum.services", level="WARNING"):
            batches = list(stage_batches_service(DEFAULT_STAGES[2], bins, 100, np.random.default_rng(3), 50))
        drawn = np.concatenate([b.bins for b in batches])
        self.assertFalse(np.any(drawn == DifficultyBin.HARD.value))
        # Easy:Medium conserva 5:16
        self.assertAlmostEqual(np.mean(drawn == DifficultyBin.EASY.value), 5 / 21, delta=0.02)

    def test_all_bins_empty(self):
        """Test: sin instancias elegibles es un error."""
        bins = BinnedInstances(counts=np.zeros(10, dtype=np.int64))
        with self.assertRaises(ValidationError):
            next(stage_batches_service(DEFAULT_STAGES[0], bins, 8, np.random.default_rng(0), 1))


class RandomBatchesServiceTestCase(SimpleTestCase):
    """Tests para random_batches_service."""

    def test_uniform_over_eligible(self):
        """Test: muestreo uniforme entre Easy, Medium y Hard, nunca Excluded."""
        batches = list(
            random_batches_service(_manual_bins(), 300, np.random.default_rng(4), HybridCoeffs(0.9, 0.1), 20)
        )
        drawn = np.concatenate([b.bins for b in batches])
        self.assertNotIn(DifficultyBin.EXCLUDED.value, drawn.tolist())
        self.assertAlmostEqual(np.mean(drawn == DifficultyBin.HARD.value), 1 / 3, delta=0.02)


class StageSpecsTestCase(SimpleTestCase):
    """Tests para el calendario de etapas."""

    def test_default_schedule(self):
        """Test: el calendario por defecto reproduce las mezclas y es monótono."""
        self.assertTrue(schedule_is_monotone(DEFAULT_STAGES))
        np.testing.assert_allclose(DEFAULT_STAGES[0].ratios, [0.044, 0.556, 0.400], atol=5e-4)
        np.testing.assert_allclose(DEFAULT_STAGES[1].ratios, [0.033, 0.410, 0.557], atol=5e-4)
        self.assertEqual(
            [(s.coeffs.alpha_t, s.coeffs.gamma_t) for s in DEFAULT_STAGES],
            [(0.85, 0.15), (0.90, 0.10), (0.95, 0.05)],
        )

    def test_build_from_config(self):
        """Test: las etapas del config JSON se validan y convierten."""
        stages = build_stage_specs_service(
            [
                {"stage": 1, "mix": [1, 1, 1], "coeffs": {"alpha_t": 0.8, "gamma_t": 0.2}, "steps": 5},
                {"stage": 2, "mix": [0, 0, 1], "coeffs": {"alpha_t": 1.0, "gamma_t": 0.0}, "steps": 5},
            ]
        )
        self.assertEqual(len(stages), 2)
        self.assertEqual(stages[1].coeffs, HybridCoeffs(1.0, 0.0))
        self.assertEqual(build_stage_specs_service(None), DEFAULT_STAGES)

    def test_invalid_config(self):
        """Test: coeficientes que no suman 1 o etapas desordenadas se rechazan."""
        with self.assertRaises(ValidationError):
            build_stage_specs_service([{"stage": 1, "mix": [1, 1, 1], "coeffs": {"alpha_t": 0.8, "gamma_t": 0.3}}])
        with self.assertRaises(ValidationError):
            build_stage_specs_service([{"stage": 2, "mix": [1, 1, 1], "coeffs": {"alpha_t": 0.8, "gamma_t": 0.2}}])

    def test_non_monotone_schedule_warns(self):
        """Test: un calendario con γ_t creciente se registra como warning."""
        with self.assertLogs("apps.curriculum.services", level="WARNING"):
            build_stage_specs_service(
                [
                    {"stage": 1, "mix": [1, 1, 1], "coeffs": {"alpha_t": 0.95, "gamma_t": 0.05}},
                    {"stage": 2, "mix": [1, 1, 1], "coeffs": {"alpha_t": 0.85, "gamma_t": 0.15}},
                ]
            )
