from __future__ import annotations

import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

import numpy as np

from apps.grammar.domain import NUM_SLOTS, SLOT_VOCAB_SIZES, SlotIndex, Trajectory
from apps.policy.domain import Capacity, PolicyParams, SlotDistribution
from apps.policy.factories import PolicyParamsFactory
from apps.policy.serializers import params_to_payload
from apps.policy.services import (
    backprop_logit_grads,
    entropy_service,
    grad_log_prob_service,
    init_params_service,
    load_params_service,
    log_prob_service,
    sample_slot_tokens_batch,
    sample_trajectory_service,
    save_params_service,
    slot_distribution_service,
    slot_entropies_batch,
    slot_probs_batch,
    weighted_expected_score_service,
)


def _random_tokens(rng: np.random.Generator) -> list[int]:
    return [int(rng.integers(size)) for size in SLOT_VOCAB_SIZES]


def _with_biases(params: PolicyParams, biases: dict[int, list[float]]) -> PolicyParams:
    """Copia de `params` con los sesgos de algunos slots reemplazados."""
    new_biases = tuple(
        np.asarray(biases[slot], dtype=np.float64) if slot in biases else b for slot, b in enumerate(params.biases)
    )
    return PolicyParams(weights=params.weights, biases=new_biases)


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
# Tests Unitarios - Distribuciones
# ============================================================================


class SlotDistributionServiceTestCase(SimpleTestCase):
    """Tests para slot_distribution_service."""

    def setUp(self):
        self.features = np.random.default_rng(0).normal(size=16)
        self.uniform = init_params_service(16)

    def test_zero_params_is_uniform(self):
        """Test: parámetros nulos dan la distribución uniforme."""
        for slot in SlotIndex:
            dist = slot_distribution_service(self.uniform, self.features, slot)
            np.testing.assert_allclose(dist.probs, np.full(SLOT_VOCAB_SIZES[slot], 1.0 / SLOT_VOCAB_SIZES[slot]))

    def test_large_temperature_is_uniform(self):
        """Test: T = 10^6 da una distribución uniforme dentro de 1e-4."""
        params = PolicyParamsFactory(scale=2.0)
        dist = slot_distribution_service(params, self.features, SlotIndex.DECISION, temperature=1e6)
        np.testing.assert_allclose(dist.probs, np.full(5, 0.2), atol=1e-4)

    def test_closed_form_softmax(self):
        """Test: logits (1, 0, 0, 0, 0) a T=1 dan (e, 1, 1, 1, 1) / (e + 4)."""
        params = _with_biases(self.uniform, {0: [1.0, 0.0, 0.0, 0.0, 0.0]})
        dist = slot_distribution_service(params, self.features, SlotIndex.DECISION)
        expected = np.array([np.e, 1.0, 1.0, 1.0, 1.0]) / (np.e + 4.0)
        np.testing.assert_allclose(dist.probs, expected, rtol=1e-12)

    def test_normalization(self):
        """Test: cada distribución suma 1 dentro de 1e-12."""
        rng = np.random.default_rng(1)
        for _ in range(50):
            params = PolicyParamsFactory(scale=3.0)
            features = rng.normal(size=16)
            for slot in SlotIndex:
                dist = slot_distribution_service(params, features, slot, temperature=float(rng.uniform(0.1, 5.0)))
                self.assertLessEqual(abs(dist.probs.sum() - 1.0), 1e-12)

    def test_invalid_temperature(self):
        """Test: T <= 0 es un error."""
        for temperature in (0.0, -1.0):
            with self.assertRaises(ValidationError):
                slot_distribution_service(self.uniform, self.features, 0, temperature=temperature)

    def test_non_finite_logits(self):
        """Test: logits que desbordan a infinito son un error."""
        weights = tuple(np.full((size, 16), 1e308) for size in SLOT_VOCAB_SIZES)
        params = PolicyParams(weights=weights, biases=self.uniform.biases)
        with self.assertRaises(ValidationError):
            slot_distribution_service(params, np.full(16, 10.0), 0)

    def test_rejects_non_finite_params(self):
        """Test: PolicyParams no admite entradas no finitas ni formas erróneas."""
        biases = list(self.uniform.biases)
        biases[2] = np.array([np.nan, 0.0])
        with self.assertRaises(ValidationError):
            PolicyParams(weights=self.uniform.weights, biases=tuple(biases))
        with self.assertRaises(ValidationError):
            PolicyParams(weights=self.uniform.weights[:6], biases=self.uniform.biases[:6])

    def test_distribution_must_sum_to_one(self):
        """Test: SlotDistribution valida la normalización."""
        with self.assertRaises(ValidationError):
            SlotDistribution(probs=np.array([0.5, 0.6]))


# ============================================================================
# Tests Unitarios - Muestreo
# ============================================================================


class SampleTrajectoryServiceTestCase(SimpleTestCase):
    """Tests para sample_trajectory_service."""

    def setUp(self):
        self.features = np.random.default_rng(2).normal(size=16)

    def test_near_delta_params(self):
        """Test: un logit +10^6 por slot da la trayectoria argmax."""
        # Arrange
        target = [3, 1, 0, 0, 1, 0, 3]
        biases = {}
        for slot, token in enumerate(target):
            values = [0.0] * SLOT_VOCAB_SIZES[slot]
            values[token] = 1e6
            biases[slot] = values
        params = _with_biases(init_params_service(16), biases)

        # Act
        sample = sample_trajectory_service(params, self.features, np.random.default_rng(0))

        # Assert
        self.assertEqual(list(sample.tokens), target)
        np.testing.assert_allclose(sample.slot_logprobs, np.zeros(NUM_SLOTS), atol=1e-12)

    def test_slot_logprobs_match_distribution(self):
        """Test: exp(slot_logprobs[s]) es la probabilidad del token muestreado."""
        params = PolicyParamsFactory()
        sample = sample_trajectory_service(params, self.features, np.random.default_rng(4))
        for slot, token in enumerate(sample.tokens):
            dist = slot_distribution_service(params, self.features, slot)
            self.assertAlmostEqual(np.exp(sample.slot_logprobs[slot]), dist.probs[token], places=12)

    def test_same_seed_same_sample(self):
        """Test: misma semilla, misma muestra."""
        params = PolicyParamsFactory()
        first = sample_trajectory_service(params, self.features, np.random.default_rng(9))
        second = sample_trajectory_service(params, self.features, np.random.default_rng(9))
        self.assertEqual(first.trajectory, second.trajectory)
        np.testing.assert_array_equal(first.slot_logprobs, second.slot_logprobs)

    def test_empirical_frequencies(self):
        """Test: 10^5 muestras reproducen la distribución de cada slot (cota binomial)."""
        # Arrange
        params = PolicyParamsFactory(scale=0.7)
        n = 100_000

        # Act
        tokens, _ = sample_slot_tokens_batch(params, self.features[None, :], np.random.default_rng(11), group_size=n)

        # Assert
        probs = slot_probs_batch(params, self.features[None, :])
        for slot in SlotIndex:
            p = probs[slot][0]
            counts = np.bincount(tokens[0, :, slot], minlength=p.size)
            sigma = np.sqrt(n * p * (1.0 - p))
            self.assertTrue(np.all(np.abs(counts - n * p) <= 4.0 * sigma + 1.0), msg=f"slot {slot}")


# ============================================================================
# Tests Unitarios - log π, entropía y score esperado
# ============================================================================


class LogProbServiceTestCase(SimpleTestCase):
    """Tests para log_prob_service."""

    def test_uniform_policy(self):
        """Test: política uniforme da log(1/5) en decisión y log(1/2) en checkpoints."""
        trajectory = Trajectory.from_slot_tokens([2, 0, 1, 0, 1, 1, 2])
        log_probs = log_prob_service(init_params_service(16), np.ones(16), trajectory)
        self.assertAlmostEqual(log_probs[0], np.log(0.2), places=12)
        self.assertAlmostEqual(log_probs[6], np.log(0.2), places=12)
        np.testing.assert_allclose(log_probs[1:6], np.log(0.5))

    def test_sum_is_joint_log_probability(self):
        """Test: la suma por slots es el log de la probabilidad conjunta."""
        # Arrange
        params = PolicyParamsFactory()
        features = np.random.default_rng(5).normal(size=16)
        tokens = [4, 1, 1, 0, 0, 1, 3]

        # Act
        log_probs = log_prob_service(params, features, Trajectory.from_slot_tokens(tokens))

        # Assert
        joint = np.prod(
            [slot_distribution_service(params, features, slot).probs[t] for slot, t in enumerate(tokens)]
        )
        self.assertAlmostEqual(log_probs.sum(), np.log(joint), places=10)


class EntropyServiceTestCase(SimpleTestCase):
    """Tests para entropy_service."""

    def setUp(self):
        self.features = np.random.default_rng(6).normal(size=(8, 16))

    def test_uniform_decision_slot(self):
        """Test: un slot uniforme de 5 vías tiene entropía ln 5."""
        entropies = slot_entropies_batch(init_params_service(16), self.features)
        np.testing.assert_allclose(entropies[:, 0], np.log(5.0))
        self.assertAlmostEqual(
            entropy_service(init_params_service(16), self.features), (2 * np.log(5.0) + 5 * np.log(2.0)) / 7
        )

    def test_one_hot_slot(self):
        """Test: un slot determinista tiene entropía 0."""
        params = _with_biases(init_params_service(16), {0: [0.0, 0.0, 1e6, 0.0, 0.0]})
        entropies = slot_entropies_batch(params, self.features)
        np.testing.assert_allclose(entropies[:, 0], 0.0, atol=1e-12)

    def test_mixed_batch_is_mean(self):
        """Test: la entropía del batch es la media de las entropías por instancia."""
        params = PolicyParamsFactory()
        per_instance = [entropy_service(params, row[None, :]) for row in self.features]
        self.assertAlmostEqual(entropy_service(params, self.features), float(np.mean(per_instance)), places=12)

    def test_empty_batch(self):
        """Test: batch vacío es un error."""
        with self.assertRaises(ValidationError):
            entropy_service(init_params_service(16), np.zeros((0, 16)))

    def test_temperature_monotonicity(self):
        """Test: la entropía no decrece con la temperatura."""
        params = PolicyParamsFactory(scale=1.5)
        grid = np.geomspace(0.05, 50.0, 40)
        values = [entropy_service(params, self.features, temperature=t) for t in grid]
        self.assertTrue(np.all(np.diff(values) >= -1e-12))


class WeightedExpectedScoreServiceTestCase(SimpleTestCase):
    """Tests para weighted_expected_score_service."""

    def test_examples(self):
        """Test: uniforme 2.0, one-hot en 3 da 3.0, (0.1, 0.2, 0.4, 0.2, 0.1) da 2.0."""
        self.assertAlmostEqual(weighted_expected_score_service(SlotDistribution(probs=np.full(5, 0.2))), 2.0)
        self.assertEqual(weighted_expected_score_service(np.eye(5)[3]), 3.0)
        self.assertAlmostEqual(weighted_expected_score_service(np.array([0.1, 0.2, 0.4, 0.2, 0.1])), 2.0)

    def test_wrong_vocabulary(self):
        """Test: una distribución de checkpoint (2 vías) es un error."""
        with self.assertRaises(ValidationError):
            weighted_expected_score_service(SlotDistribution(probs=np.array([0.5, 0.5])))


# ============================================================================
# Tests Unitarios - Gradientes
# ============================================================================


class GradLogProbServiceTestCase(SimpleTestCase):
    """Tests para grad_log_prob_service."""

    def test_uniform_closed_form(self):
        """Test: política uniforme, token k: gradiente de logits = onehot(k) − 0.2."""
        features = np.arange(16, dtype=np.float64)
        grad = grad_log_prob_service(init_params_service(16), features, Trajectory.from_slot_tokens([3, 0, 0, 0, 0, 0, 1]))
        expected = np.eye(5)[3] - 0.2
        np.testing.assert_allclose(grad.biases[0], expected)
        np.testing.assert_allclose(grad.weights[0], np.outer(expected, features))

    def test_finite_differences(self):
        """Test: error relativo < 1e-5 frente a diferencias centrales en 100 tripletas aleatorias."""
        rng = np.random.default_rng(7)
        for trial in range(100):
            # Arrange
            params = PolicyParamsFactory(feature_dim=4, seed=trial, scale=1.0)
            features = rng.normal(size=4)
            trajectory = Trajectory.from_slot_tokens(_random_tokens(rng))
            temperature = float(rng.uniform(0.5, 2.0))

            # Act
            analytic = grad_log_prob_service(params, features, trajectory, temperature).flatten()
            numeric = _numeric_gradient(
                lambda theta: log_prob_service(params.with_flat(theta), features, trajectory, temperature).sum(),
                params.flatten(),
            )

            # Assert
            self.assertLess(_relative_error(analytic, numeric), 1e-5, msg=f"trial {trial}")

    def test_batch_additivity(self):
        """Test: el gradiente de un batch es la suma de los gradientes individuales."""
        # Arrange
        params = PolicyParamsFactory()
        rng = np.random.default_rng(8)
        features = rng.normal(size=(2, 16))
        trajectories = [Trajectory.from_slot_tokens(_random_tokens(rng)) for _ in range(2)]

        # Act
        summed = grad_log_prob_service(params, features[0], trajectories[0]) + grad_log_prob_service(
            params, features[1], trajectories[1]
        )
        probs = slot_probs_batch(params, features)
        logit_grads = []
        for slot, p in enumerate(probs):
            onehot = np.stack([np.eye(p.shape[1])[t.slot_tokens()[slot]] for t in trajectories])
            logit_grads.append(onehot - p)
        batched = backprop_logit_grads(params, features, logit_grads)

        # Assert
        np.testing.assert_allclose(batched.flatten(), summed.flatten(), atol=1e-12)

    def test_student_gradient(self):
        """Test: el gradiente del student pasa por la proyección fija."""
        params = init_params_service(16, Capacity.STUDENT, student_dim=4, seed=3, init_scale=0.3)
        features = np.random.default_rng(10).normal(size=16)
        trajectory = Trajectory.from_slot_tokens([1, 1, 0, 1, 1, 1, 1])
        analytic = grad_log_prob_service(params, features, trajectory).flatten()
        numeric = _numeric_gradient(
            lambda theta: log_prob_service(params.with_flat(theta), features, trajectory).sum(), params.flatten()
        )
        self.assertLess(_relative_error(analytic, numeric), 1e-5)


# ============================================================================
# Tests Unitarios - Inicialización y persistencia
# ============================================================================


class InitParamsServiceTestCase(SimpleTestCase):
    """Tests para init_params_service."""

    def test_student_projection(self):
        """Test: el student usa una proyección (D', D) y arranca uniforme."""
        params = init_params_service(16, "student", student_dim=4, seed=1)
        self.assertEqual(params.projection.shape, (4, 16))
        self.assertEqual(params.input_dim, 4)
        self.assertEqual(params.feature_dim, 16)
        dist = slot_distribution_service(params, np.ones(16), SlotIndex.DECISION)
        np.testing.assert_allclose(dist.probs, 0.2)

    def test_student_dim_must_be_smaller(self):
        """Test: D' >= D es un error."""
        with self.assertRaises(ValidationError):
            init_params_service(4, Capacity.STUDENT, student_dim=4)

    def test_flatten_inverse(self):
        """Test: with_flat(flatten()) reconstruye los mismos parámetros."""
        params = PolicyParamsFactory()
        restored = params.with_flat(params.flatten())
        np.testing.assert_array_equal(restored.flatten(), params.flatten())
        self.assertEqual(params.num_parameters, params.flatten().size)


class ParamsFileTestCase(SimpleTestCase):
    """Tests para save_params_service y load_params_service."""

    def test_save_and_load(self):
        """Test: el fichero JSON versionado conserva los parámetros exactos."""
        params = init_params_service(16, Capacity.STUDENT, seed=5, init_scale=0.2)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_params_service(params, Path(tmp) / "policy.json")
            payload = json.loads(path.read_text(encoding="utf-8"))
            restored = load_params_service(path)

        self.assertEqual(payload["format"], "afrl-policy")
        self.assertEqual(payload["version"], 1)
        self.assertEqual(restored.capacity, Capacity.STUDENT)
        np.testing.assert_array_equal(restored.flatten(), params.flatten())
        np.testing.assert_array_equal(restored.projection, params.projection)

    def test_rejects_unknown_version(self):
        """Test: una versión desconocida se rechaza."""
        payload = params_to_payload(init_params_service(16))
        payload["version"] = 2
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "policy.json"
            path.write_text(json.dumps(payload), encoding="utf-8")
            with self.assertRaises(ValidationError):
                load_params_service(path)

    def test_rejects_wrong_slot_shape(self):
        """Test: un slot con filas erróneas se rechaza."""
        payload = params_to_payload(init_params_service(16))
        payload["slots"][1]["shape"] = [5, 16]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "policy.json"
            path.write_text(json.dumps(payload), encoding="utf-8")
            with self.assertRaises(ValidationError):
                load_params_service(path)
