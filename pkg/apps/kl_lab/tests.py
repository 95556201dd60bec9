from __future__ import annotations

from unittest.mock import patch

from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

import numpy as np

from apps.kl_lab.domain import BumpParams, Categorical, Direction, GibbsSpec
from apps.kl_lab.services import (
    bimodal_target,
    bump_distribution,
    entropy,
    fit_divergence_service,
    fit_trace_rows,
    forward_kl_service,
    gibbs_minimizer_holds,
    gibbs_policy_service,
    identity_residuals,
    mode_masses,
    reverse_kl_service,
    run_kl_lab_service,
    verify_rl_identity_service,
    verify_sft_identity_service,
)
from apps.optim.exceptions import NumericAbortError

# ============================================================================
# Tests Unitarios - Divergencias
# ============================================================================


class ForwardKlServiceTestCase(SimpleTestCase):
    """Tests para forward_kl_service."""

    def test_identical_distributions(self):
        """Test: p = q da 0."""
        p = np.array([0.2, 0.3, 0.5])
        self.assertEqual(forward_kl_service(p, p), 0.0)

    def test_one_hot_against_uniform(self):
        """Test: p = (1, 0), q = (0.5, 0.5) da ln 2."""
        self.assertAlmostEqual(forward_kl_service(np.array([1.0, 0.0]), np.array([0.5, 0.5])), np.log(2.0), places=12)

    def test_support_violation_is_infinite(self):
        """Test: p = (0.5, 0.5), q = (1, 0) da +inf."""
        self.assertEqual(forward_kl_service(np.array([0.5, 0.5]), np.array([1.0, 0.0])), float("inf"))

    def test_size_mismatch(self):
        """Test: distribuciones de distinto tamaño son un error."""
        with self.assertRaises(ValidationError):
            forward_kl_service(np.array([1.0]), np.array([0.5, 0.5]))

    def test_accepts_categorical(self):
        """Test: acepta Categorical además de arrays."""
        p = Categorical(probs=np.array([0.25, 0.75]))
        self.assertEqual(forward_kl_service(p, p), 0.0)


class ReverseKlServiceTestCase(SimpleTestCase):
    """Tests para reverse_kl_service."""

    def test_collapse_onto_one_mode_is_finite(self):
        """Test: q = (1, 0), p = (0.5, 0.5) da ln 2 finito."""
        self.assertAlmostEqual(reverse_kl_service(np.array([1.0, 0.0]), np.array([0.5, 0.5])), np.log(2.0), places=12)

    def test_nonnegative_on_random_pairs(self):
        """Test: ambas divergencias son >= 0 en 1.000 pares y 0 solo con argumentos iguales."""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            size = int(rng.integers(2, 12))
            p, q = rng.dirichlet(np.ones(size)), rng.dirichlet(np.ones(size))
            self.assertGreater(reverse_kl_service(q, p), 0.0)
            self.assertGreater(forward_kl_service(p, q), 0.0)
            self.assertLess(abs(reverse_kl_service(q, q)), 1e-10)


class GibbsPolicyServiceTestCase(SimpleTestCase):
    """Tests para gibbs_policy_service."""

    def test_closed_form(self):
        """Test: R = (1, 0), η = 1 da (e/(1+e), 1/(1+e))."""
        probs = gibbs_policy_service(GibbsSpec(rewards=np.array([1.0, 0.0]), temperature=1.0)).probs
        np.testing.assert_allclose(probs, [np.e / (1 + np.e), 1 / (1 + np.e)], atol=1e-12)

    def test_constant_rewards_give_uniform(self):
        """Test: R constante da la uniforme."""
        probs = gibbs_policy_service(GibbsSpec(rewards=np.full(4, 3.0), temperature=0.5)).probs
        np.testing.assert_allclose(probs, np.full(4, 0.25), atol=1e-12)

    def test_low_temperature_concentrates(self):
        """Test: con η = 1e-6 la masa en argmax R supera 1 − 1e-6."""
        probs = gibbs_policy_service(GibbsSpec(rewards=np.array([1.0, 0.0, 0.5]), temperature=1e-6)).probs
        self.assertGreater(probs[0], 1 - 1e-6)

    def test_partition_function(self):
        """Test: Z = Σ exp(R/η)."""
        spec = GibbsSpec(rewards=np.array([1.0, 0.0]), temperature=1.0)
        self.assertAlmostEqual(spec.partition, np.e + 1.0, places=12)

    def test_invalid_temperature(self):
        """Test: η <= 0 es un error."""
        with self.assertRaises(ValidationError):
            GibbsSpec(rewards=np.array([1.0, 0.0]), temperature=0.0)

    def test_unique_minimizer(self):
        """Test: toda perturbación de π* tiene KL inversa positiva."""
        self.assertTrue(gibbs_minimizer_holds())


# ============================================================================
# Tests Unitarios - Identidades
# ============================================================================


class SftIdentityTestCase(SimpleTestCase):
    """Tests para verify_sft_identity_service."""

    def test_random_pairs(self):
        """Test: residuo máximo < 1e-10 sobre 1.000 pares aleatorios."""
        sft_max, rl_max = identity_residuals(1000)
        self.assertLess(sft_max, 1e-10)
        self.assertLess(rl_max, 1e-10)

    def test_equal_distributions(self):
        """Test: p = q da residuo 0 y KL 0."""
        p = np.array([0.1, 0.6, 0.3])
        self.assertAlmostEqual(verify_sft_identity_service(p, p), 0.0, places=12)

    def test_one_hot_target(self):
        """Test: p one-hot da D_KL = −ln q en el soporte."""
        p, q = np.array([0.0, 1.0, 0.0]), np.array([0.2, 0.5, 0.3])
        self.assertAlmostEqual(forward_kl_service(p, q), -np.log(0.5), places=12)
        self.assertAlmostEqual(entropy(p), 0.0, places=12)
        self.assertLess(abs(verify_sft_identity_service(p, q)), 1e-12)

    def test_requires_full_support(self):
        """Test: q sin soporte completo es un error."""
        with self.assertRaises(ValidationError):
            verify_sft_identity_service(np.array([0.5, 0.5]), np.array([1.0, 0.0]))


class RlIdentityTestCase(SimpleTestCase):
    """Tests para verify_rl_identity_service."""

    def test_optimum_gives_zero(self):
        """Test: q = π* deja ambos lados en 0."""
        spec = GibbsSpec(rewards=np.array([0.3, -1.2, 2.0, 0.0]), temperature=0.7)
        optimum = gibbs_policy_service(spec)
        self.assertLess(reverse_kl_service(optimum, optimum), 1e-12)
        self.assertLess(abs(verify_rl_identity_service(optimum, spec)), 1e-10)

    def test_constant_rewards(self):
        """Test: con R constante, D_KL(q‖uniforme) = ln n − H(q)."""
        q = np.array([0.7, 0.2, 0.1])
        spec = GibbsSpec(rewards=np.zeros(3), temperature=1.0)
        uniform = gibbs_policy_service(spec)
        self.assertAlmostEqual(reverse_kl_service(q, uniform), np.log(3) - entropy(q), places=12)
        self.assertLess(abs(verify_rl_identity_service(q, spec)), 1e-10)


# ============================================================================
# Tests de Integración - Ajustes de divergencia
# ============================================================================


class FitDivergenceServiceTestCase(SimpleTestCase):
    """Tests para fit_divergence_service sobre el objetivo bimodal."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.target = bimodal_target()

    def test_target_mode_regions(self):
        """Test: el objetivo pone ~50% en cada región de modo."""
        masses = mode_masses(self.target)
        np.testing.assert_allclose(masses, [0.5, 0.5], atol=1e-3)

    def test_forward_covers_both_modes(self):
        """Test: la KL directa reparte >= 20% en cada región para las 10 semillas."""
        for seed in range(10):
            fit = fit_divergence_service(self.target, Direction.FORWARD, seed=seed)
            self.assertGreaterEqual(fit.minor_mode_mass, 0.2, msg=f"seed {seed}")
            self.assertAlmostEqual(fit.params.mu, 24.5, delta=1.0)

    def test_reverse_seeks_one_mode(self):
        """Test: la KL inversa deja < 5% en el modo menor para las 10 semillas."""
        for seed in range(10):
            fit = fit_divergence_service(self.target, "reverse", seed=seed)
            self.assertLess(fit.minor_mode_mass, 0.05, msg=f"seed {seed}")
            self.assertGreater(max(fit.mode_masses), 0.9)

    def test_unimodal_target_agrees(self):
        """Test: con un objetivo unimodal ambas direcciones llegan a la misma posición."""
        target = bump_distribution(25.0, 3.0)
        forward = fit_divergence_service(target, Direction.FORWARD, seed=1)
        reverse = fit_divergence_service(target, Direction.REVERSE, seed=1)
        self.assertAlmostEqual(forward.params.mu, reverse.params.mu, delta=0.3)
        self.assertAlmostEqual(forward.params.mu, 25.0, delta=0.3)

    def test_trace_is_recorded(self):
        """Test: la traza tiene un punto cada 100 pasos y termina en el último."""
        fit = fit_divergence_service(self.target, Direction.FORWARD, steps=250, seed=0)
        self.assertEqual([p.step for p in fit.trace], [0, 100, 200, 250])
        self.assertEqual(fit.trace[-1].loss, fit.loss)
        rows = fit_trace_rows([fit])
        self.assertEqual(set(rows[0]), {"direction", "seed", "step", "loss", "mu", "sigma"})

    def test_explicit_initial_point(self):
        """Test: cero pasos devuelve el punto inicial indicado."""
        init = BumpParams(mu=12.0, rho=0.0)
        fit = fit_divergence_service(self.target, Direction.REVERSE, steps=0, init=init)
        self.assertEqual(fit.params, init)

    def test_target_without_full_support(self):
        """Test: un objetivo con ceros es un error."""
        probs = np.zeros(50)
        probs[10] = 1.0
        with self.assertRaises(ValidationError):
            fit_divergence_service(Categorical(probs=probs), Direction.FORWARD)

    @patch("apps.kl_lab.services._loss_and_grad", return_value=(float("nan"), np.zeros(2)))
    def test_non_finite_loss_aborts(self, _mock):
        """Test: una divergencia no finita aborta con NumericAbortError."""
        with self.assertLogs("apps.kl_lab.services", level="ERROR"), self.assertRaises(NumericAbortError):
            fit_divergence_service(self.target, Direction.FORWARD)


class RunKlLabServiceTestCase(SimpleTestCase):
    """Tests para run_kl_lab_service."""

    def test_reduced_report(self):
        """Test: el informe reducido cumple todas las propiedades."""
        report = run_kl_lab_service(seeds=range(2), n_pairs=100)
        self.assertTrue(report.gibbs_minimizer_holds)
        self.assertTrue(report.mode_covering_holds)
        self.assertTrue(report.mode_seeking_holds)
        self.assertEqual(len(report.fits), 4)
        data = report.as_dict()
        self.assertEqual(data["fits"][0]["direction"], "forward")
        self.assertLess(data["sft_residual_max"], 1e-10)
