from __future__ import annotations

import json
import math
import tempfile
from dataclasses import replace
from io import StringIO
from pathlib import Path
from unittest.mock import patch

from django.core.management import call_command, load_command_class
from django.core.management.base import CommandError
from django.db import IntegrityError
from django.test import SimpleTestCase, TestCase, tag
from rest_framework.exceptions import ValidationError

import numpy as np

from apps.curriculum import services as curriculum_services
from apps.curriculum.domain import DEFAULT_STAGES
from apps.experiments.domain import (
    LOG_COLUMNS,
    DistillConfig,
    LogRow,
    Mode,
    RunLog,
    RunStatus,
    Sampling,
)
from apps.experiments.factories import ExperimentRunFactory, MetricsRowFactory
from apps.experiments.models import ExperimentRun
from apps.experiments.repositories import (
    finish_run_repository,
    get_run_by_id_repository,
    list_runs_repository,
)
from apps.experiments.services import (
    ablation_labels,
    build_distill_config_service,
    build_experiment_config_service,
    build_manifest,
    build_student,
    config_hash,
    efficiency_probe,
    export_run_log_service,
    load_experiment_config_service,
    persist_run_log_service,
    prepare_datasets_service,
    read_log_csv_service,
    read_run_log_jsonl_service,
    run_ablation_service,
    run_distill_service,
    run_training_service,
)
from apps.metrics.domain import MetricsRecord
from apps.metrics.factories import PredictionRecordFactory
from apps.metrics.services import (
    five_acc_service,
    predict_records_service,
    write_predictions_jsonl_service,
)
from apps.optim.exceptions import NumericAbortError
from apps.policy.domain import Capacity
from apps.policy.factories import PolicyParamsFactory
from apps.policy.services import init_params_service, save_params_service

CONFIG_DIR = Path(__file__).resolve().parents[2] / "config" / "experiments"


def small_config_data(**overrides):
    """Config de escritorio reducido: 3 etapas de 5 pasos sobre 160 instancias."""
    data = {
        "world": {"seed": 5},
        "optim": {"learning_rate": 0.05, "group_size": 4},
        "steps_per_stage": 5,
        "seed": 5,
        "train_size": 128,
        "batch_size": 16,
        "sft_batch_size": 16,
        "eval_interval": 5,
        "sft_warmup_steps": 20,
        "n_difficulty_samples": 4,
    }
    data.update(overrides)
    return data


def small_config(**overrides):
    return build_experiment_config_service(small_config_data(**overrides))


def rows_matrix(rows):
    return np.array([[row.as_row()[column] for column in LOG_COLUMNS] for row in rows], dtype=np.float64)


def metrics_record(step, **overrides):
    values = {
        "step": step,
        "reward_mean": 0.5,
        "reward_std": 0.5,
        "entropy": 1.0,
        "five_acc": 0.6,
        "two_acc": 0.8,
        "macro_f1": 0.5,
        "weighted_f1": 0.55,
        "pair_acc": 0.7,
        "ndcg3": 0.75,
        "longtail_checkpoint_acc": float("nan"),
    }
    values.update(overrides)
    return MetricsRecord(**values)


def hand_log(cfg, reward_means):
    """RunLog con una fila cada 100 pasos y los reward_mean dados."""
    log = RunLog(manifest=build_manifest(cfg))
    for index, reward in enumerate(reward_means):
        metrics = metrics_record(index * 100, reward_mean=reward)
        log.append_row(LogRow(stage=1, alpha_t=0.85, gamma_t=0.15, metrics=metrics))
    return log


# ============================================================================
# Tests Unitarios - Configuración
# ============================================================================


class BuildExperimentConfigServiceTestCase(SimpleTestCase):
    """Tests para build_experiment_config_service."""

    def test_defaults(self):
        """Test: sin datos se usa el calendario por defecto con 2.000 pasos por etapa."""
        # Act
        cfg = build_experiment_config_service()

        # Assert
        self.assertEqual(cfg.mode, Mode.MODE_BALANCED)
        self.assertEqual(cfg.sampling, Sampling.CURRICULUM)
        self.assertEqual([s.steps for s in cfg.stages], [2000, 2000, 2000])
        self.assertEqual([s.coeffs for s in cfg.stages], [s.coeffs for s in DEFAULT_STAGES])
        self.assertEqual(cfg.total_steps, 6000)
        self.assertEqual((cfg.train_size, cfg.batch_size, cfg.optim.group_size), (10_000, 64, 8))

    def test_invalid_mode(self):
        """Test: un modo desconocido es un error de configuración."""
        with self.assertRaises(ValidationError) as ctx:
            build_experiment_config_service({"mode": "ppo"})
        self.assertIn("mode", ctx.exception.detail)

    def test_nested_errors_are_keyed(self):
        """Test: el error de un sub-config queda bajo su clave."""
        with self.assertRaises(ValidationError) as ctx:
            build_experiment_config_service({"optim": {"clip_ratio": 1.5}})
        self.assertIn("optim", ctx.exception.detail)

    def test_invalid_holdout_fraction(self):
        """Test: holdout_fraction fuera de (0, 1)."""
        with self.assertRaises(ValidationError):
            build_experiment_config_service({"holdout_fraction": 1.0})

    def test_explicit_stage_steps_are_kept(self):
        """Test: steps_per_stage solo rellena las etapas sin pasos."""
        # Arrange
        stages = [
            {"stage": 1, "mix": [1, 1, 1], "coeffs": {"alpha_t": 0.5, "gamma_t": 0.5}, "steps": 7},
            {"stage": 2, "mix": [1, 1, 1], "coeffs": {"alpha_t": 0.6, "gamma_t": 0.4}},
        ]

        # Act
        cfg = build_experiment_config_service({"stages": stages, "steps_per_stage": 3})

        # Assert
        self.assertEqual([s.steps for s in cfg.stages], [7, 3])

    def test_coeffs_per_mode(self):
        """Test: solo mode_balanced usa los coeficientes de la etapa."""
        stage = DEFAULT_STAGES[0]
        expected = {
            Mode.MODE_BALANCED: (0.85, 0.15),
            Mode.PURE_GRPO: (1.0, 0.0),
            Mode.GRPO_UNIFORM: (1.0, 0.0),
            Mode.SFT_ONLY: (0.0, 1.0),
        }
        for mode, coeffs in expected.items():
            cfg = build_experiment_config_service({"mode": mode.value})
            self.assertEqual((cfg.coeffs_for(stage).alpha_t, cfg.coeffs_for(stage).gamma_t), coeffs)

    def test_config_hash(self):
        """Test: el hash es estable y cambia con la semilla."""
        self.assertEqual(config_hash(small_config()), config_hash(small_config()))
        self.assertNotEqual(config_hash(small_config()), config_hash(small_config(seed=6)))
        self.assertEqual(len(config_hash(small_config())), 64)


class ReferenceConfigsTestCase(SimpleTestCase):
    """Tests para los configs de referencia."""

    def test_full_scale_values(self):
        """Test: el config a escala completa conserva sus hiperparámetros."""
        # Act
        cfg = load_experiment_config_service(CONFIG_DIR / "full_scale.json")

        # Assert
        self.assertEqual(cfg.optim.learning_rate, 1e-6)
        self.assertEqual(cfg.batch_size, 256)
        self.assertEqual(cfg.optim.group_size, 8)
        self.assertEqual(cfg.optim.kl_coeff, 0.001)
        self.assertEqual(cfg.optim.clip_ratio, 0.2)
        self.assertEqual([s.steps for s in cfg.stages], [176, 238, 238])
        self.assertEqual([s.coeffs for s in cfg.stages], [s.coeffs for s in DEFAULT_STAGES])
        self.assertAlmostEqual(cfg.stages[2].ratios[2], 40 / 61, places=12)

    def test_desk_default(self):
        """Test: el config de escritorio usa el calendario por defecto."""
        cfg = load_experiment_config_service(CONFIG_DIR / "desk_default.json")
        self.assertEqual(cfg.total_steps, 6000)
        self.assertEqual(cfg.sft_warmup_steps, 500)

    def test_overrides(self):
        """Test: los overrides de primer nivel sustituyen al fichero."""
        cfg = load_experiment_config_service(CONFIG_DIR / "desk_default.json", {"mode": "pure_grpo", "seed": 3})
        self.assertEqual((cfg.mode, cfg.seed), (Mode.PURE_GRPO, 3))

    def test_unreadable_file(self):
        """Test: un fichero inexistente es un error de configuración."""
        with self.assertRaises(ValidationError):
            load_experiment_config_service(CONFIG_DIR / "missing.json")


class RunLogTestCase(SimpleTestCase):
    """Tests para RunLog."""

    def test_rows_must_increase(self):
        """Test: una fila con paso repetido se rechaza."""
        # Arrange
        log = hand_log(small_config(), [0.1, 0.2])
        row = LogRow(stage=1, alpha_t=1.0, gamma_t=0.0, metrics=metrics_record(100))

        # Act & Assert
        with self.assertRaises(ValidationError):
            log.append_row(row)

    def test_final_requires_rows(self):
        """Test: un registro vacío no tiene fila final."""
        with self.assertRaises(ValidationError):
            _ = RunLog(manifest=build_manifest(small_config())).final


# ============================================================================
# Tests de Integración - Entrenamiento
# ============================================================================


class RunTrainingServiceTestCase(SimpleTestCase):
    """Tests para run_training_service a escala reducida."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.cfg = small_config()
        cls.datasets = prepare_datasets_service(cls.cfg)
        cls.outcome = run_training_service(cls.cfg, cls.datasets)

    def test_held_out_split(self):
        """Test: train tiene train_size instancias aproximadas y no comparte queries con holdout."""
        train, holdout = self.datasets
        self.assertEqual(len(train) + len(holdout), math.ceil(128 / 0.8))
        self.assertFalse(set(train.query_ids) & set(holdout.query_ids))

    def test_ledger_matches_stage_coefficients(self):
        """Test: cada paso registra exactamente los (α_t, γ_t) de su etapa."""
        # Arrange
        ledger = self.outcome.log.ledger
        by_stage = {s.stage: s.coeffs for s in self.cfg.stages}

        # Assert
        self.assertEqual([e.step for e in ledger], list(range(1, 16)))
        for entry in ledger:
            self.assertEqual(entry.alpha_t, by_stage[entry.stage].alpha_t)
            self.assertEqual(entry.gamma_t, by_stage[entry.stage].gamma_t)
            self.assertIsNotNone(entry.grpo_loss)
            self.assertIsNotNone(entry.sft_loss)

    def test_rows_cover_start_intervals_and_end(self):
        """Test: filas en el paso 0, cada eval_interval y el último paso."""
        self.assertEqual([row.step for row in self.outcome.log.rows], [0, 5, 10, 15])
        self.assertEqual(self.outcome.log.rows[0].stage, 0)

    def test_manifest(self):
        """Test: el manifiesto identifica el config y no tiene entropía en modo determinista."""
        manifest = self.outcome.log.manifest
        self.assertEqual(manifest.config_hash, config_hash(self.cfg))
        self.assertEqual(manifest.rollout_entropy, 0)
        self.assertEqual(manifest.config["seed"], 5)

    def test_determinism(self):
        """Test: mismo config y semilla dan artefactos idénticos byte a byte."""
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            # Act
            run_training_service(self.cfg, self.datasets, Path(first))
            run_training_service(self.cfg, self.datasets, Path(second))

            # Assert
            for name in ("log.csv", "log.jsonl", "ledger.csv", "manifest.json", "params.json"):
                self.assertEqual((Path(first) / name).read_bytes(), (Path(second) / name).read_bytes(), name)

    def test_outputs_and_checkpoints(self):
        """Test: se escriben los artefactos y un checkpoint por etapa."""
        with tempfile.TemporaryDirectory() as tmp:
            outcome = run_training_service(self.cfg, self.datasets, Path(tmp))
            self.assertEqual(
                [Path(p).name for p in outcome.checkpoints],
                ["stage_1.json", "stage_2.json", "stage_3.json", "params.json"],
            )
            for name in ("manifest.json", "log.csv", "log.jsonl", "ledger.csv"):
                self.assertTrue((Path(tmp) / name).exists())

    def test_pure_grpo_skips_sft_term(self):
        """Test: pure_grpo no evalúa el término SFT."""
        outcome = run_training_service(replace(self.cfg, mode=Mode.PURE_GRPO), self.datasets)
        self.assertTrue(all(e.sft_loss is None and e.gamma_t == 0.0 for e in outcome.log.ledger))
        self.assertTrue(all(e.grpo_loss is not None for e in outcome.log.ledger))

    def test_sft_only_skips_rollouts(self):
        """Test: sft_only no muestrea rollouts ni clasifica por dificultad."""
        with patch("apps.experiments.services.bin_dataset_service") as binning:
            outcome = run_training_service(replace(self.cfg, mode=Mode.SFT_ONLY), self.datasets)
        binning.assert_not_called()
        self.assertTrue(all(e.grpo_loss is None and e.reward_mean is None for e in outcome.log.ledger))

    def test_static_binning_bins_once(self):
        """Test: static_binning clasifica una sola vez."""
        with patch(
            "apps.experiments.services.bin_dataset_service",
            wraps=curriculum_services.bin_dataset_service,
        ) as binning:
            run_training_service(replace(self.cfg, static_binning=True), self.datasets)
        self.assertEqual(binning.call_count, 1)

    def test_random_sampling(self):
        """Test: el muestreo aleatorio completa el mismo número de pasos."""
        outcome = run_training_service(replace(self.cfg, sampling=Sampling.RANDOM), self.datasets)
        self.assertEqual(len(outcome.log.ledger), 15)

    def test_non_deterministic_records_entropy(self):
        """Test: sin modo determinista el manifiesto guarda la entropía de rollout."""
        outcome = run_training_service(replace(self.cfg, deterministic=False, sft_warmup_steps=0), self.datasets)
        self.assertGreater(outcome.log.manifest.rollout_entropy, 0)

    @patch("apps.experiments.services.hybrid_step_service", side_effect=NumericAbortError("Pérdida no finita"))
    def test_numeric_abort_keeps_last_good(self, _mock):
        """Test: un aborto numérico guarda el último checkpoint válido y el log parcial."""
        cfg = replace(self.cfg, sft_warmup_steps=0)
        with tempfile.TemporaryDirectory() as tmp:
            with (
                self.assertLogs("apps.experiments.services", level="ERROR"),
                self.assertRaises(NumericAbortError) as ctx,
            ):
                run_training_service(cfg, self.datasets, Path(tmp))

            # Assert
            self.assertTrue(ctx.exception.checkpoint_path.endswith("last_good.json"))
            self.assertTrue(Path(ctx.exception.checkpoint_path).exists())
            self.assertEqual([row.step for row in ctx.exception.partial.rows], [0])
            self.assertTrue((Path(tmp) / "log.csv").exists())


# ============================================================================
# Tests Unitarios - Export
# ============================================================================


class ExportRunLogServiceTestCase(SimpleTestCase):
    """Tests para export_run_log_service y los lectores."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.cfg = small_config()
        cls.log = hand_log(cls.cfg, [0.1, 0.25, 1 / 3])
        cls.log.append_row(
            LogRow(stage=3, alpha_t=0.95, gamma_t=0.05, metrics=metrics_record(300, pair_acc=float("nan")))
        )

    def test_csv_header(self):
        """Test: la cabecera CSV es el esquema documentado."""
        with tempfile.TemporaryDirectory() as tmp:
            path = export_run_log_service(self.log, Path(tmp) / "log.csv", "csv")
            header = path.read_text(encoding="utf-8").splitlines()[0]
        self.assertEqual(
            header,
            "step,stage,alpha_t,gamma_t,reward_mean,reward_std,entropy,five_acc,two_acc,"
            "macro_f1,weighted_f1,pair_acc,ndcg3,longtail_checkpoint_acc",
        )

    def test_csv_round_trip(self):
        """Test: export CSV y re-import dan la misma secuencia de filas (NaN incluidos)."""
        with tempfile.TemporaryDirectory() as tmp:
            path = export_run_log_service(self.log, Path(tmp) / "log.csv", "csv")
            rows = read_log_csv_service(path)
        np.testing.assert_array_equal(rows_matrix(rows), rows_matrix(self.log.rows))

    def test_jsonl_structure_and_round_trip(self):
        """Test: JSONL con el manifiesto más una línea por fila, sin pérdidas."""
        with tempfile.TemporaryDirectory() as tmp:
            path = export_run_log_service(self.log, Path(tmp) / "log.jsonl", "jsonl")
            lines = path.read_text(encoding="utf-8").splitlines()
            restored = read_run_log_jsonl_service(path)

        self.assertEqual(len(lines), len(self.log.rows) + 1)
        self.assertIsNone(json.loads(lines[-1])["pair_acc"])
        self.assertEqual(restored.manifest.as_dict(), json.loads(json.dumps(self.log.manifest.as_dict())))
        np.testing.assert_array_equal(rows_matrix(restored.rows), rows_matrix(self.log.rows))

    def test_unknown_format(self):
        """Test: solo csv y jsonl."""
        with tempfile.TemporaryDirectory() as tmp, self.assertRaises(ValidationError):
            export_run_log_service(self.log, Path(tmp) / "log.parquet", "parquet")

    def test_csv_with_wrong_header(self):
        """Test: un CSV con otras columnas se rechaza."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "log.csv"
            path.write_text("step,reward\n0,0.5\n", encoding="utf-8")
            with self.assertRaises(ValidationError):
                read_log_csv_service(path)


# ============================================================================
# Tests de Integración - Ablación
# ============================================================================


class RunAblationServiceTestCase(SimpleTestCase):
    """Tests para run_ablation_service."""

    def test_identical_configs_give_identical_logs(self):
        """Test: dos configs idénticos producen registros idénticos."""
        # Arrange
        cfg = small_config(steps_per_stage=2, eval_interval=2)

        # Act
        with tempfile.TemporaryDirectory() as tmp:
            result = run_ablation_service([cfg, cfg], output_dir=Path(tmp))
            wide_header = (Path(tmp) / "ablation.csv").read_text(encoding="utf-8").splitlines()[0]
            self.assertTrue((Path(tmp) / "summary.csv").exists())

        # Assert
        first, second = result.logs.values()
        self.assertEqual(list(result.logs), ["mode_balanced_curriculum", "mode_balanced_curriculum_1"])
        np.testing.assert_array_equal(rows_matrix(first.rows), rows_matrix(second.rows))
        self.assertIn("mode_balanced_curriculum:five_acc", wide_header)
        self.assertIn("mode_balanced_curriculum_1:five_acc", wide_header)

    def test_mismatched_worlds_rejected(self):
        """Test: configs con mundos distintos se rechazan."""
        cfg = small_config()
        other = replace(cfg, world=replace(cfg.world, seed=99), mode=Mode.PURE_GRPO)
        with self.assertRaises(ValidationError) as ctx:
            run_ablation_service([cfg, other])
        self.assertIn("world", ctx.exception.detail)

    def test_other_differences_rejected(self):
        """Test: solo mode y sampling pueden variar."""
        cfg = small_config()
        with self.assertRaises(ValidationError):
            run_ablation_service([cfg, replace(cfg, batch_size=8)])

    def test_requires_two_configs(self):
        """Test: una ablación necesita al menos dos miembros."""
        with self.assertRaises(ValidationError):
            run_ablation_service([small_config()])

    def test_labels(self):
        """Test: etiquetas modo_muestreo únicas."""
        cfg = small_config()
        labels = ablation_labels([cfg, replace(cfg, mode=Mode.PURE_GRPO), replace(cfg, sampling=Sampling.RANDOM)])
        self.assertEqual(labels, ["mode_balanced_curriculum", "pure_grpo_curriculum", "mode_balanced_random"])


class EfficiencyProbeTestCase(SimpleTestCase):
    """Tests para efficiency_probe."""

    def test_first_crossing_and_ratio(self):
        """Test: primer paso con reward_mean >= 95% del mejor de pure_grpo."""
        # Arrange
        cfg = small_config()
        logs = {
            "pure": hand_log(cfg, [0.0, 0.5, 0.8, 1.0, 1.0]),
            "balanced": hand_log(cfg, [0.0, 0.96, 0.97, 0.98, 0.99]),
        }
        modes = {"pure": Mode.PURE_GRPO, "balanced": Mode.MODE_BALANCED}

        # Act
        probe = efficiency_probe(logs, modes)

        # Assert
        self.assertEqual(probe["pure"], (300, 1.0))
        self.assertEqual(probe["balanced"][0], 100)
        self.assertAlmostEqual(probe["balanced"][1], 1 / 3)

    def test_without_reference(self):
        """Test: sin miembro pure_grpo la sonda no está definida."""
        cfg = small_config()
        probe = efficiency_probe({"a": hand_log(cfg, [0.5])}, {"a": Mode.SFT_ONLY})
        self.assertEqual(probe, {"a": (None, None)})


# ============================================================================
# Tests de Integración - Destilación
# ============================================================================


class RunDistillServiceTestCase(SimpleTestCase):
    """Tests para run_distill_service."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.train, cls.holdout = prepare_datasets_service(small_config(train_size=1600))
        cls.teacher = PolicyParamsFactory(feature_dim=16, seed=3, scale=0.5)

    def test_zero_steps_is_random_init(self):
        """Test: sin pasos el student queda en su inicialización aleatoria."""
        # Arrange
        cfg = DistillConfig(steps=0, seed=2)

        # Act
        student, report = run_distill_service(self.teacher, self.train, self.holdout, cfg)

        # Assert
        initial = build_student(self.teacher, cfg)
        np.testing.assert_array_equal(student.flatten(), initial.flatten())
        self.assertEqual(report.student_five_acc, five_acc_service(predict_records_service(initial, self.holdout)))
        self.assertTrue(np.isfinite(report.final_loss))

    def test_student_capacity(self):
        """Test: D' < D da un student proyectado; None da el control de igual capacidad."""
        reduced = build_student(self.teacher, DistillConfig(student_dim=4))
        matched = build_student(self.teacher, DistillConfig(student_dim=None))
        self.assertEqual((reduced.capacity, reduced.input_dim), (Capacity.STUDENT, 4))
        self.assertEqual(matched.input_dim, 16)
        np.testing.assert_array_equal(matched.projection, np.eye(16))

    def test_capacity_matched_gap(self):
        """Test: destilar en un student de igual capacidad deja un gap < 1 punto."""
        # Arrange
        cfg = DistillConfig(steps=1500, learning_rate=0.02, student_dim=None, seed=1)

        # Act
        _, report = run_distill_service(self.teacher, self.train, self.holdout, cfg)

        # Assert
        self.assertLess(abs(report.gap_points), 1.0)

    def test_loss_decreases(self):
        """Test: la entropía cruzada baja respecto a la inicialización."""
        _, initial = run_distill_service(self.teacher, self.train, self.holdout, DistillConfig(steps=0))
        _, trained = run_distill_service(
            self.teacher, self.train, self.holdout, DistillConfig(steps=100, batch_size=64)
        )
        self.assertLess(trained.final_loss, initial.final_loss)

    def test_config_validation(self):
        """Test: learning_rate debe ser positiva."""
        with self.assertRaises(ValidationError):
            build_distill_config_service({"learning_rate": 0.0})
        self.assertIsNone(build_distill_config_service({"student_dim": None}).student_dim)


# ============================================================================
# Tests de Dinámica (escala de escritorio, lentos)
# ============================================================================


@tag("slow")
class TrainingDynamicsTestCase(SimpleTestCase):
    """
    Separación cualitativa entre modos a escala reducida.

    Cada semilla ejecuta mode_balanced y pure_grpo con muestreo aleatorio desde el
    mismo checkpoint SFT, más mode_balanced con currículo. Las comparaciones entre
    modos se deciden por mayoría de 3 semillas.
    """

    SEEDS = (0, 1, 2)

    @staticmethod
    def dynamics_config(seed, **overrides):
        data = {
            "world": {"seed": seed},
            "optim": {"learning_rate": 0.05},
            "steps_per_stage": 200,
            "seed": seed,
            "train_size": 2000,
            "holdout_fraction": 0.5,
            "eval_interval": 100,
            "sft_warmup_steps": 300,
        }
        data.update(overrides)
        return build_experiment_config_service(data)

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.logs = {}
        for seed in cls.SEEDS:
            cfg = cls.dynamics_config(seed)
            datasets = prepare_datasets_service(cfg)
            for mode, sampling in (
                (Mode.MODE_BALANCED, Sampling.RANDOM),
                (Mode.PURE_GRPO, Sampling.RANDOM),
                (Mode.MODE_BALANCED, Sampling.CURRICULUM),
            ):
                run_cfg = replace(cfg, mode=mode, sampling=sampling)
                cls.logs[seed, mode, sampling] = run_training_service(run_cfg, datasets).log

    def final_metrics(self, seed, mode, sampling=Sampling.RANDOM):
        return self.logs[seed, mode, sampling].final.metrics

    def count_seeds(self, predicate):
        return sum(bool(predicate(seed)) for seed in self.SEEDS)

    def test_sft_only_realizes_the_task(self):
        """Test: sft_only alcanza 5-ACC > 0.9 en el holdout."""
        outcome = run_training_service(self.dynamics_config(0, mode="sft_only", sft_warmup_steps=0))
        self.assertGreater(outcome.log.final.metrics.five_acc, 0.9)

    def test_pure_grpo_collapses_entropy(self):
        """Test: pure_grpo desde el checkpoint SFT reduce la entropía."""
        log = self.logs[0, Mode.PURE_GRPO, Sampling.RANDOM]
        self.assertLess(log.final.metrics.entropy, log.rows[0].metrics.entropy)

    def test_mode_balanced_keeps_more_entropy(self):
        """Test: mode_balanced termina con más entropía que pure_grpo."""
        wins = self.count_seeds(
            lambda seed: self.final_metrics(seed, Mode.MODE_BALANCED).entropy
            > self.final_metrics(seed, Mode.PURE_GRPO).entropy
        )
        self.assertGreaterEqual(wins, 2)

    def test_pure_grpo_forgets_longtail_checkpoints(self):
        """Test: pure_grpo termina con menos acierto de checkpoints long-tail que el checkpoint SFT."""
        drops = self.count_seeds(
            lambda seed: self.logs[seed, Mode.PURE_GRPO, Sampling.RANDOM].final.metrics.longtail_checkpoint_acc
            < self.logs[seed, Mode.PURE_GRPO, Sampling.RANDOM].rows[0].metrics.longtail_checkpoint_acc
        )
        self.assertGreaterEqual(drops, 2)

    def test_mode_balanced_keeps_longtail_checkpoints(self):
        """Test: mode_balanced conserva al menos el acierto long-tail de pure_grpo."""
        wins = self.count_seeds(
            lambda seed: self.final_metrics(seed, Mode.MODE_BALANCED).longtail_checkpoint_acc
            >= self.final_metrics(seed, Mode.PURE_GRPO).longtail_checkpoint_acc
        )
        self.assertGreaterEqual(wins, 2)

    def test_mode_balanced_ranks_at_least_as_well(self):
        """Test: Pair-ACC de mode_balanced >= el de pure_grpo."""
        wins = self.count_seeds(
            lambda seed: self.final_metrics(seed, Mode.MODE_BALANCED).pair_acc
            >= self.final_metrics(seed, Mode.PURE_GRPO).pair_acc
        )
        self.assertGreaterEqual(wins, 2)

    def test_curriculum_not_worse_than_random(self):
        """Test: con el mismo presupuesto, el currículo iguala o supera el 5-ACC del muestreo aleatorio."""
        wins = self.count_seeds(
            lambda seed: self.final_metrics(seed, Mode.MODE_BALANCED, Sampling.CURRICULUM).five_acc
            >= self.final_metrics(seed, Mode.MODE_BALANCED).five_acc
        )
        self.assertGreaterEqual(wins, 2)

    def test_efficiency_on_training_runs(self):
        """Test: la eficiencia sobre dos ejecuciones reales usa pure_grpo como referencia."""
        # Arrange
        pure = self.logs[0, Mode.PURE_GRPO, Sampling.RANDOM]
        balanced = self.logs[0, Mode.MODE_BALANCED, Sampling.RANDOM]

        # Act
        crossings = efficiency_probe(
            {"pure": pure, "balanced": balanced},
            {"pure": Mode.PURE_GRPO, "balanced": Mode.MODE_BALANCED},
        )

        # Assert
        reference_step, reference_ratio = crossings["pure"]
        self.assertIn(reference_step, [row.step for row in pure.rows])
        self.assertGreater(reference_step, 0)
        self.assertEqual(reference_ratio, 1.0)
        step, ratio = crossings["balanced"]
        if step is None:
            self.assertIsNone(ratio)
        else:
            self.assertIn(step, [row.step for row in balanced.rows])
            self.assertAlmostEqual(ratio, step / reference_step)

    def test_reduced_student_beats_random_init(self):
        """Test: el student reducido supera su inicialización en >= 20 puntos y pierde más que el control."""
        # Arrange
        cfg = self.dynamics_config(0, mode="sft_only", sft_warmup_steps=0)
        train, holdout = prepare_datasets_service(cfg)
        teacher = run_training_service(cfg, (train, holdout)).params

        # Act
        _, initial = run_distill_service(teacher, train, holdout, DistillConfig(steps=0))
        _, reduced = run_distill_service(teacher, train, holdout, DistillConfig(steps=1000, student_dim=4))
        _, matched = run_distill_service(teacher, train, holdout, DistillConfig(steps=1000, student_dim=None))

        # Assert
        self.assertGreaterEqual(reduced.student_five_acc - initial.student_five_acc, 0.2)
        self.assertGreater(reduced.gap_points, matched.gap_points)


# ============================================================================
# Tests de Integración - Persistencia
# ============================================================================


class PersistRunLogServiceTestCase(TestCase):
    """Tests para persist_run_log_service y los repositorios."""

    def test_persists_rows_with_nulls(self):
        """Test: se guardan la ejecución y sus filas; NaN pasa a NULL."""
        # Arrange
        cfg = small_config()
        log = hand_log(cfg, [0.1, 0.2, 0.3])

        # Act
        run = persist_run_log_service("baseline", log, RunStatus.COMPLETED, "runs/baseline")

        # Assert
        self.assertEqual(run.status, "completed")
        self.assertEqual(run.config_hash, config_hash(cfg))
        self.assertEqual(run.metrics_rows.count(), 3)
        self.assertIsNone(run.metrics_rows.first().longtail_checkpoint_acc)
        self.assertEqual(list(run.metrics_rows.values_list("step", flat=True)), [0, 100, 200])

    def test_list_and_get(self):
        """Test: filtros por hash y modo, y None para ids inexistentes."""
        # Arrange
        run = ExperimentRunFactory(mode="pure_grpo")
        ExperimentRunFactory(mode="sft_only")

        # Assert
        self.assertEqual(list(list_runs_repository(mode="pure_grpo")), [run])
        self.assertEqual(list(list_runs_repository(config_hash=run.config_hash)), [run])
        self.assertEqual(get_run_by_id_repository(run.id), run)
        self.assertIsNone(get_run_by_id_repository(999_999))

    def test_finish_aborted(self):
        """Test: una ejecución abortada guarda su diagnóstico."""
        run = finish_run_repository(ExperimentRunFactory(status="running"), RunStatus.ABORTED, 12, "nan")
        run.refresh_from_db()
        self.assertEqual((run.status, run.final_step, run.diagnostic), ("aborted", 12, "nan"))

    def test_unique_step_per_run(self):
        """Test: no puede haber dos filas con el mismo paso en una ejecución."""
        row = MetricsRowFactory()
        with self.assertRaises(IntegrityError):
            MetricsRowFactory(run=row.run, step=row.step)


# ============================================================================
# Tests de Integración - Comandos
# ============================================================================


class ManagementCommandsTestCase(TestCase):
    """Tests de los comandos gen_data, train, eval, ablate, distill y kl_lab."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.config_path = self.root / "small.json"
        self.config_path.write_text(
            json.dumps(small_config_data(steps_per_stage=2, eval_interval=2)), encoding="utf-8"
        )

    def call(self, *args):
        out = StringIO()
        call_command(*args, stdout=out)
        return json.loads(out.getvalue())

    def test_gen_data(self):
        """Test: gen_data escribe train.jsonl y holdout.jsonl."""
        payload = self.call("gen_data", "--config", str(self.config_path), "--output-dir", str(self.root / "data"))
        self.assertEqual(payload["train"] + payload["holdout"], math.ceil(128 / 0.8))
        self.assertTrue((self.root / "data" / "train.jsonl").exists())

    def test_help_names_hyphenated_commands(self):
        """Test: la ayuda de gen_data y kl_lab nombra gen-data y kl-lab."""
        for module, public_name in (("gen_data", "gen-data"), ("kl_lab", "kl-lab")):
            with self.subTest(module=module):
                command = load_command_class("apps.experiments", module)
                self.assertTrue(command.help.startswith(f"{public_name}:"))

    def test_train_persists_run(self):
        """Test: train escribe artefactos y con --persist guarda la ejecución."""
        # Act
        payload = self.call(
            "train",
            "--config",
            str(self.config_path),
            "--output-dir",
            str(self.root / "run"),
            "--persist",
            "--label",
            "smoke",
        )

        # Assert
        run = ExperimentRun.objects.get(label="smoke")
        self.assertEqual(run.status, "completed")
        self.assertEqual(run.metrics_rows.count(), payload["rows"])
        self.assertTrue((self.root / "run" / "log.csv").exists())

    def test_train_from_generated_data(self):
        """Test: train acepta el dataset escrito por gen_data."""
        self.call("gen_data", "--config", str(self.config_path), "--output-dir", str(self.root / "data"))
        payload = self.call(
            "train",
            "--config",
            str(self.config_path),
            "--data-dir",
            str(self.root / "data"),
            "--output-dir",
            str(self.root / "run"),
            "--mode",
            "sft_only",
        )
        self.assertEqual(payload["final"]["step"], 6)

    def test_config_error_exit_code(self):
        """Test: un config inválido sale con código 2."""
        self.config_path.write_text(json.dumps({"mode": "ppo"}), encoding="utf-8")
        with self.assertRaises(CommandError) as ctx, self.assertLogs("apps.experiments", level="ERROR"):
            call_command("train", "--config", str(self.config_path), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    @patch("apps.experiments.services.hybrid_step_service", side_effect=NumericAbortError("Pérdida no finita"))
    def test_numeric_abort_exit_code(self, _mock):
        """Test: un aborto numérico sale con código 3 y queda persistido como aborted."""
        with self.assertRaises(CommandError) as ctx, self.assertLogs("apps.experiments", level="ERROR"):
            call_command(
                "train",
                "--config",
                str(self.config_path),
                "--output-dir",
                str(self.root / "run"),
                "--persist",
                stdout=StringIO(),
            )
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertEqual(ExperimentRun.objects.get().status, "aborted")

    def test_eval_predictions(self):
        """Test: eval sobre predicciones perfectas da 5-ACC = 1 y escribe el CSV por clase."""
        # Arrange
        path = self.root / "predictions.jsonl"
        write_predictions_jsonl_service(PredictionRecordFactory.build_batch(10), path)

        # Act
        payload = self.call(
            "eval", "--predictions", str(path), "--per-class-csv", str(self.root / "per_class.csv")
        )

        # Assert
        self.assertEqual(payload["five_acc"], 1.0)
        self.assertEqual(payload["n_records"], 10)
        self.assertTrue((self.root / "per_class.csv").exists())

    def test_eval_policy(self):
        """Test: eval con --params y --data predice y resume."""
        self.call("gen_data", "--config", str(self.config_path), "--output-dir", str(self.root / "data"))
        params_path = save_params_service(init_params_service(16), self.root / "params.json")
        payload = self.call(
            "eval",
            "--config",
            str(self.config_path),
            "--params",
            str(params_path),
            "--data",
            str(self.root / "data" / "holdout.jsonl"),
        )
        self.assertIn("ndcg3", payload)

    def test_eval_requires_input(self):
        """Test: eval sin entrada sale con código 2."""
        with self.assertRaises(CommandError) as ctx:
            call_command("eval", stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_ablate(self):
        """Test: ablate escribe el CSV lado a lado y el resumen."""
        payload = self.call(
            "ablate",
            "--config",
            str(self.config_path),
            "--modes",
            "mode_balanced",
            "pure_grpo",
            "--output-dir",
            str(self.root / "ablation"),
            "--persist",
        )
        labels = [row["label"] for row in payload["summary"]]
        self.assertEqual(labels, ["mode_balanced_curriculum", "pure_grpo_curriculum"])
        self.assertTrue((self.root / "ablation" / "ablation.csv").exists())
        self.assertEqual(ExperimentRun.objects.count(), 2)

    def test_distill_with_teacher_file(self):
        """Test: distill con un teacher guardado escribe el student y el informe."""
        teacher_path = save_params_service(PolicyParamsFactory(feature_dim=16), self.root / "teacher.json")
        payload = self.call(
            "distill",
            "--config",
            str(self.config_path),
            "--teacher",
            str(teacher_path),
            "--steps",
            "5",
            "--output-dir",
            str(self.root / "distill"),
        )
        self.assertEqual(payload["student_dim"], 4)
        self.assertTrue((self.root / "distill" / "student.json").exists())
        self.assertTrue((self.root / "distill" / "distill_report.json").exists())

    def test_kl_lab(self):
        """Test: kl_lab escribe report.json y traces.csv."""
        payload = self.call(
            "kl_lab", "--seeds", "1", "--pairs", "20", "--steps", "50", "--output-dir", str(self.root / "kl")
        )
        self.assertLess(payload["sft_residual_max"], 1e-10)
        self.assertTrue((self.root / "kl" / "report.json").exists())
        header = (self.root / "kl" / "traces.csv").read_text(encoding="utf-8").splitlines()[0]
        self.assertEqual(header, "direction,seed,step,loss,mu,sigma")
