from __future__ import annotations

import tempfile
from itertools import combinations
from pathlib import Path

from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

import numpy as np
import pandas as pd

from apps.metrics.domain import MetricsRecord, PredictionRecord
from apps.metrics.exceptions import NoEligiblePairsError
from apps.metrics.factories import PredictionRecordFactory
from apps.metrics.serializers import MetricsRecordSerializer
from apps.metrics.services import (
    evaluate_policy_service,
    five_acc_service,
    longtail_checkpoint_acc,
    metrics_summary_service,
    ndcg_at_k_service,
    pair_acc_service,
    per_class_prf_service,
    predict_records_service,
    read_predictions_jsonl_service,
    two_acc_service,
    write_per_class_csv_service,
    write_predictions_jsonl_service,
)
from apps.policy.services import init_params_service
from apps.rewards.domain import RewardConfig
from apps.world.domain import WorldConfig
from apps.world.services import gen_dataset_service


def _record(y_true: int, y_pred: int, score: float | None = None, query_id: int = 0) -> PredictionRecord:
    return PredictionRecord(
        query_id=query_id,
        y_true=y_true,
        y_pred=y_pred,
        score=float(y_pred) if score is None else score,
    )


def _random_records(rng: np.random.Generator, n: int, n_queries: int = 6) -> list[PredictionRecord]:
    # Scores en una rejilla gruesa para forzar empates
    return [
        _record(
            y_true=int(rng.integers(5)),
            y_pred=int(rng.integers(5)),
            score=float(rng.integers(9)) / 2,
            query_id=int(rng.integers(n_queries)),
        )
        for _ in range(n)
    ]


def _pair_acc_oracle(records: list[PredictionRecord]) -> float | None:
    correct = total = 0
    for a, b in combinations(records, 2):
        if a.query_id != b.query_id or a.y_true == b.y_true:
            continue
        total += 1
        correct += int(np.sign(a.score - b.score) == np.sign(a.y_true - b.y_true))
    return correct / total if total else None


def _ndcg_oracle(records: list[PredictionRecord], k: int) -> float:
    values = []
    for query in sorted({r.query_id for r in records}):
        group = [r for r in records if r.query_id == query]
        ideal_labels = sorted((r.y_true for r in group), reverse=True)
        ideal = sum((2**y - 1) / np.log2(i + 2) for i, y in enumerate(ideal_labels[:k]))
        if ideal == 0:
            continue
        ranked = sorted(enumerate(group), key=lambda item: (-item[1].score, item[0]))
        dcg = sum((2**r.y_true - 1) / np.log2(i + 2) for i, (_, r) in enumerate(ranked[:k]))
        values.append(dcg / ideal)
    return float(np.mean(values)) if values else float("nan")


def _prf_oracle(records: list[PredictionRecord], label: int) -> tuple[float, float, float]:
    tp = sum(1 for r in records if r.y_true == label and r.y_pred == label)
    predicted = sum(1 for r in records if r.y_pred == label)
    actual = sum(1 for r in records if r.y_true == label)
    precision = tp / predicted if predicted else 0.0
    recall = tp / actual if actual else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


# ============================================================================
# Tests Unitarios - Exactitud
# ============================================================================


class AccuracyServicesTestCase(SimpleTestCase):
    """Tests para five_acc_service y two_acc_service."""

    def test_five_acc_examples(self):
        """Test: todo correcto 1.0, todo incorrecto 0.0, 3 de 4 da 0.75."""
        self.assertEqual(five_acc_service(PredictionRecordFactory.build_batch(5)), 1.0)
        self.assertEqual(five_acc_service([_record(0, 3), _record(4, 1)]), 0.0)
        records = [_record(0, 0), _record(1, 1), _record(2, 2), _record(3, 4)]
        self.assertEqual(five_acc_service(records), 0.75)

    def test_two_acc_grouping(self):
        """Test: 1 vs 0 cuenta como acierto y 2 vs 1 como fallo."""
        self.assertEqual(two_acc_service([_record(0, 1)]), 1.0)
        self.assertEqual(two_acc_service([_record(1, 2)]), 0.0)

    def test_two_acc_off_by_one_within_group(self):
        """Test: errores de uno dentro del mismo grupo dan 2-ACC = 1."""
        records = [_record(0, 1), _record(1, 0), _record(2, 3), _record(3, 4), _record(4, 2)]
        self.assertEqual(two_acc_service(records), 1.0)
        self.assertEqual(five_acc_service(records), 0.0)

    def test_two_acc_bounds_five_acc(self):
        """Test: 2-ACC >= 5-ACC en datos aleatorios."""
        rng = np.random.default_rng(0)
        for _ in range(20):
            records = _random_records(rng, 30)
            self.assertGreaterEqual(two_acc_service(records), five_acc_service(records))

    def test_empty_records(self):
        """Test: una lista vacía es un error."""
        with self.assertRaises(ValidationError):
            five_acc_service([])

    def test_record_validation(self):
        """Test: etiquetas fuera de [0, 4] o score fuera de [0, 4] se rechazan."""
        with self.assertRaises(ValidationError):
            _record(5, 0)
        with self.assertRaises(ValidationError):
            _record(0, 0, score=4.5)


class PerClassPrfServiceTestCase(SimpleTestCase):
    """Tests para per_class_prf_service."""

    def test_perfect_predictions(self):
        """Test: predicciones perfectas con las 5 etiquetas dan F1 = 1 en todo."""
        report = per_class_prf_service(PredictionRecordFactory.build_batch(10))
        self.assertEqual([c.f1 for c in report.per_class], [1.0] * 5)
        self.assertEqual(report.macro_f1, 1.0)
        self.assertEqual(report.weighted_f1, 1.0)

    def test_swapped_labels(self):
        """Test: 0→1 y 1→0 siempre dan macro F1 = 0."""
        report = per_class_prf_service([_record(0, 1), _record(1, 0), _record(0, 1)])
        self.assertEqual(report.macro_f1, 0.0)
        self.assertEqual(report.weighted_f1, 0.0)

    def test_zero_support_class_counts_in_macro(self):
        """Test: una clase ausente aporta F1 = 0 a la media macro."""
        records = [_record(label, label) for label in (0, 1, 2, 3)]
        report = per_class_prf_service(records)
        self.assertAlmostEqual(report.macro_f1, 0.8)
        self.assertEqual(report.per_class[4].support, 0)

    def test_hand_worked_confusion(self):
        """Test: tabla de 10 registros frente al oráculo por recuento."""
        pairs = [(0, 0), (0, 1), (1, 1), (1, 1), (2, 2), (2, 3), (3, 3), (3, 2), (4, 4), (4, 3)]
        records = [_record(t, p) for t, p in pairs]
        report = per_class_prf_service(records)
        for scores in report.per_class:
            precision, recall, f1 = _prf_oracle(records, scores.label)
            self.assertAlmostEqual(scores.precision, precision)
            self.assertAlmostEqual(scores.recall, recall)
            self.assertAlmostEqual(scores.f1, f1)
        # Clase 1: P = 2/3, R = 1, F1 = 0.8
        self.assertAlmostEqual(report.per_class[1].f1, 0.8)
        supports = np.array([s.support for s in report.per_class])
        f1s = np.array([s.f1 for s in report.per_class])
        self.assertAlmostEqual(report.weighted_f1, float(f1s @ supports / supports.sum()))

    def test_permutation_invariance(self):
        """Test: permutar los registros no cambia ninguna métrica."""
        rng = np.random.default_rng(1)
        records = _random_records(rng, 40)
        shuffled = [records[i] for i in rng.permutation(len(records))]
        self.assertEqual(per_class_prf_service(records), per_class_prf_service(shuffled))
        self.assertEqual(pair_acc_service(records), pair_acc_service(shuffled))


# ============================================================================
# Tests Unitarios - Ranking
# ============================================================================


class PairAccServiceTestCase(SimpleTestCase):
    """Tests para pair_acc_service."""

    def test_monotone_scores(self):
        """Test: scores monótonos en la etiqueta dentro de cada query dan 1.0."""
        records = [_record(y, 0, score=0.5 * y + q, query_id=q) for q in range(3) for y in range(4)]
        self.assertEqual(pair_acc_service(records), 1.0)

    def test_all_pairs_inverted(self):
        """Test: etiquetas (0, 1, 2) con scores (2, 1, 0) dan 0/3."""
        records = [_record(0, 0, 2.0), _record(1, 0, 1.0), _record(2, 0, 0.0)]
        self.assertEqual(pair_acc_service(records), 0.0)

    def test_ties_and_equal_labels(self):
        """Test: los empates de score fallan y los pares de igual etiqueta se excluyen."""
        records = [_record(0, 0, 1.0), _record(2, 0, 1.0), _record(2, 0, 3.0)]
        # Pares elegibles: (0,2) empate -> fallo, (0,2') -> acierto
        self.assertEqual(pair_acc_service(records), 0.5)
        self.assertEqual(pair_acc_service(records, ties_correct=True), 1.0)

    def test_pairs_do_not_cross_queries(self):
        """Test: documentos de queries distintas no forman pares."""
        records = [_record(0, 0, 3.0, query_id=1), _record(4, 0, 0.0, query_id=2)]
        with self.assertRaises(NoEligiblePairsError):
            pair_acc_service(records)

    def test_no_eligible_pairs(self):
        """Test: una query con etiquetas iguales no tiene pares elegibles."""
        with self.assertRaises(NoEligiblePairsError) as ctx:
            pair_acc_service([_record(2, 2), _record(2, 1)])
        self.assertEqual(ctx.exception.n_records, 2)
        self.assertIsInstance(ctx.exception, ValidationError)

    def test_matches_brute_force_oracle(self):
        """Test: coincide con el oráculo de todos los pares en 100 datasets aleatorios."""
        rng = np.random.default_rng(2)
        for _ in range(100):
            records = _random_records(rng, int(rng.integers(2, 51)))
            expected = _pair_acc_oracle(records)
            if expected is None:
                with self.assertRaises(NoEligiblePairsError):
                    pair_acc_service(records)
            else:
                self.assertAlmostEqual(pair_acc_service(records), expected, places=12)

    def test_large_random_oracle(self):
        """Test: 1.000 registros aleatorios frente al oráculo."""
        records = _random_records(np.random.default_rng(3), 1000, n_queries=40)
        self.assertAlmostEqual(pair_acc_service(records), _pair_acc_oracle(records), places=12)

    def test_monotone_transform_invariance(self):
        """Test: una transformación estrictamente creciente del score no cambia Pair-ACC."""
        records = _random_records(np.random.default_rng(4), 60)
        transformed = [
            _record(r.y_true, r.y_pred, score=4.0 * (r.score / 4.0) ** 2, query_id=r.query_id) for r in records
        ]
        self.assertEqual(pair_acc_service(records), pair_acc_service(transformed))


class NdcgAtKServiceTestCase(SimpleTestCase):
    """Tests para ndcg_at_k_service."""

    def test_ideal_ordering(self):
        """Test: orden ideal da 1.0."""
        records = [_record(y, 0, score=float(y)) for y in (4, 2, 0, 3)]
        self.assertAlmostEqual(ndcg_at_k_service(records), 1.0)

    def test_worked_example(self):
        """Test: etiquetas (3, 0) ordenadas al revés dan ≈ 0.6309."""
        records = [_record(3, 0, score=0.0), _record(0, 0, score=3.0)]
        self.assertAlmostEqual(ndcg_at_k_service(records, 3), (7 / np.log2(3)) / 7, places=12)
        self.assertAlmostEqual(ndcg_at_k_service(records, 3), 0.6309, places=4)

    def test_zero_idcg_queries_skipped(self):
        """Test: queries con todas las etiquetas a 0 no cuentan."""
        records = [_record(0, 0, 1.0, query_id=1), _record(0, 0, 2.0, query_id=1), _record(2, 0, 1.0, query_id=2)]
        self.assertEqual(ndcg_at_k_service(records), 1.0)
        self.assertTrue(np.isnan(ndcg_at_k_service([_record(0, 0)])))

    def test_ties_logged(self):
        """Test: los empates de score se registran en debug y se rompen por orden de entrada."""
        records = [_record(1, 0, 2.0), _record(3, 0, 2.0)]
        with self.assertLogs("apps.metrics.services", level="DEBUG"):
            value = ndcg_at_k_service(records)
        self.assertAlmostEqual(value, (1 + 7 / np.log2(3)) / (7 + 1 / np.log2(3)))

    def test_invalid_k(self):
        """Test: k < 1 es un error."""
        with self.assertRaises(ValidationError):
            ndcg_at_k_service([_record(1, 1)], k=0)

    def test_matches_brute_force_oracle(self):
        """Test: coincide con el oráculo en 100 datasets aleatorios."""
        rng = np.random.default_rng(5)
        for _ in range(100):
            records = _random_records(rng, int(rng.integers(1, 51)))
            k = int(rng.integers(1, 5))
            expected = _ndcg_oracle(records, k)
            actual = ndcg_at_k_service(records, k)
            if np.isnan(expected):
                self.assertTrue(np.isnan(actual))
            else:
                self.assertAlmostEqual(actual, expected, places=12)


# ============================================================================
# Tests de Integración - Política y ficheros
# ============================================================================


class EvaluatePolicyServiceTestCase(SimpleTestCase):
    """Tests para evaluate_policy_service."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dataset = gen_dataset_service(400, WorldConfig(seed=21, longtail_rate=0.05))

    def test_uniform_policy(self):
        """Test: la política uniforme predice 0 (argmax estable) con score 2."""
        records = predict_records_service(init_params_service(16), self.dataset)
        self.assertEqual({r.y_pred for r in records}, {0})
        self.assertTrue(all(abs(r.score - 2.0) < 1e-12 for r in records))

    def test_full_record(self):
        """Test: la fila de métricas es válida y la entropía es la de la uniforme."""
        params = init_params_service(16)
        record = evaluate_policy_service(params, self.dataset, RewardConfig(), np.random.default_rng(0), step=7)
        self.assertEqual(record.step, 7)
        expected_entropy = (2 * np.log(5) + 5 * np.log(2)) / 7
        self.assertAlmostEqual(record.entropy, expected_entropy, places=10)
        self.assertEqual(record.five_acc, float(np.mean(self.dataset.labels == 0)))
        # Todas las puntuaciones empatan: ningún par es correcto
        self.assertEqual(record.pair_acc, 0.0)
        self.assertGreaterEqual(record.reward_mean, 0.0)

    def test_longtail_checkpoint_acc(self):
        """Test: con la política uniforme el argmax de los checkpoints es Yes y falla en long-tail."""
        params = init_params_service(16)
        self.assertTrue(np.any(self.dataset.is_longtail))
        # La verdad long-tail tiene checkpoints (No, No, Yes, Yes, Yes)
        self.assertEqual(longtail_checkpoint_acc(params, self.dataset), 0.0)
        head = self.dataset.subset(np.flatnonzero(~self.dataset.is_longtail))
        self.assertTrue(np.isnan(longtail_checkpoint_acc(params, head)))


class PredictionFilesTestCase(SimpleTestCase):
    """Tests para la lectura/escritura de predicciones y el CSV por clase."""

    def test_jsonl_and_summary(self):
        """Test: el fichero se relee igual y el resumen tiene las claves del CLI."""
        records = [_record(0, 0, 0.5, 1), _record(2, 1, 1.5, 1), _record(4, 4, 3.9, 2), _record(1, 1, 1.0, 2)]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "preds.jsonl"
            self.assertEqual(write_predictions_jsonl_service(records, path), 4)
            loaded = read_predictions_jsonl_service(path)
        self.assertEqual(loaded, records)
        summary = metrics_summary_service(loaded)
        self.assertEqual(summary["n_records"], 4)
        self.assertEqual(summary["pair_acc"], 1.0)
        self.assertIn("ndcg3", summary)

    def test_invalid_line_rejected(self):
        """Test: una etiqueta fuera de rango se rechaza."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "preds.jsonl"
            path.write_text('{"query_id": 0, "y_true": 7, "y_pred": 0, "score": 1.0}\n', encoding="utf-8")
            with self.assertRaises(ValidationError):
                read_predictions_jsonl_service(path)

    def test_per_class_csv(self):
        """Test: el CSV por clase tiene la cabecera label,precision,recall,f1,support."""
        report = per_class_prf_service(PredictionRecordFactory.build_batch(5))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_per_class_csv_service(report, Path(tmp) / "per_class.csv")
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ["label", "precision", "recall", "f1", "support"])
        self.assertEqual(frame["label"].tolist(), [0, 1, 2, 3, 4])


class MetricsRecordTestCase(SimpleTestCase):
    """Tests para MetricsRecord y su serializador."""

    def _data(self, **overrides):
        data = {
            "step": 0,
            "reward_mean": 0.5,
            "reward_std": 0.1,
            "entropy": 1.0,
            "five_acc": 0.5,
            "two_acc": 0.7,
            "macro_f1": 0.4,
            "weighted_f1": 0.45,
            "pair_acc": None,
            "ndcg3": 0.8,
            "longtail_checkpoint_acc": 0.5,
        }
        data.update(overrides)
        return data

    def test_null_maps_to_nan(self):
        """Test: un campo null se convierte en NaN."""
        serializer = MetricsRecordSerializer(data=self._data())
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertTrue(np.isnan(serializer.to_domain().pair_acc))

    def test_out_of_range_rejected(self):
        """Test: una exactitud fuera de [0, 1] se rechaza en el dominio."""
        data = self._data(pair_acc=0.5, five_acc=1.5)
        with self.assertRaises(ValidationError):
            MetricsRecord(**data)
