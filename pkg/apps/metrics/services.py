from __future__ import annotations

import json
import logging
from typing import TYPE_CHECKING

from rest_framework.exceptions import ValidationError

import numpy as np
import pandas as pd

from apps.grammar.domain import CHECKPOINT_SLOTS, RELEVANCE_LABELS, SlotIndex
from apps.metrics.domain import (
    MAX_SCORE,
    ClassificationReport,
    ClassScores,
    MetricsRecord,
    PredictionRecord,
)
from apps.metrics.exceptions import NoEligiblePairsError
from apps.metrics.serializers import PredictionRecordSerializer
from apps.policy.services import (
    entropy_service,
    expected_scores_batch,
    sample_slot_tokens_batch,
    slot_probs_batch,
)
from apps.rewards.services import score_slot_tokens_service

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence
    from pathlib import Path

    from apps.policy.domain import PolicyParams
    from apps.rewards.domain import RewardConfig
    from apps.world.domain import Dataset

logger = logging.getLogger(__name__)

NUM_LABELS = len(RELEVANCE_LABELS)
# Etiquetas >= 2 forman el grupo "relevante" de 2-ACC
RELEVANT_FROM = 2
PER_CLASS_COLUMNS: tuple[str, ...] = ("label", "precision", "recall", "f1", "support")


def _columns(records: Sequence[PredictionRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if not records:
        raise ValidationError({"records": "Se requiere al menos un registro"})
    query_ids = np.array([r.query_id for r in records], dtype=np.int64)
    y_true = np.array([r.y_true for r in records], dtype=np.int64)
    y_pred = np.array([r.y_pred for r in records], dtype=np.int64)
    scores = np.array([r.score for r in records], dtype=np.float64)
    return query_ids, y_true, y_pred, scores


def _query_groups(query_ids: np.ndarray) -> list[np.ndarray]:
    """Posiciones de cada query, en orden de aparición estable."""
    order = np.argsort(query_ids, kind="stable")
    _, starts = np.unique(query_ids[order], return_index=True)
    return np.split(order, starts[1:])


def five_acc_service(records: Sequence[PredictionRecord]) -> float:
    """Fracción de registros con y_pred = y_true."""
    _, y_true, y_pred, _ = _columns(records)
    return float(np.mean(y_true == y_pred))


def two_acc_service(records: Sequence[PredictionRecord]) -> float:
    """Exactitud binaria agrupando {0, 1} como irrelevante y {2, 3, 4} como relevante."""
    _, y_true, y_pred, _ = _columns(records)
    return float(np.mean((y_true >= RELEVANT_FROM) == (y_pred >= RELEVANT_FROM)))


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    """Matriz 5×5 con filas = etiqueta verdadera y columnas = predicha."""
    matrix = np.zeros((NUM_LABELS, NUM_LABELS), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)
    return matrix


def per_class_prf_service(records: Sequence[PredictionRecord]) -> ClassificationReport:
    """
    P/R/F1 uno-contra-resto por etiqueta, F1 macro y F1 ponderado por soporte.

    Las divisiones por cero valen 0; una clase sin soporte ni predicciones
    aporta F1 = 0 a la media macro.
    """
    _, y_true, y_pred, _ = _columns(records)
    matrix = confusion_matrix(y_true, y_pred).astype(np.float64)
    tp = np.diag(matrix)
    predicted = matrix.sum(axis=0)
    support = matrix.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros(NUM_LABELS), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros(NUM_LABELS), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(NUM_LABELS), where=denom > 0)
    per_class = tuple(
        ClassScores(
            label=label,
            precision=float(precision[label]),
            recall=float(recall[label]),
            f1=float(f1[label]),
            support=int(support[label]),
        )
        for label in RELEVANCE_LABELS
    )
    return ClassificationReport(
        per_class=per_class,
        macro_f1=float(f1.mean()),
        weighted_f1=float(f1 @ support / support.sum()),
    )


def pair_acc_service(records: Sequence[PredictionRecord], ties_correct: bool = False) -> float:
    """
    Pair-ACC sobre pares de la misma query con etiquetas distintas.

    Un par es correcto si sign(score_a − score_b) = sign(y_a − y_b). Los pares
    con la misma etiqueta se excluyen; los empates de score cuentan como
    incorrectos salvo `ties_correct`.

    Raises:
        NoEligiblePairsError: Si no hay ningún par elegible
    """
    query_ids, y_true, _, scores = _columns(records)
    correct = total = 0
    for group in _query_groups(query_ids):
        if group.size < 2:
            continue
        label_diff = np.sign(y_true[group][:, None] - y_true[group][None, :])
        score_diff = np.sign(scores[group][:, None] - scores[group][None, :])
        upper = np.triu(np.ones((group.size, group.size), dtype=bool), k=1)
        eligible = upper & (label_diff != 0)
        hits = score_diff == label_diff
        if ties_correct:
            hits |= score_diff == 0
        total += int(eligible.sum())
        correct += int((eligible & hits).sum())
    if total == 0:
        raise NoEligiblePairsError(len(records))
    return correct / total


def _dcg(gains: np.ndarray, k: int) -> float:
    top = gains[:k]
    return float(np.sum(top / np.log2(np.arange(2, top.size + 2))))


def ndcg_at_k_service(records: Sequence[PredictionRecord], k: int = 3) -> float:
    """
    NDCG@k medio por query con ganancia 2^y − 1 y descuento 1/log2(rank + 1).

    Los empates de score se rompen por orden de entrada (estable); las queries
    con IDCG = 0 se omiten. Devuelve NaN si ninguna query tiene IDCG > 0.
    """
    if k < 1:
        raise ValidationError({"k": "Debe ser al menos 1"})
    query_ids, y_true, _, scores = _columns(records)
    values = []
    for group in _query_groups(query_ids):
        gains = 2.0 ** y_true[group] - 1.0
        ideal = _dcg(np.sort(gains)[::-1], k)
        if ideal == 0.0:
            continue
        group_scores = scores[group]
        if np.unique(group_scores).size < group_scores.size:
            logger.debug("ndcg score ties query_id=%d broken by input order", int(query_ids[group[0]]))
        order = np.argsort(-group_scores, kind="stable")
        values.append(_dcg(gains[order], k) / ideal)
    if not values:
        return float("nan")
    return float(np.mean(values))


def predict_records_service(
    params: PolicyParams,
    dataset: Dataset,
    temperature: float = 1.0,
) -> list[PredictionRecord]:
    """Predicción determinista: y_pred = argmax del slot de decisión y score esperado ponderado."""
    decision = slot_probs_batch(params, dataset.features, temperature)[SlotIndex.DECISION]
    y_pred = decision.argmax(axis=1)
    scores = np.clip(expected_scores_batch(decision), 0.0, MAX_SCORE)
    return [
        PredictionRecord(
            query_id=int(dataset.query_ids[i]),
            y_true=int(dataset.labels[i]),
            y_pred=int(y_pred[i]),
            score=float(scores[i]),
        )
        for i in range(len(dataset))
    ]


def longtail_checkpoint_acc(params: PolicyParams, dataset: Dataset, temperature: float = 1.0) -> float:
    """Fracción de instancias long-tail cuyos 5 checkpoints argmax coinciden con la verdad (NaN si no hay)."""
    positions = np.flatnonzero(dataset.is_longtail)
    if positions.size == 0:
        return float("nan")
    probs = slot_probs_batch(params, dataset.features[positions], temperature)
    argmax = np.stack([probs[slot].argmax(axis=1) for slot in CHECKPOINT_SLOTS], axis=1)
    return float(np.mean(np.all(argmax == dataset.checkpoint_tokens[positions], axis=1)))


def evaluate_policy_service(
    params: PolicyParams,
    dataset: Dataset,
    reward_cfg: RewardConfig,
    rng: np.random.Generator,
    step: int = 0,
    temperature: float = 1.0,
) -> MetricsRecord:
    """
    Suite completa de métricas de una política sobre un conjunto held-out.

    La recompensa media y su desviación se miden sobre una trayectoria muestreada
    por instancia; el resto de métricas usan la predicción determinista.

    Args:
        params: Política a evaluar
        dataset: Conjunto de evaluación
        reward_cfg: Configuración de recompensa
        rng: Generador para las trayectorias muestreadas
        step: Paso de entrenamiento de la fila
        temperature: Temperatura

    Returns:
        MetricsRecord
    """
    records = predict_records_service(params, dataset, temperature)
    report = per_class_prf_service(records)
    try:
        pair_acc = pair_acc_service(records)
    except NoEligiblePairsError:
        logger.warning("pair_acc undefined: no eligible pairs n=%d", len(records))
        pair_acc = float("nan")
    tokens, _ = sample_slot_tokens_batch(params, dataset.features, rng, temperature)
    rewards = score_slot_tokens_service(tokens[:, 0], dataset.labels, reward_cfg)
    return MetricsRecord(
        step=step,
        reward_mean=float(rewards.mean()),
        reward_std=float(rewards.std()),
        entropy=entropy_service(params, dataset.features, temperature),
        five_acc=five_acc_service(records),
        two_acc=two_acc_service(records),
        macro_f1=report.macro_f1,
        weighted_f1=report.weighted_f1,
        pair_acc=pair_acc,
        ndcg3=ndcg_at_k_service(records, 3),
        longtail_checkpoint_acc=longtail_checkpoint_acc(params, dataset, temperature),
    )


def metrics_summary_service(records: Sequence[PredictionRecord], k: int = 3) -> dict[str, float | None]:
    """Bloque JSON de métricas de `eval` (los valores no definidos salen como null)."""
    report = per_class_prf_service(records)
    try:
        pair_acc: float | None = pair_acc_service(records)
    except NoEligiblePairsError:
        pair_acc = None
    ndcg = ndcg_at_k_service(records, k)
    return {
        "n_records": len(records),
        "five_acc": five_acc_service(records),
        "two_acc": two_acc_service(records),
        "macro_f1": report.macro_f1,
        "weighted_f1": report.weighted_f1,
        "pair_acc": pair_acc,
        f"ndcg{k}": None if np.isnan(ndcg) else ndcg,
    }


def write_predictions_jsonl_service(records: Iterable[PredictionRecord], path: Path) -> int:
    """Escribe un PredictionRecord por línea; devuelve el número de líneas."""
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(dict(PredictionRecordSerializer(record).data)) + "\n")
            count += 1
    return count


def read_predictions_jsonl_service(path: Path) -> list[PredictionRecord]:
    """
    Lee y valida un fichero de predicciones JSONL.

    Raises:
        ValidationError: Si una línea es inválida o el fichero está vacío
    """
    records = []
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            serializer = PredictionRecordSerializer(data=json.loads(line))
            serializer.is_valid(raise_exception=True)
            records.append(serializer.to_domain())
    if not records:
        raise ValidationError({"path": f"{path} no contiene predicciones"})
    return records


def write_per_class_csv_service(report: ClassificationReport, path: Path) -> Path:
    """CSV `label,precision,recall,f1,support` con una fila por etiqueta."""
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(report.rows(), columns=list(PER_CLASS_COLUMNS)).to_csv(path, index=False)
    return path
