from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any

from rest_framework.exceptions import ValidationError

import numpy as np

from apps.grammar.domain import RELEVANCE_LABELS, validate_label

MAX_SCORE = float(max(RELEVANCE_LABELS))

# Campos de MetricsRecord que son proporciones en [0, 1] (NaN = no definido)
RATIO_FIELDS: tuple[str, ...] = (
    "five_acc",
    "two_acc",
    "macro_f1",
    "weighted_f1",
    "pair_acc",
    "ndcg3",
    "longtail_checkpoint_acc",
)


@dataclass(frozen=True)
class PredictionRecord:
    """
    Tupla de evaluación de un documento.

    Attributes:
        query_id: Query a la que pertenece el documento
        y_true: Etiqueta verdadera (0-4)
        y_pred: Etiqueta predicha (0-4)
        score: Score esperado ponderado s ∈ [0, 4]
    """

    query_id: int
    y_true: int
    y_pred: int
    score: float

    def __post_init__(self) -> None:
        validate_label(self.y_true, "y_true")
        validate_label(self.y_pred, "y_pred")
        if not 0.0 <= self.score <= MAX_SCORE:
            raise ValidationError({"score": f"Debe estar en [0, {MAX_SCORE:g}]"})


@dataclass(frozen=True)
class ClassScores:
    label: int
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    """P/R/F1 por etiqueta más los agregados macro y ponderado por soporte."""

    per_class: tuple[ClassScores, ...]
    macro_f1: float
    weighted_f1: float

    def rows(self) -> list[dict[str, Any]]:
        return [asdict(scores) for scores in self.per_class]


@dataclass(frozen=True)
class MetricsRecord:
    """
    Una fila de evaluación del RunLog.

    `pair_acc`, `ndcg3` y `longtail_checkpoint_acc` valen NaN cuando el conjunto
    evaluado no tiene pares elegibles, queries con IDCG > 0 o instancias long-tail.
    """

    step: int
    reward_mean: float
    reward_std: float
    entropy: float
    five_acc: float
    two_acc: float
    macro_f1: float
    weighted_f1: float
    pair_acc: float
    ndcg3: float
    longtail_checkpoint_acc: float

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValidationError({"step": "No puede ser negativo"})
        for name in RATIO_FIELDS:
            value = getattr(self, name)
            if not np.isnan(value) and not 0.0 <= value <= 1.0:
                raise ValidationError({name: "Debe estar en [0, 1]"})

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)
