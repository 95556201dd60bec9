from __future__ import annotations

import factory

from apps.metrics.domain import PredictionRecord


class PredictionRecordFactory(factory.Factory):
    """Factory para registros de predicción."""

    class Meta:
        model = PredictionRecord

    query_id = 0
    y_true = factory.Iterator([0, 1, 2, 3, 4])
    y_pred = factory.SelfAttribute("y_true")
    score = factory.LazyAttribute(lambda o: float(o.y_pred))
