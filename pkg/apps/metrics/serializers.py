from __future__ import annotations

from rest_framework import serializers

from apps.metrics.domain import MAX_SCORE, MetricsRecord, PredictionRecord


class PredictionRecordSerializer(serializers.Serializer):
    """
    Una línea JSONL de predicciones para `eval`.

    **Campos:**
    - `query_id` (int >= 0)
    - `y_true`, `y_pred` (int en [0, 4])
    - `score` (float en [0, 4]): Score esperado ponderado
    """

    query_id = serializers.IntegerField(min_value=0)
    y_true = serializers.IntegerField(min_value=0, max_value=4)
    y_pred = serializers.IntegerField(min_value=0, max_value=4)
    score = serializers.FloatField(min_value=0.0, max_value=MAX_SCORE)

    def to_domain(self) -> PredictionRecord:
        return PredictionRecord(**self.validated_data)


class MetricsRecordSerializer(serializers.Serializer):
    """Fila de métricas; los campos no definidos viajan como null."""

    step = serializers.IntegerField(min_value=0)
    reward_mean = serializers.FloatField()
    reward_std = serializers.FloatField(min_value=0.0)
    entropy = serializers.FloatField(min_value=0.0)
    five_acc = serializers.FloatField(min_value=0.0, max_value=1.0)
    two_acc = serializers.FloatField(min_value=0.0, max_value=1.0)
    macro_f1 = serializers.FloatField(min_value=0.0, max_value=1.0)
    weighted_f1 = serializers.FloatField(min_value=0.0, max_value=1.0)
    pair_acc = serializers.FloatField(min_value=0.0, max_value=1.0, allow_null=True)
    ndcg3 = serializers.FloatField(min_value=0.0, max_value=1.0, allow_null=True)
    longtail_checkpoint_acc = serializers.FloatField(min_value=0.0, max_value=1.0, allow_null=True)

    def to_domain(self) -> MetricsRecord:
        data = {key: float("nan") if value is None else value for key, value in self.validated_data.items()}
        return MetricsRecord(**data)
