from __future__ import annotations

from typing import Any

from rest_framework import serializers

from apps.grammar.domain import CheckpointAnswer
from apps.world.domain import NUM_SEMANTIC, WorldConfig

MARGINAL_TOLERANCE = 1e-9


class WorldConfigSerializer(serializers.Serializer):
    """
    Serializador de WorldConfig.

    **Campos:**
    - `feature_dim` (int >= 7): Dimensión de las features
    - `longtail_rate` (float en [0, 1]): Tasa de instancias long-tail
    - `shortcut_strength` (float en [0, 1]): Acuerdo de la feature atajo con `label >= 2`
    - `seed` (int >= 0): Semilla raíz
    - `noise_scale` (float >= 0), `docs_per_query` (int >= 1)
    - `label_noise`, `checkpoint_noise` (float en [0, 1]): Dispersión del experto
    - `label_marginals` (array[float], 4 valores que suman 1)
    """

    feature_dim = serializers.IntegerField(default=16, min_value=NUM_SEMANTIC)
    longtail_rate = serializers.FloatField(default=0.02, min_value=0.0, max_value=1.0)
    shortcut_strength = serializers.FloatField(default=0.9, min_value=0.0, max_value=1.0)
    seed = serializers.IntegerField(default=0, min_value=0)
    noise_scale = serializers.FloatField(default=0.3, min_value=0.0)
    label_noise = serializers.FloatField(default=0.2, min_value=0.0, max_value=1.0)
    checkpoint_noise = serializers.FloatField(default=0.5, min_value=0.0, max_value=1.0)
    docs_per_query = serializers.IntegerField(default=8, min_value=1)
    label_marginals = serializers.ListField(
        child=serializers.FloatField(min_value=0.0),
        min_length=4,
        max_length=4,
        default=[0.22, 0.33, 0.35, 0.10],
    )

    def validate_label_marginals(self, value: list[float]) -> list[float]:
        if abs(sum(value) - 1.0) > MARGINAL_TOLERANCE:
            raise serializers.ValidationError("Las marginales deben sumar 1")
        return value

    def to_domain(self) -> WorldConfig:
        data = dict(self.validated_data)
        data["label_marginals"] = tuple(data["label_marginals"])
        return WorldConfig(**data)


class InstanceRecordSerializer(serializers.Serializer):
    """Una línea JSONL del dataset."""

    index = serializers.IntegerField(min_value=0)
    query_id = serializers.IntegerField(min_value=0)
    features = serializers.ListField(child=serializers.FloatField(), min_length=NUM_SEMANTIC)
    checkpoints = serializers.ListField(
        child=serializers.ChoiceField(choices=[a.value for a in CheckpointAnswer]),
        min_length=5,
        max_length=5,
    )
    label = serializers.IntegerField(min_value=0, max_value=4)
    is_longtail = serializers.BooleanField()
    ambiguity = serializers.FloatField(min_value=0.0, max_value=1.0)

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        if CheckpointAnswer.NONE.value in attrs["checkpoints"]:
            raise serializers.ValidationError({"checkpoints": "Los checkpoints del oráculo son Yes/No"})
        return attrs
