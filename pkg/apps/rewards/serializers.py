from __future__ import annotations

from typing import Any

from rest_framework import serializers

from apps.rewards.domain import RewardBreakdown, RewardConfig

ALPHA_BETA_TOLERANCE = 1e-9


class RewardConfigSerializer(serializers.Serializer):
    """
    Serializador de RewardConfig.

    **Campos:**
    - `alpha` (float): Peso del resultado, por defecto 0.72
    - `beta` (float): Peso del CoT, por defecto 0.28 (alpha + beta = 1)
    - `gamma_ord` (float >= 0): Penalización ordinal por unidad de distancia
    - `format_penalty` (float): Recompensa de un formato inválido
    - `w_decision`, `w_trace`, `w_final` (float > 0): Pesos estructurales
    """

    alpha = serializers.FloatField(default=0.72)
    beta = serializers.FloatField(default=0.28)
    gamma_ord = serializers.FloatField(default=0.25, min_value=0.0)
    format_penalty = serializers.FloatField(default=-1.0)
    w_decision = serializers.FloatField(default=10.0)
    w_trace = serializers.FloatField(default=10.0)
    w_final = serializers.FloatField(default=5.0)

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        if abs(attrs["alpha"] + attrs["beta"] - 1.0) > ALPHA_BETA_TOLERANCE:
            raise serializers.ValidationError({"beta": "alpha + beta debe ser 1"})
        for field in ("w_decision", "w_trace", "w_final"):
            if attrs[field] <= 0:
                raise serializers.ValidationError({field: "Debe ser mayor que 0"})
        return attrs

    def to_domain(self) -> RewardConfig:
        return RewardConfig(**self.validated_data)


class RewardBreakdownSerializer(serializers.Serializer):
    """Registro JSONL de auditoría: los campos de RewardBreakdown tal cual."""

    i_fmt = serializers.IntegerField(min_value=0, max_value=1)
    i_cst = serializers.IntegerField(min_value=0, max_value=1)
    i_logic = serializers.IntegerField(min_value=0, max_value=1)
    y_hat = serializers.IntegerField(min_value=0, max_value=4, allow_null=True)
    r_res = serializers.FloatField()
    r_cot = serializers.IntegerField(min_value=0, max_value=1)
    total = serializers.FloatField()

    def to_domain(self) -> RewardBreakdown:
        return RewardBreakdown(**self.validated_data)
