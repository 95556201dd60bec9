from __future__ import annotations

from typing import Any

from rest_framework import serializers

from apps.optim.domain import COEFF_TOLERANCE, HybridCoeffs, OptimConfig, OptimizerName


class OptimConfigSerializer(serializers.Serializer):
    """
    Serializador de OptimConfig.

    **Campos:**
    - `clip_ratio` (float en (0, 1)), `kl_coeff` (float >= 0)
    - `learning_rate` (float > 0), `group_size` (int >= 2), `adv_epsilon` (float > 0)
    - `optimizer` (str): `sgd` o `adam`
    - `beta1`, `beta2` (float en [0, 1)), `eps` (float > 0)
    - `temperature` (float > 0), `weight_decay` (float >= 0)
    """

    clip_ratio = serializers.FloatField(default=0.2)
    kl_coeff = serializers.FloatField(default=0.001, min_value=0.0)
    learning_rate = serializers.FloatField(default=1e-2)
    group_size = serializers.IntegerField(default=8, min_value=2)
    adv_epsilon = serializers.FloatField(default=1e-8)
    optimizer = serializers.ChoiceField(choices=[o.value for o in OptimizerName], default="adam")
    beta1 = serializers.FloatField(default=0.9, min_value=0.0)
    beta2 = serializers.FloatField(default=0.999, min_value=0.0)
    eps = serializers.FloatField(default=1e-8)
    temperature = serializers.FloatField(default=1.0)
    weight_decay = serializers.FloatField(default=0.0, min_value=0.0)

    def validate_clip_ratio(self, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("Debe estar en (0, 1)")
        return value

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        for field in ("learning_rate", "adv_epsilon", "eps", "temperature"):
            if attrs[field] <= 0:
                raise serializers.ValidationError({field: "Debe ser mayor que 0"})
        for field in ("beta1", "beta2"):
            if attrs[field] >= 1.0:
                raise serializers.ValidationError({field: "Debe ser menor que 1"})
        return attrs

    def to_domain(self) -> OptimConfig:
        data = dict(self.validated_data)
        data["optimizer"] = OptimizerName(data["optimizer"])
        return OptimConfig(**data)


class HybridCoeffsSerializer(serializers.Serializer):
    alpha_t = serializers.FloatField(min_value=0.0)
    gamma_t = serializers.FloatField(min_value=0.0)

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        if abs(attrs["alpha_t"] + attrs["gamma_t"] - 1.0) > COEFF_TOLERANCE:
            raise serializers.ValidationError("alpha_t + gamma_t debe ser 1")
        return attrs

    def to_domain(self) -> HybridCoeffs:
        return HybridCoeffs(**self.validated_data)
