from __future__ import annotations

from rest_framework import serializers

from apps.curriculum.domain import StageSpec
from apps.optim.domain import HybridCoeffs
from apps.optim.serializers import HybridCoeffsSerializer


class StageSpecSerializer(serializers.Serializer):
    """
    Etapa del currículo en el config JSON.

    **Campos:**
    - `stage` (int >= 1)
    - `mix` (array[float]): Cantidades o proporciones (Easy, Medium, Hard)
    - `coeffs` (object): `{alpha_t, gamma_t}` con suma 1
    - `steps` (int >= 0): Pasos de la etapa
    """

    stage = serializers.IntegerField(min_value=1)
    mix = serializers.ListField(child=serializers.FloatField(min_value=0.0), min_length=3, max_length=3)
    coeffs = HybridCoeffsSerializer()
    steps = serializers.IntegerField(min_value=0, default=0)

    def validate_mix(self, value: list[float]) -> list[float]:
        if sum(value) <= 0:
            raise serializers.ValidationError("La mezcla no puede ser toda cero")
        return value

    @staticmethod
    def build(data: dict) -> StageSpec:
        """Convierte un registro validado en StageSpec."""
        return StageSpec(
            stage=data["stage"],
            mix=tuple(data["mix"]),
            coeffs=HybridCoeffs(**data["coeffs"]),
            steps=data["steps"],
        )

    def to_domain(self) -> StageSpec:
        return self.build(self.validated_data)
