from __future__ import annotations

from typing import Any

from rest_framework import serializers

import numpy as np

from apps.grammar.domain import NUM_SLOTS, SLOT_VOCAB_SIZES
from apps.policy.domain import Capacity, PolicyParams

PARAMS_FORMAT = "afrl-policy"
PARAMS_VERSION = 1


class MatrixSerializer(serializers.Serializer):
    """Matriz en orden row-major con cabecera de forma."""

    shape = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=2, max_length=2)
    values = serializers.ListField(child=serializers.FloatField())

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        rows, cols = attrs["shape"]
        if len(attrs["values"]) != rows * cols:
            raise serializers.ValidationError({"values": f"Se esperaban {rows * cols} valores"})
        return attrs


class SlotParamsSerializer(serializers.Serializer):
    shape = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=2, max_length=2)
    weights = serializers.ListField(child=serializers.FloatField())
    bias = serializers.ListField(child=serializers.FloatField())

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        rows, cols = attrs["shape"]
        if len(attrs["weights"]) != rows * cols or len(attrs["bias"]) != rows:
            raise serializers.ValidationError({"shape": "La forma no coincide con los valores"})
        return attrs


class PolicyParamsSerializer(serializers.Serializer):
    """
    Fichero de parámetros versionado.

    **Campos:**
    - `format` (str): Siempre `afrl-policy`
    - `version` (int): Versión del formato (1)
    - `capacity` (str): `teacher` o `student`
    - `projection` (object|null): Proyección fija del student
    - `slots` (array): 7 objetos `{shape, weights, bias}`
    """

    format = serializers.ChoiceField(choices=[PARAMS_FORMAT])
    version = serializers.IntegerField(min_value=PARAMS_VERSION, max_value=PARAMS_VERSION)
    capacity = serializers.ChoiceField(choices=[c.value for c in Capacity])
    projection = MatrixSerializer(allow_null=True, default=None)
    slots = SlotParamsSerializer(many=True)

    def validate_slots(self, value: list[dict[str, Any]]) -> list[dict[str, Any]]:
        if len(value) != NUM_SLOTS:
            raise serializers.ValidationError("Se requieren 7 slots")
        for slot, (record, size) in enumerate(zip(value, SLOT_VOCAB_SIZES, strict=True)):
            if record["shape"][0] != size:
                raise serializers.ValidationError(f"El slot {slot} debe tener {size} filas")
        return value

    def to_domain(self) -> PolicyParams:
        data = self.validated_data
        projection = None
        if data.get("projection") is not None:
            projection = np.array(data["projection"]["values"], dtype=np.float64).reshape(
                data["projection"]["shape"]
            )
        return PolicyParams(
            weights=tuple(
                np.array(s["weights"], dtype=np.float64).reshape(s["shape"]) for s in data["slots"]
            ),
            biases=tuple(np.array(s["bias"], dtype=np.float64) for s in data["slots"]),
            capacity=Capacity(data["capacity"]),
            projection=projection,
        )


def params_to_payload(params: PolicyParams) -> dict[str, Any]:
    """Payload JSON de unos PolicyParams."""
    projection = None
    if params.projection is not None:
        projection = {"shape": list(params.projection.shape), "values": params.projection.ravel().tolist()}
    return {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "capacity": params.capacity.value,
        "projection": projection,
        "slots": [
            {"shape": list(w.shape), "weights": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in zip(params.weights, params.biases, strict=True)
        ],
    }
