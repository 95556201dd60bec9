from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

from rest_framework.exceptions import ValidationError

import numpy as np

from apps.grammar.domain import NUM_SLOTS, SLOT_VOCAB_SIZES

if TYPE_CHECKING:
    from apps.grammar.domain import Trajectory

PROBABILITY_TOLERANCE = 1e-12


class Capacity(str, Enum):
    """Capacidad de la política: teacher usa las features completas, student una proyección."""

    TEACHER = "teacher"
    STUDENT = "student"


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """
    Parámetros θ de la política lineal-softmax factorizada por slot.

    Attributes:
        weights: 7 matrices W_s de forma (V_s, D_in)
        biases: 7 vectores b_s de forma (V_s,)
        capacity: teacher o student
        projection: Proyección fija (D', D) del student; None para teacher

    Raises:
        ValidationError: Si las formas no cuadran o hay entradas no finitas
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    capacity: Capacity = Capacity.TEACHER
    projection: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(self.weights) != NUM_SLOTS or len(self.biases) != NUM_SLOTS:
            raise ValidationError({"weights": "Se requieren 7 slots"})
        input_dim = self.weights[0].shape[1] if self.weights[0].ndim == 2 else -1
        for slot, (w, b, size) in enumerate(zip(self.weights, self.biases, SLOT_VOCAB_SIZES, strict=True)):
            if w.shape != (size, input_dim) or b.shape != (size,):
                raise ValidationError({"weights": f"Forma inválida en el slot {slot}: {w.shape}, {b.shape}"})
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError({"weights": f"Entradas no finitas en el slot {slot}"})
        if self.capacity is Capacity.STUDENT and self.projection is None:
            raise ValidationError({"projection": "El student requiere una proyección"})
        if self.projection is not None:
            if self.projection.ndim != 2 or self.projection.shape[0] != input_dim:
                raise ValidationError({"projection": f"Se esperaba forma ({input_dim}, D)"})
            if not np.all(np.isfinite(self.projection)):
                raise ValidationError({"projection": "Entradas no finitas"})

    @property
    def input_dim(self) -> int:
        """Dimensión de entrada de las matrices (D' para el student)."""
        return int(self.weights[0].shape[1])

    @property
    def feature_dim(self) -> int:
        """Dimensión D de las features del mundo."""
        if self.projection is not None:
            return int(self.projection.shape[1])
        return self.input_dim

    @property
    def num_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases, strict=True))

    def flatten(self) -> np.ndarray:
        """Vector plano: todas las W_s y después todas las b_s (la proyección no se entrena)."""
        return np.concatenate([w.ravel() for w in self.weights] + [b.ravel() for b in self.biases])

    def with_flat(self, vector: np.ndarray) -> PolicyParams:
        """Inversa de `flatten` conservando capacidad y proyección."""
        weights, biases = unflatten(vector, self.input_dim)
        return PolicyParams(weights=weights, biases=biases, capacity=self.capacity, projection=self.projection)


@dataclass(frozen=True, eq=False)
class ParamGradient:
    """Gradiente con la misma estructura que PolicyParams (sin la proyección)."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def flatten(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights] + [b.ravel() for b in self.biases])

    def __add__(self, other: ParamGradient) -> ParamGradient:
        return ParamGradient(
            weights=tuple(a + b for a, b in zip(self.weights, other.weights, strict=True)),
            biases=tuple(a + b for a, b in zip(self.biases, other.biases, strict=True)),
        )

    def scaled(self, factor: float) -> ParamGradient:
        return ParamGradient(
            weights=tuple(factor * w for w in self.weights),
            biases=tuple(factor * b for b in self.biases),
        )


def unflatten(vector: np.ndarray, input_dim: int) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...]]:
    """Reconstruye (weights, biases) desde un vector plano."""
    vector = np.asarray(vector, dtype=np.float64)
    expected = sum(size * (input_dim + 1) for size in SLOT_VOCAB_SIZES)
    if vector.shape != (expected,):
        raise ValidationError({"vector": f"Se esperaban {expected} parámetros, recibidos {vector.size}"})
    weights, biases, offset = [], [], 0
    for size in SLOT_VOCAB_SIZES:
        weights.append(vector[offset : offset + size * input_dim].reshape(size, input_dim).copy())
        offset += size * input_dim
    for size in SLOT_VOCAB_SIZES:
        biases.append(vector[offset : offset + size].copy())
        offset += size
    return tuple(weights), tuple(biases)


@dataclass(frozen=True, eq=False)
class SlotDistribution:
    """Distribución de un slot sobre su vocabulario."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        if self.probs.ndim != 1 or np.any(self.probs < 0.0):
            raise ValidationError({"probs": "Distribución inválida"})
        if abs(float(self.probs.sum()) - 1.0) > PROBABILITY_TOLERANCE:
            raise ValidationError({"probs": "Las probabilidades deben sumar 1"})


@dataclass(frozen=True, eq=False)
class SampledTrajectory:
    """Rollout de la política: trayectoria y log π_θ de cada slot muestreado."""

    trajectory: Trajectory
    slot_logprobs: np.ndarray

    @property
    def tokens(self) -> tuple[int, ...]:
        return self.trajectory.slot_tokens()
