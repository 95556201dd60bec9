from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

from rest_framework.exceptions import ValidationError

import numpy as np

from apps.optim.domain import HybridCoeffs

DEFAULT_SAMPLES = 8


class DifficultyBin(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"
    EXCLUDED = "excluded"


# Orden de las proporciones de mezcla en StageSpec.mix
TRAINING_BINS: tuple[DifficultyBin, ...] = (DifficultyBin.EASY, DifficultyBin.MEDIUM, DifficultyBin.HARD)


def difficulty_bin_for_count(count: int, n_samples: int = DEFAULT_SAMPLES) -> DifficultyBin:
    """
    Bin de dificultad según el número de muestras correctas (Acc@n).

    Con n = 8: Easy >= 7, Medium 2-6, Hard 1, Excluded 0. Para otro n los
    umbrales se generalizan como Easy >= n-1 y Medium 2..n-2.

    Raises:
        ValidationError: Si count no está en [0, n]
    """
    if not 0 <= count <= n_samples:
        raise ValidationError({"count": f"Debe estar en [0, {n_samples}]"})
    if count == 0:
        return DifficultyBin.EXCLUDED
    if count >= n_samples - 1:
        return DifficultyBin.EASY
    if count == 1:
        return DifficultyBin.HARD
    return DifficultyBin.MEDIUM


@dataclass(frozen=True)
class StageSpec:
    """
    Etapa del currículo.

    Attributes:
        stage: Índice de etapa (1..3 en el calendario por defecto)
        mix: Cantidades o proporciones (Easy, Medium, Hard)
        coeffs: (α_t, γ_t) de la etapa
        steps: Pasos de entrenamiento de la etapa
    """

    stage: int
    mix: tuple[float, float, float]
    coeffs: HybridCoeffs
    steps: int = 0

    def __post_init__(self) -> None:
        if self.stage < 1:
            raise ValidationError({"stage": "Debe ser al menos 1"})
        if len(self.mix) != len(TRAINING_BINS) or any(m < 0 for m in self.mix) or sum(self.mix) <= 0:
            raise ValidationError({"mix": "Se esperan 3 proporciones no negativas con suma > 0"})
        if self.steps < 0:
            raise ValidationError({"steps": "No puede ser negativo"})

    @property
    def ratios(self) -> np.ndarray:
        mix = np.asarray(self.mix, dtype=np.float64)
        return mix / mix.sum()


# Mezclas (miles de muestras) y coeficientes del calendario Mode-Balanced
DEFAULT_STAGES: tuple[StageSpec, ...] = (
    StageSpec(stage=1, mix=(2.0, 25.0, 18.0), coeffs=HybridCoeffs(0.85, 0.15)),
    StageSpec(stage=2, mix=(2.0, 25.0, 34.0), coeffs=HybridCoeffs(0.90, 0.10)),
    StageSpec(stage=3, mix=(5.0, 16.0, 40.0), coeffs=HybridCoeffs(0.95, 0.05)),
)


@dataclass(frozen=True, eq=False)
class BinnedInstances:
    """
    Partición del dataset por dificultad.

    Attributes:
        counts: Muestras correctas por posición del dataset
        n_samples: Muestras por instancia usadas en la estimación
    """

    counts: np.ndarray
    n_samples: int = DEFAULT_SAMPLES

    @cached_property
    def labels(self) -> np.ndarray:
        """Bin de cada posición como array de DifficultyBin.value."""
        counts = np.asarray(self.counts)
        codes = np.full(counts.shape, 1)
        codes[counts == 1] = 2
        codes[counts >= self.n_samples - 1] = 0
        codes[counts == 0] = 3
        return np.array([b.value for b in DifficultyBin])[codes]

    def positions(self, difficulty: DifficultyBin) -> np.ndarray:
        return np.flatnonzero(self.labels == difficulty.value)

    def sizes(self) -> dict[DifficultyBin, int]:
        labels = self.labels
        return {b: int(np.sum(labels == b.value)) for b in DifficultyBin}

    @property
    def training_positions(self) -> np.ndarray:
        """Posiciones elegibles para entrenamiento (todo salvo Excluded)."""
        return np.flatnonzero(self.labels != DifficultyBin.EXCLUDED.value)


@dataclass(frozen=True, eq=False)
class TrainingBatch:
    """Lote de entrenamiento: posiciones del dataset, bin de origen y coeficientes."""

    positions: np.ndarray
    bins: np.ndarray
    coeffs: HybridCoeffs
    stage: int
