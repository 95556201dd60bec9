from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any

from rest_framework.exceptions import ValidationError

import numpy as np
from scipy.special import expit, logsumexp

PROBABILITY_TOLERANCE = 1e-12

# Familia de un solo pico: σ = SIGMA_MIN + SIGMA_SPAN·sigmoid(ρ), acotada por debajo
# de la distancia entre modos del objetivo bimodal
SIGMA_MIN = 1.0
SIGMA_SPAN = 19.0


class Direction(str, Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


@dataclass(frozen=True, eq=False)
class Categorical:
    """Distribución sobre un espacio finito de resultados."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        if self.probs.ndim != 1 or self.probs.size == 0 or np.any(self.probs < 0.0):
            raise ValidationError({"probs": "Distribución inválida"})
        if abs(float(self.probs.sum()) - 1.0) > PROBABILITY_TOLERANCE:
            raise ValidationError({"probs": "Las probabilidades deben sumar 1"})

    @classmethod
    def from_weights(cls, weights: np.ndarray) -> Categorical:
        weights = np.asarray(weights, dtype=np.float64)
        return cls(probs=weights / weights.sum())

    def __len__(self) -> int:
        return int(self.probs.size)


@dataclass(frozen=True, eq=False)
class GibbsSpec:
    """
    Política óptima de Gibbs π*(x) = exp(R(x)/η) / Z.

    Attributes:
        rewards: Recompensa R(x) por resultado
        temperature: Temperatura de Gibbs η (> 0)
    """

    rewards: np.ndarray
    temperature: float

    def __post_init__(self) -> None:
        if not self.temperature > 0.0:
            raise ValidationError({"temperature": "Debe ser mayor que 0"})
        if self.rewards.ndim != 1 or not np.all(np.isfinite(self.rewards)):
            raise ValidationError({"rewards": "Se esperaba un vector finito"})

    @cached_property
    def log_partition(self) -> float:
        """ln Z = ln Σ exp(R/η), calculado con logsumexp."""
        return float(logsumexp(self.rewards / self.temperature))

    @property
    def partition(self) -> float:
        return float(np.exp(self.log_partition))


@dataclass(frozen=True)
class BumpParams:
    """Parámetros (μ, ρ) de la familia de un solo pico."""

    mu: float
    rho: float

    @property
    def sigma(self) -> float:
        return float(SIGMA_MIN + SIGMA_SPAN * expit(self.rho))


@dataclass(frozen=True)
class FitTracePoint:
    step: int
    loss: float
    mu: float
    sigma: float


@dataclass(frozen=True)
class FitResult:
    """
    Resultado de un ajuste de divergencia.

    Attributes:
        direction: forward (KL(p‖q)) o reverse (KL(q‖p))
        seed: Semilla del punto inicial
        params: Parámetros finales
        loss: Divergencia final
        mode_masses: Masa ajustada en cada región de modo del objetivo
        trace: Traza periódica del ajuste
    """

    direction: Direction
    seed: int
    params: BumpParams
    loss: float
    mode_masses: tuple[float, ...]
    trace: tuple[FitTracePoint, ...] = field(default_factory=tuple)

    @property
    def minor_mode_mass(self) -> float:
        return min(self.mode_masses)

    def as_dict(self) -> dict[str, Any]:
        return {
            "direction": self.direction.value,
            "seed": self.seed,
            "mu": self.params.mu,
            "sigma": self.params.sigma,
            "loss": self.loss,
            "mode_masses": list(self.mode_masses),
        }


@dataclass(frozen=True)
class KlLabReport:
    """Informe completo: residuos máximos de las identidades y tabla de masas por modo."""

    sft_residual_max: float
    rl_residual_max: float
    gibbs_minimizer_holds: bool
    mode_covering_holds: bool
    mode_seeking_holds: bool
    fits: tuple[FitResult, ...]

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["fits"] = [fit.as_dict() for fit in self.fits]
        return data
