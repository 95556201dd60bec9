from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Any

from rest_framework.exceptions import ValidationError

import numpy as np

from apps.grammar.domain import Trajectory
from apps.policy.domain import SampledTrajectory

if TYPE_CHECKING:
    from apps.policy.domain import PolicyParams

COEFF_TOLERANCE = 1e-9


class OptimizerName(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class OptimConfig:
    """
    Hiperparámetros de la capa de pérdidas y del optimizador.

    Attributes:
        clip_ratio: ε del surrogate recortado, en (0, 1)
        kl_coeff: β_KL de la penalización KL(π_θ‖π_ref)
        learning_rate: Tasa de aprendizaje (1e-2 a escala de escritorio)
        group_size: Rollouts por instancia (G >= 2)
        adv_epsilon: ε de la normalización de ventajas
        optimizer: sgd o adam
        beta1, beta2, eps: Momentos de Adam
        temperature: Temperatura de rollout y pérdida
        weight_decay: Decaimiento desacoplado (estilo AdamW)
    """

    clip_ratio: float = 0.2
    kl_coeff: float = 0.001
    learning_rate: float = 1e-2
    group_size: int = 8
    adv_epsilon: float = 1e-8
    optimizer: OptimizerName = OptimizerName.ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    temperature: float = 1.0
    weight_decay: float = 0.0

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["optimizer"] = self.optimizer.value
        return data


@dataclass(frozen=True)
class HybridCoeffs:
    """Coeficientes (α_t, γ_t) del objetivo híbrido; α_t + γ_t = 1."""

    alpha_t: float
    gamma_t: float

    def __post_init__(self) -> None:
        if self.alpha_t < 0 or self.gamma_t < 0:
            raise ValidationError({"coeffs": "α_t y γ_t deben ser no negativos"})
        if abs(self.alpha_t + self.gamma_t - 1.0) > COEFF_TOLERANCE:
            raise ValidationError({"coeffs": "α_t + γ_t debe ser 1"})


@dataclass(frozen=True, eq=False)
class GroupRollout:
    """
    Rollouts agrupados de un batch de instancias.

    Attributes:
        features: Features (B, D)
        tokens: Tokens de slot (B, G, 7)
        logprobs: log π_ref de cada token (B, G, 7)
        rewards: Recompensas (B, G)
        advantages: Ventajas normalizadas por grupo (B, G)
    """

    features: np.ndarray
    tokens: np.ndarray
    logprobs: np.ndarray
    rewards: np.ndarray
    advantages: np.ndarray

    def __post_init__(self) -> None:
        batch, group = self.rewards.shape
        if self.tokens.shape[:2] != (batch, group) or self.advantages.shape != (batch, group):
            raise ValidationError({"rollouts": "Longitudes de grupo inconsistentes"})
        if self.features.shape[0] != batch:
            raise ValidationError({"rollouts": "Una fila de features por grupo"})

    def __len__(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def group_size(self) -> int:
        return int(self.rewards.shape[1])

    @cached_property
    def samples(self) -> tuple[tuple[SampledTrajectory, ...], ...]:
        """Vista por grupo como SampledTrajectory."""
        return tuple(
            tuple(
                SampledTrajectory(
                    trajectory=Trajectory.from_slot_tokens(self.tokens[b, g].tolist()),
                    slot_logprobs=self.logprobs[b, g],
                )
                for g in range(self.group_size)
            )
            for b in range(len(self))
        )


@dataclass(frozen=True, eq=False)
class ExpertBatch:
    """Batch SFT: features (N, D) y tokens expertos (N, 7)."""

    features: np.ndarray
    tokens: np.ndarray

    def __post_init__(self) -> None:
        if self.features.shape[0] == 0:
            raise ValidationError({"expert_batch": "El batch no puede estar vacío"})
        if self.tokens.shape != (self.features.shape[0], 7):
            raise ValidationError({"expert_batch": "Se esperaban tokens (N, 7)"})

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True, eq=False)
class HybridStepOutcome:
    params: PolicyParams
    grpo_loss: float | None
    sft_loss: float | None
    total_loss: float
