from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class RewardConfig:
    """
    Pesos de la recompensa con gates (resultado α, CoT β, penalización ordinal γ)
    y pesos estructurales por slot.
    """

    alpha: float = 0.72
    beta: float = 0.28
    gamma_ord: float = 0.25
    format_penalty: float = -1.0
    w_decision: float = 10.0
    w_trace: float = 10.0
    w_final: float = 5.0

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class RewardBreakdown:
    i_fmt: int
    i_cst: int
    i_logic: int
    y_hat: int | None
    r_res: float
    r_cot: int
    total: float


@dataclass(frozen=True)
class WeightMask:
    """Pesos de ventaja por SlotIndex: decisión, 5 checkpoints, final."""

    weights: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)
