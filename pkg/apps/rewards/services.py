from __future__ import annotations

import json
from typing import TYPE_CHECKING, Any

import numpy as np

from apps.grammar.domain import NUM_SLOTS, CheckpointAnswer, validate_label
from apps.grammar.exceptions import FormatError
from apps.grammar.services import parse_trajectory_service
from apps.rewards.domain import RewardBreakdown, RewardConfig, WeightMask
from apps.rewards.serializers import RewardBreakdownSerializer, RewardConfigSerializer

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence
    from pathlib import Path

    from apps.grammar.domain import Trajectory

# Índices de vocabulario de los checkpoints (ver CHECKPOINT_VOCAB)
_YES, _NO = 0, 1


def build_reward_config_service(data: dict[str, Any] | None = None) -> RewardConfig:
    """
    Valida y construye un RewardConfig.

    Args:
        data: Campos del config (los ausentes toman el valor por defecto)

    Returns:
        RewardConfig validado

    Raises:
        ValidationError: Si alpha + beta != 1, gamma_ord < 0 o algún w <= 0
    """
    serializer = RewardConfigSerializer(data=data or {})
    serializer.is_valid(raise_exception=True)
    return serializer.to_domain()


def consistency_gate_service(trajectory: Trajectory) -> int:
    """I_cst: 1 si y_dec == y_final."""
    return int(trajectory.y_dec == trajectory.y_final)


def infer_label_service(checkpoints: Sequence[CheckpointAnswer | str]) -> int:
    """
    Infiere ŷ a partir de los checkpoints de los steps 4-8.

    Árbol de decisión: irrelevant=Yes -> 0; weak=Yes -> 1; strong!=Yes -> 1;
    premium!=Yes -> 2; official!=Yes -> 3; si no, 4.

    Args:
        checkpoints: (irrelevant, weak, strong, premium, official)

    Returns:
        Etiqueta inferida en [0, 4]
    """
    irrelevant, weak, strong, premium, official = (CheckpointAnswer(c) for c in checkpoints)
    yes = CheckpointAnswer.YES
    if irrelevant is yes:
        return 0
    if weak is yes or strong is not yes:
        return 1
    if premium is not yes:
        return 2
    if official is not yes:
        return 3
    return 4


def logic_gate_service(trajectory: Trajectory, y_gt: int) -> tuple[int, int]:
    """
    Interruptor lógico: I_logic = 1 solo si ŷ == y_dec == y_gt.

    Returns:
        Tupla (I_logic, ŷ)
    """
    y_hat = infer_label_service(trajectory.checkpoints)
    return int(y_hat == trajectory.y_dec == y_gt), y_hat


def ordinal_result_reward_service(y_pred: int, y_gt: int, cfg: RewardConfig) -> float:
    """R_res: 1.0 si acierta; si no, -γ·|y_pred - y_gt|."""
    y_pred = validate_label(y_pred, "y_pred")
    y_gt = validate_label(y_gt, "y_gt")
    if y_pred == y_gt:
        return 1.0
    return -cfg.gamma_ord * abs(y_pred - y_gt)


def score_trajectory_service(trajectory: Trajectory, y_gt: int, cfg: RewardConfig) -> RewardBreakdown:
    """
    Recompensa con gates de una trayectoria ya parseada (I_fmt = 1).

    Args:
        trajectory: Trayectoria válida
        y_gt: Etiqueta verdadera
        cfg: Configuración de recompensa

    Returns:
        RewardBreakdown completo
    """
    y_gt = validate_label(y_gt, "y_gt")
    i_cst = consistency_gate_service(trajectory)
    i_logic, y_hat = logic_gate_service(trajectory, y_gt)
    r_res = ordinal_result_reward_service(trajectory.y_dec, y_gt, cfg)
    r_cot = i_logic
    total = cfg.alpha * r_res + cfg.beta * r_cot if i_cst and i_logic else 0.0
    return RewardBreakdown(
        i_fmt=1,
        i_cst=i_cst,
        i_logic=i_logic,
        y_hat=y_hat,
        r_res=r_res,
        r_cot=r_cot,
        total=total,
    )


def total_reward_service(text: str | bytes, y_gt: int, cfg: RewardConfig) -> RewardBreakdown:
    """
    R(τ) con gates sobre el texto de una trayectoria.

    Un fallo de formato devuelve `format_penalty` con todos los gates a 0;
    los fallos de consistencia o lógica anulan la recompensa (0).

    Args:
        text: Texto de la trayectoria
        y_gt: Etiqueta verdadera
        cfg: Configuración de recompensa

    Returns:
        RewardBreakdown
    """
    try:
        trajectory = parse_trajectory_service(text)
    except FormatError:
        return RewardBreakdown(
            i_fmt=0,
            i_cst=0,
            i_logic=0,
            y_hat=None,
            r_res=0.0,
            r_cot=0,
            total=cfg.format_penalty,
        )
    return score_trajectory_service(trajectory, y_gt, cfg)


def infer_labels_batch(checkpoint_tokens: np.ndarray) -> np.ndarray:
    """Versión vectorizada de infer_label sobre índices (0 = Yes, 1 = No), forma (..., 5)."""
    yes = checkpoint_tokens == _YES
    irrelevant, weak, strong, premium, official = (yes[..., k] for k in range(5))
    return np.select(
        [irrelevant, weak | ~strong, ~premium, ~official],
        [0, 1, 2, 3],
        default=4,
    )


def gate_mask_batch(slot_tokens: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """
    Máscara booleana de trayectorias correctas: todos los gates pasan y y_dec == y_gt.

    Args:
        slot_tokens: Tokens de slot, forma (..., 7)
        labels: Etiquetas verdaderas con la forma de los ejes iniciales

    Returns:
        Array booleano
    """
    decision = slot_tokens[..., 0]
    final = slot_tokens[..., NUM_SLOTS - 1]
    y_hat = infer_labels_batch(slot_tokens[..., 1:6])
    return (decision == final) & (y_hat == decision) & (decision == labels)


def score_slot_tokens_service(
    slot_tokens: np.ndarray,
    labels: np.ndarray,
    cfg: RewardConfig,
) -> np.ndarray:
    """
    R(τ) vectorizado para trayectorias de plantilla (siempre I_fmt = 1).

    Coincide exactamente con total_reward_service sobre el texto renderizado.

    Args:
        slot_tokens: Tokens de slot, forma (..., 7)
        labels: Etiquetas verdaderas, forma (...)
        cfg: Configuración de recompensa

    Returns:
        Recompensas con la forma de `labels`
    """
    slot_tokens = np.asarray(slot_tokens)
    labels = np.broadcast_to(np.asarray(labels), slot_tokens.shape[:-1])
    passed = gate_mask_batch(slot_tokens, labels)
    # Con los gates en 1, y_dec == y_gt y por tanto r_res = 1 y r_cot = 1
    return np.where(passed, cfg.alpha * 1.0 + cfg.beta * 1, 0.0)


def weight_mask_service(cfg: RewardConfig) -> WeightMask:
    """Máscara de ventajas por slot: (w_decision, 5 x w_trace, w_final)."""
    return WeightMask(weights=(cfg.w_decision, *([cfg.w_trace] * 5), cfg.w_final))


def write_reward_audit_service(path: Path, breakdowns: Iterable[RewardBreakdown]) -> int:
    """
    Escribe un registro JSONL por trayectoria para auditoría.

    Returns:
        Número de registros escritos
    """
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for breakdown in breakdowns:
            record = RewardBreakdownSerializer(breakdown).data
            handle.write(json.dumps(dict(record), sort_keys=True) + "\n")
            count += 1
    return count


def read_reward_audit_service(path: Path) -> list[RewardBreakdown]:
    """Lee un fichero de auditoría JSONL y valida cada registro."""
    breakdowns = []
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            serializer = RewardBreakdownSerializer(data=json.loads(line))
            serializer.is_valid(raise_exception=True)
            breakdowns.append(serializer.to_domain())
    return breakdowns
