from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Any

from rest_framework.exceptions import ValidationError

import numpy as np

from apps.grammar.domain import NUM_SLOTS
from apps.optim.domain import ExpertBatch, GroupRollout, HybridCoeffs, HybridStepOutcome, OptimConfig
from apps.optim.exceptions import NumericAbortError
from apps.optim.optimizers import build_optimizer
from apps.optim.serializers import OptimConfigSerializer
from apps.policy.services import (
    backprop_logit_grads,
    gather_log_probs,
    sample_slot_tokens_batch,
    slot_log_probs_batch,
)
from apps.rewards.services import score_slot_tokens_service

if TYPE_CHECKING:
    from apps.optim.optimizers import Optimizer
    from apps.policy.domain import ParamGradient, PolicyParams
    from apps.rewards.domain import RewardConfig, WeightMask

logger = logging.getLogger(__name__)


def build_optim_config_service(data: dict[str, Any] | None = None) -> OptimConfig:
    """
    Valida y construye un OptimConfig.

    Raises:
        ValidationError: Si clip_ratio no está en (0, 1), kl_coeff < 0 o group_size < 2
    """
    serializer = OptimConfigSerializer(data=data or {})
    serializer.is_valid(raise_exception=True)
    return serializer.to_domain()


def group_advantages_service(rewards: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """
    Ventajas relativas al grupo: Â_k = (R_k − mean(R)) / (std(R) + eps).

    Usa la desviación típica poblacional; un grupo sin varianza da ventajas nulas.

    Args:
        rewards: Recompensas (G,) o (B, G); el grupo es el último eje
        eps: Estabilizador del denominador

    Returns:
        Ventajas con la forma de `rewards`

    Raises:
        ValidationError: Si G < 2
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim == 0 or rewards.shape[-1] < 2:
        raise ValidationError({"rewards": "Un grupo necesita al menos 2 rollouts"})
    centred = rewards - rewards.mean(axis=-1, keepdims=True)
    return centred / (rewards.std(axis=-1, keepdims=True) + eps)


def rollout_groups_service(
    params: PolicyParams,
    features: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    reward_cfg: RewardConfig,
    cfg: OptimConfig,
) -> GroupRollout:
    """
    Muestrea G trayectorias por instancia, las puntúa y normaliza las ventajas.

    Args:
        params: Política de rollout (será π_ref del paso)
        features: Features (B, D)
        labels: Etiquetas verdaderas (B,)
        rng: Generador aleatorio
        reward_cfg: Configuración de recompensa
        cfg: Configuración de optimización (G y temperatura)

    Returns:
        GroupRollout
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    tokens, logprobs = sample_slot_tokens_batch(params, features, rng, cfg.temperature, cfg.group_size)
    rewards = score_slot_tokens_service(tokens, np.asarray(labels)[:, None], reward_cfg)
    return GroupRollout(
        features=features,
        tokens=tokens,
        logprobs=logprobs,
        rewards=rewards,
        advantages=group_advantages_service(rewards, cfg.adv_epsilon),
    )


def clipped_surrogate(
    ratio: np.ndarray,
    advantage: np.ndarray,
    clip_ratio: float,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Surrogate recortado min(r·a, clip(r, 1−ε, 1+ε)·a).

    Returns:
        Tupla (surrogate, activo) donde `activo` marca los términos cuyo mínimo es
        la rama sin recortar (los únicos con gradiente)
    """
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    surrogate = np.minimum(ratio * advantage, clipped * advantage)
    active = np.where(advantage >= 0, ratio <= 1.0 + clip_ratio, ratio >= 1.0 - clip_ratio)
    return surrogate, active


def slot_kl_from_log_probs(log_p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """KL(p‖q) exacta por fila a partir de log-probabilidades (..., V)."""
    return np.maximum(np.sum(np.exp(log_p) * (log_p - log_q), axis=-1), 0.0)


def grpo_loss_and_grad_service(
    params: PolicyParams,
    ref_params: PolicyParams,
    rollouts: GroupRollout,
    mask: WeightMask,
    cfg: OptimConfig,
) -> tuple[float, ParamGradient]:
    """
    Pérdida GRPO con ventajas ponderadas por slot y penalización KL, y su gradiente.

    Por trayectoria y slot: r_s = π_θ/π_ref, a_s = mask[s]·Â y
    surrogate = min(r_s·a_s, clip(r_s)·a_s). La pérdida es
    −mean(surrogate) + β_KL·mean_s KL(π_θ‖π_ref).

    Args:
        params: Parámetros actuales θ
        ref_params: Snapshot π_ref con el que se muestrearon los rollouts
        rollouts: Rollouts agrupados
        mask: Pesos de ventaja por slot
        cfg: Configuración de optimización

    Returns:
        Tupla (loss, gradiente)

    Raises:
        ValidationError: Si π_ref asigna probabilidad 0 a un token muestreado
    """
    temperature = cfg.temperature
    log_probs = slot_log_probs_batch(params, rollouts.features, temperature)
    ref_log_probs = slot_log_probs_batch(ref_params, rollouts.features, temperature)
    lp_new = gather_log_probs(log_probs, rollouts.tokens)
    lp_ref = gather_log_probs(ref_log_probs, rollouts.tokens)
    if np.any(np.exp(lp_ref) == 0.0):
        raise ValidationError({"ref_params": "π_ref asigna probabilidad 0 a un token muestreado"})

    ratio = np.exp(lp_new - lp_ref)
    weighted = mask.as_array()[None, None, :] * rollouts.advantages[:, :, None]
    surrogate, active = clipped_surrogate(ratio, weighted, cfg.clip_ratio)
    kl = np.stack(
        [slot_kl_from_log_probs(lp, lq) for lp, lq in zip(log_probs, ref_log_probs, strict=True)], axis=-1
    )
    loss = float(-surrogate.mean() + cfg.kl_coeff * kl.mean())

    # ∂L/∂log π_θ(token) por término del surrogate
    coef = -(weighted * ratio * active) / surrogate.size
    logit_grads = []
    for slot in range(NUM_SLOTS):
        log_p = log_probs[slot]
        p = np.exp(log_p)
        onehot = np.eye(p.shape[1])[rollouts.tokens[:, :, slot]]
        c = coef[:, :, slot]
        g = np.einsum("bg,bgv->bv", c, onehot) - c.sum(axis=1)[:, None] * p
        g_kl = p * (log_p - ref_log_probs[slot] - kl[:, slot][:, None])
        logit_grads.append((g + cfg.kl_coeff * g_kl / kl.size) / temperature)
    return loss, backprop_logit_grads(params, rollouts.features, logit_grads)


def sft_loss_and_grad_service(
    params: PolicyParams,
    expert_batch: ExpertBatch,
    temperature: float = 1.0,
) -> tuple[float, ParamGradient]:
    """
    Pérdida SFT (KL directa): media sobre instancias y slots de −log π_θ(token experto).

    Returns:
        Tupla (loss, gradiente)
    """
    log_probs = slot_log_probs_batch(params, expert_batch.features, temperature)
    lp = gather_log_probs(log_probs, expert_batch.tokens)
    logit_grads = []
    for slot, log_p in enumerate(log_probs):
        onehot = np.eye(log_p.shape[1])[expert_batch.tokens[:, slot]]
        logit_grads.append(-(onehot - np.exp(log_p)) / (temperature * lp.size))
    return float(-lp.mean()), backprop_logit_grads(params, expert_batch.features, logit_grads)


def hybrid_step_service(
    params: PolicyParams,
    ref_params: PolicyParams,
    rl_batch: GroupRollout | None,
    sft_batch: ExpertBatch | None,
    coeffs: HybridCoeffs,
    mask: WeightMask,
    cfg: OptimConfig,
    optimizer: Optimizer | None = None,
) -> HybridStepOutcome:
    """
    Un paso del optimizador sobre α_t·L_GRPO + γ_t·L_SFT.

    Con γ_t = 0 no se evalúa el término SFT y con α_t = 0 no se evalúa el GRPO,
    de modo que los casos degenerados coinciden bit a bit con los pasos puros.

    Args:
        params: Parámetros actuales
        ref_params: Snapshot del rollout
        rl_batch: Rollouts (requeridos si α_t > 0)
        sft_batch: Batch experto (requerido si γ_t > 0)
        coeffs: (α_t, γ_t)
        mask: Pesos de ventaja por slot
        cfg: Configuración de optimización
        optimizer: Optimizador con estado; si es None se crea uno nuevo

    Returns:
        HybridStepOutcome con los nuevos parámetros y las pérdidas

    Raises:
        ValidationError: Si falta el batch de un término con coeficiente > 0
        NumericAbortError: Si la pérdida, el gradiente o los parámetros no son finitos
    """
    combined: ParamGradient | None = None
    total_loss = 0.0
    grpo_loss = sft_loss = None
    try:
        if coeffs.alpha_t > 0:
            if rl_batch is None:
                raise ValidationError({"rl_batch": "Requerido con alpha_t > 0"})
            grpo_loss, grpo_grad = grpo_loss_and_grad_service(params, ref_params, rl_batch, mask, cfg)
            total_loss += coeffs.alpha_t * grpo_loss
            combined = grpo_grad.scaled(coeffs.alpha_t)
        if coeffs.gamma_t > 0:
            if sft_batch is None:
                raise ValidationError({"sft_batch": "Requerido con gamma_t > 0"})
            sft_loss, sft_grad = sft_loss_and_grad_service(params, sft_batch)
            total_loss += coeffs.gamma_t * sft_loss
            sft_term = sft_grad.scaled(coeffs.gamma_t)
            combined = sft_term if combined is None else combined + sft_term
    except ValidationError as exc:
        if not isinstance(exc.detail, dict) or "logits" not in exc.detail:
            raise
        logger.error("numeric abort: non-finite logits")
        raise NumericAbortError("Logits no finitos") from exc

    grad = combined.flatten() if combined is not None else np.zeros(params.num_parameters)
    if not np.isfinite(total_loss) or not np.all(np.isfinite(grad)):
        logger.error("numeric abort grpo_loss=%s sft_loss=%s", grpo_loss, sft_loss)
        raise NumericAbortError(f"Pérdida o gradiente no finitos (grpo={grpo_loss}, sft={sft_loss})")

    optimizer = optimizer or build_optimizer(cfg)
    theta = optimizer.step(params.flatten(), grad)
    if not np.all(np.isfinite(theta)):
        logger.error("numeric abort: non-finite parameters after update")
        raise NumericAbortError("Parámetros no finitos tras la actualización")

    logger.debug(
        "hybrid step alpha_t=%.4f gamma_t=%.4f grpo_loss=%s sft_loss=%s total_loss=%.6f",
        coeffs.alpha_t,
        coeffs.gamma_t,
        grpo_loss,
        sft_loss,
        total_loss,
    )
    return HybridStepOutcome(
        params=params.with_flat(theta),
        grpo_loss=grpo_loss,
        sft_loss=sft_loss,
        total_loss=total_loss,
    )
