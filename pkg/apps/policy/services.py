from __future__ import annotations

import json
import logging
from typing import TYPE_CHECKING

from rest_framework.exceptions import ValidationError

import numpy as np
from scipy.special import entr, log_softmax, softmax

from apps.grammar.domain import NUM_SLOTS, RELEVANCE_LABELS, SLOT_VOCAB_SIZES, Trajectory
from apps.policy.domain import (
    Capacity,
    ParamGradient,
    PolicyParams,
    SampledTrajectory,
    SlotDistribution,
)
from apps.policy.serializers import PolicyParamsSerializer, params_to_payload

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

logger = logging.getLogger(__name__)

DEFAULT_STUDENT_DIM = 4
_LABEL_VALUES = np.asarray(RELEVANCE_LABELS, dtype=np.float64)


def _validate_temperature(temperature: float) -> None:
    if not temperature > 0.0:
        raise ValidationError({"temperature": "Debe ser mayor que 0"})


def init_params_service(
    feature_dim: int,
    capacity: Capacity | str = Capacity.TEACHER,
    student_dim: int = DEFAULT_STUDENT_DIM,
    seed: int = 0,
    init_scale: float = 0.0,
) -> PolicyParams:
    """
    Inicializa los parámetros de la política.

    Con `init_scale = 0` la política es uniforme en todos los slots. El student
    recibe una proyección gaussiana fija (D', D) escalada por 1/sqrt(D).

    Args:
        feature_dim: Dimensión D de las features
        capacity: teacher o student
        student_dim: D' del student (< D)
        seed: Semilla de la proyección y de los pesos
        init_scale: Desviación típica de los pesos iniciales

    Returns:
        PolicyParams

    Raises:
        ValidationError: Si D < 1 o D' no está en [1, D)
    """
    capacity = Capacity(capacity)
    if feature_dim < 1:
        raise ValidationError({"feature_dim": "Debe ser al menos 1"})
    rng = np.random.default_rng([seed, 0])
    projection = None
    input_dim = feature_dim
    if capacity is Capacity.STUDENT:
        if not 1 <= student_dim < feature_dim:
            raise ValidationError({"student_dim": f"Debe estar en [1, {feature_dim})"})
        projection = rng.normal(size=(student_dim, feature_dim)) / np.sqrt(feature_dim)
        input_dim = student_dim
    weights = tuple(init_scale * rng.normal(size=(size, input_dim)) for size in SLOT_VOCAB_SIZES)
    biases = tuple(np.zeros(size) for size in SLOT_VOCAB_SIZES)
    return PolicyParams(weights=weights, biases=biases, capacity=capacity, projection=projection)


def project(params: PolicyParams, features: np.ndarray) -> np.ndarray:
    """Features (..., D) a la entrada de las matrices (..., D_in)."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != params.feature_dim:
        raise ValidationError({"features": f"Dimensión {features.shape[-1]} != {params.feature_dim}"})
    if params.projection is None:
        return features
    return features @ params.projection.T


def slot_logits_batch(params: PolicyParams, features: np.ndarray, temperature: float = 1.0) -> list[np.ndarray]:
    """
    Logits escalados por la temperatura para cada slot.

    Returns:
        7 arrays de forma (..., V_s)

    Raises:
        ValidationError: Si algún logit no es finito
    """
    _validate_temperature(temperature)
    inputs = project(params, features)
    logits = [(inputs @ w.T + b) / temperature for w, b in zip(params.weights, params.biases, strict=True)]
    for slot, values in enumerate(logits):
        if not np.all(np.isfinite(values)):
            raise ValidationError({"logits": f"Logits no finitos en el slot {slot}"})
    return logits


def slot_log_probs_batch(params: PolicyParams, features: np.ndarray, temperature: float = 1.0) -> list[np.ndarray]:
    """log π_θ por slot: 7 arrays (..., V_s)."""
    return [log_softmax(z, axis=-1) for z in slot_logits_batch(params, features, temperature)]


def slot_probs_batch(params: PolicyParams, features: np.ndarray, temperature: float = 1.0) -> list[np.ndarray]:
    """π_θ por slot: 7 arrays (..., V_s)."""
    return [softmax(z, axis=-1) for z in slot_logits_batch(params, features, temperature)]


def slot_distribution_service(
    params: PolicyParams,
    features: np.ndarray,
    slot: int,
    temperature: float = 1.0,
) -> SlotDistribution:
    """
    Distribución de un slot: softmax((W_s·x + b_s) / T).

    Args:
        params: Parámetros de la política
        features: Vector de features (D,)
        slot: SlotIndex en [0, 6]
        temperature: Temperatura (> 0)

    Returns:
        SlotDistribution

    Raises:
        ValidationError: Si T <= 0, el slot no existe o los logits no son finitos
    """
    if not 0 <= slot < NUM_SLOTS:
        raise ValidationError({"slot": f"Slot {slot} fuera de [0, 6]"})
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise ValidationError({"features": "Se esperaba un vector"})
    return SlotDistribution(probs=slot_probs_batch(params, features, temperature)[slot])


def gather_log_probs(log_probs: Sequence[np.ndarray], tokens: np.ndarray) -> np.ndarray:
    """
    log π del token elegido en cada slot.

    Args:
        log_probs: 7 arrays (B, V_s)
        tokens: Tokens (B, 7) o (B, G, 7)

    Returns:
        Array con la forma de `tokens`
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    grouped = tokens.ndim == 3
    out = np.empty(tokens.shape, dtype=np.float64)
    for slot, lp in enumerate(log_probs):
        index = tokens[..., slot]
        if grouped:
            out[..., slot] = np.take_along_axis(lp, index, axis=1)
        else:
            out[:, slot] = np.take_along_axis(lp, index[:, None], axis=1)[:, 0]
    return out


def sample_slot_tokens_batch(
    params: PolicyParams,
    features: np.ndarray,
    rng: np.random.Generator,
    temperature: float = 1.0,
    group_size: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Muestrea `group_size` trayectorias por instancia, slot a slot (CDF inversa).

    Args:
        params: Parámetros de la política
        features: Features (B, D)
        rng: Generador aleatorio
        temperature: Temperatura de muestreo
        group_size: Muestras por instancia (G)

    Returns:
        Tupla (tokens, log_probs), ambos de forma (B, G, 7)
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    log_probs = slot_log_probs_batch(params, features, temperature)
    batch = features.shape[0]
    tokens = np.empty((batch, group_size, NUM_SLOTS), dtype=np.int64)
    for slot, lp in enumerate(log_probs):
        cdf = np.cumsum(np.exp(lp), axis=-1)
        draws = rng.random((batch, group_size))
        picked = (draws[:, :, None] >= cdf[:, None, :]).sum(axis=-1)
        tokens[:, :, slot] = np.minimum(picked, lp.shape[-1] - 1)
    return tokens, gather_log_probs(log_probs, tokens)


def sample_trajectory_service(
    params: PolicyParams,
    features: np.ndarray,
    rng: np.random.Generator,
    temperature: float = 1.0,
) -> SampledTrajectory:
    """
    Muestrea una trayectoria de π_θ(·|x), cada slot de forma independiente.

    Returns:
        SampledTrajectory con la trayectoria de plantilla y log π de cada slot
    """
    features = np.asarray(features, dtype=np.float64)
    tokens, log_probs = sample_slot_tokens_batch(params, features[None, :], rng, temperature)
    return SampledTrajectory(
        trajectory=Trajectory.from_slot_tokens(tokens[0, 0].tolist()),
        slot_logprobs=log_probs[0, 0],
    )


def log_prob_service(
    params: PolicyParams,
    features: np.ndarray,
    trajectory: Trajectory,
    temperature: float = 1.0,
) -> np.ndarray:
    """log π_θ de los 7 valores de slot de la trayectoria."""
    tokens = np.asarray([trajectory.slot_tokens()], dtype=np.int64)
    log_probs = slot_log_probs_batch(params, np.asarray(features, dtype=np.float64)[None, :], temperature)
    return gather_log_probs(log_probs, tokens)[0]


def slot_entropies_batch(params: PolicyParams, features: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Entropía de Shannon (nats) por instancia y slot, forma (B, 7)."""
    probs = slot_probs_batch(params, features, temperature)
    return np.stack([entr(p).sum(axis=-1) for p in probs], axis=-1)


def entropy_service(params: PolicyParams, features_batch: np.ndarray, temperature: float = 1.0) -> float:
    """
    Entropía media sobre instancias y slots.

    Raises:
        ValidationError: Si el batch está vacío
    """
    features_batch = np.atleast_2d(np.asarray(features_batch, dtype=np.float64))
    if features_batch.shape[0] == 0:
        raise ValidationError({"features_batch": "El batch no puede estar vacío"})
    return float(slot_entropies_batch(params, features_batch, temperature).mean())


def weighted_expected_score_service(dist: SlotDistribution | np.ndarray) -> float:
    """
    Score esperado ponderado s = Σ k·P(k|x) sobre las 5 etiquetas.

    Raises:
        ValidationError: Si el vocabulario no tiene 5 entradas
    """
    probs = dist.probs if isinstance(dist, SlotDistribution) else np.asarray(dist, dtype=np.float64)
    if probs.shape != (len(RELEVANCE_LABELS),):
        raise ValidationError({"dist": "Se esperaba una distribución sobre 5 etiquetas"})
    return float(probs @ _LABEL_VALUES)


def expected_scores_batch(decision_probs: np.ndarray) -> np.ndarray:
    """Scores esperados de un batch de distribuciones de decisión (B, 5)."""
    return decision_probs @ _LABEL_VALUES


def backprop_logit_grads(
    params: PolicyParams,
    features: np.ndarray,
    logit_grads: Sequence[np.ndarray],
) -> ParamGradient:
    """
    Propaga gradientes respecto a los logits a través del mapa lineal.

    Args:
        params: Parámetros (para la proyección)
        features: Features (B, D)
        logit_grads: 7 arrays (B, V_s) con ∂L/∂logits

    Returns:
        ParamGradient con dW_s = G_s^T·X y db_s = Σ_b G_s
    """
    inputs = project(params, np.atleast_2d(features))
    return ParamGradient(
        weights=tuple(g.T @ inputs for g in logit_grads),
        biases=tuple(g.sum(axis=0) for g in logit_grads),
    )


def grad_log_prob_service(
    params: PolicyParams,
    features: np.ndarray,
    trajectory: Trajectory,
    temperature: float = 1.0,
) -> ParamGradient:
    """
    Gradiente exacto de Σ_s log π_θ(token_s) respecto a θ.

    Por slot, ∂log π/∂logits = (onehot(token) − probs) / T.
    """
    features = np.asarray(features, dtype=np.float64)[None, :]
    tokens = trajectory.slot_tokens()
    probs = slot_probs_batch(params, features, temperature)
    logit_grads = []
    for slot, p in enumerate(probs):
        g = -p.copy()
        g[0, tokens[slot]] += 1.0
        logit_grads.append(g / temperature)
    return backprop_logit_grads(params, features, logit_grads)


def save_params_service(params: PolicyParams, path: Path) -> Path:
    """Escribe los parámetros en JSON versionado."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(params_to_payload(params)), encoding="utf-8")
    logger.info("policy params written path=%s capacity=%s", path, params.capacity.value)
    return path


def load_params_service(path: Path) -> PolicyParams:
    """
    Lee un fichero de parámetros.

    Raises:
        ValidationError: Si el formato, la versión o las formas no son válidos
    """
    serializer = PolicyParamsSerializer(data=json.loads(path.read_text(encoding="utf-8")))
    serializer.is_valid(raise_exception=True)
    return serializer.to_domain()
