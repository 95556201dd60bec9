from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Any

from rest_framework.exceptions import ValidationError

import numpy as np

from apps.curriculum.domain import (
    DEFAULT_SAMPLES,
    DEFAULT_STAGES,
    TRAINING_BINS,
    BinnedInstances,
    DifficultyBin,
    StageSpec,
    TrainingBatch,
    difficulty_bin_for_count,
)
from apps.curriculum.serializers import StageSpecSerializer
from apps.policy.services import sample_slot_tokens_batch
from apps.rewards.services import gate_mask_batch

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

    from apps.optim.domain import HybridCoeffs
    from apps.policy.domain import PolicyParams
    from apps.world.domain import Dataset, Instance

logger = logging.getLogger(__name__)

# Instancias por bloque al estimar la dificultad de un dataset
ESTIMATION_CHUNK = 512


def build_stage_specs_service(data: Sequence[dict[str, Any]] | None = None) -> tuple[StageSpec, ...]:
    """
    Valida las etapas del config; sin datos devuelve el calendario por defecto.

    Raises:
        ValidationError: Si alguna etapa es inválida o los índices no son 1..n
    """
    if not data:
        return DEFAULT_STAGES
    serializer = StageSpecSerializer(data=list(data), many=True)
    serializer.is_valid(raise_exception=True)
    stages = tuple(StageSpecSerializer.build(record) for record in serializer.validated_data)
    if [s.stage for s in stages] != list(range(1, len(stages) + 1)):
        raise ValidationError({"stages": "Las etapas deben numerarse 1..n en orden"})
    if not schedule_is_monotone(stages):
        logger.warning("curriculum schedule is not monotone: alpha_t should grow and gamma_t shrink")
    return stages


def schedule_is_monotone(stages: Sequence[StageSpec]) -> bool:
    """α_t no decreciente y γ_t no creciente a lo largo de las etapas."""
    alphas = [s.coeffs.alpha_t for s in stages]
    gammas = [s.coeffs.gamma_t for s in stages]
    return all(a <= b for a, b in zip(alphas, alphas[1:])) and all(a >= b for a, b in zip(gammas, gammas[1:]))


def correct_counts_batch(
    params: PolicyParams,
    features: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    n_samples: int = DEFAULT_SAMPLES,
    temperature: float = 1.0,
) -> np.ndarray:
    """Número de muestras correctas (todos los gates y y_dec = y_gt) por instancia."""
    if n_samples < 1:
        raise ValidationError({"n_samples": "Debe ser al menos 1"})
    tokens, _ = sample_slot_tokens_batch(params, features, rng, temperature, n_samples)
    return gate_mask_batch(tokens, np.asarray(labels)[:, None]).sum(axis=1)


def estimate_difficulty_service(
    params: PolicyParams,
    instance: Instance,
    rng: np.random.Generator,
    n_samples: int = DEFAULT_SAMPLES,
    temperature: float = 1.0,
) -> tuple[int, DifficultyBin]:
    """
    Acc@n de una instancia: muestrea n trayectorias y cuenta las correctas.

    Args:
        params: Política actual
        instance: Instancia
        rng: Generador aleatorio
        n_samples: Muestras por instancia (>= 1)
        temperature: Temperatura de muestreo

    Returns:
        Tupla (count, DifficultyBin)
    """
    counts = correct_counts_batch(
        params, instance.features[None, :], np.array([instance.label]), rng, n_samples, temperature
    )
    count = int(counts[0])
    return count, difficulty_bin_for_count(count, n_samples)


def bin_dataset_service(
    params: PolicyParams,
    dataset: Dataset,
    rng: np.random.Generator,
    n_samples: int = DEFAULT_SAMPLES,
    temperature: float = 1.0,
) -> BinnedInstances:
    """
    Clasifica todo el dataset en Easy/Medium/Hard/Excluded.

    Returns:
        BinnedInstances (partición exhaustiva y disjunta por posición)

    Raises:
        ValidationError: Si el dataset está vacío
    """
    if len(dataset) == 0:
        raise ValidationError({"dataset": "El dataset no puede estar vacío"})
    counts = np.concatenate(
        [
            correct_counts_batch(
                params,
                dataset.features[start : start + ESTIMATION_CHUNK],
                dataset.labels[start : start + ESTIMATION_CHUNK],
                rng,
                n_samples,
                temperature,
            )
            for start in range(0, len(dataset), ESTIMATION_CHUNK)
        ]
    )
    binned = BinnedInstances(counts=counts, n_samples=n_samples)
    logger.info(
        "dataset binned n=%d %s",
        len(dataset),
        " ".join(f"{b.value}={size}" for b, size in binned.sizes().items()),
    )
    return binned


def effective_ratios(stage: StageSpec, bins: BinnedInstances) -> np.ndarray:
    """
    Proporciones efectivas (Easy, Medium, Hard) tras el fallback de bins vacíos.

    La masa de un bin vacío se reparte proporcionalmente entre los restantes; si
    ningún bin con masa tiene instancias, se usa el tamaño de los bins no vacíos.

    Raises:
        ValidationError: Si todos los bins de entrenamiento están vacíos
    """
    sizes = np.array([len(bins.positions(b)) for b in TRAINING_BINS], dtype=np.float64)
    if not np.any(sizes > 0):
        raise ValidationError({"bins": "Todos los bins de entrenamiento están vacíos"})
    ratios = stage.ratios
    available = ratios * (sizes > 0)
    if np.array_equal(available, ratios):
        return ratios
    missing = [b.value for b, r, s in zip(TRAINING_BINS, ratios, sizes, strict=True) if r > 0 and s == 0]
    logger.warning("empty curriculum bins stage=%d bins=%s, redistributing", stage.stage, ",".join(missing))
    if available.sum() == 0:
        return sizes / sizes.sum()
    return available / available.sum()


def stage_batches_service(
    stage: StageSpec,
    bins: BinnedInstances,
    batch_size: int,
    rng: np.random.Generator,
    num_batches: int | None = None,
) -> Iterator[TrainingBatch]:
    """
    Flujo de lotes con la mezcla de la etapa.

    Cada elemento elige primero su bin según las proporciones y después una
    instancia uniforme dentro del bin; Excluded nunca participa.

    Args:
        stage: Etapa (mezcla y coeficientes)
        bins: Partición por dificultad
        batch_size: Tamaño de lote
        rng: Generador aleatorio
        num_batches: Número de lotes (por defecto stage.steps)

    Yields:
        TrainingBatch con los coeficientes de la etapa
    """
    if batch_size < 1:
        raise ValidationError({"batch_size": "Debe ser al menos 1"})
    ratios = effective_ratios(stage, bins)
    pools = [bins.positions(b) for b in TRAINING_BINS]
    total = stage.steps if num_batches is None else num_batches
    for _ in range(total):
        chosen = rng.choice(len(TRAINING_BINS), size=batch_size, p=ratios)
        positions = np.empty(batch_size, dtype=np.int64)
        for code, pool in enumerate(pools):
            rows = np.flatnonzero(chosen == code)
            if rows.size:
                positions[rows] = pool[rng.integers(len(pool), size=rows.size)]
        yield TrainingBatch(
            positions=positions,
            bins=np.array([b.value for b in TRAINING_BINS])[chosen],
            coeffs=stage.coeffs,
            stage=stage.stage,
        )


def random_batches_service(
    bins: BinnedInstances,
    batch_size: int,
    rng: np.random.Generator,
    coeffs: HybridCoeffs,
    num_batches: int,
    stage: int = 1,
) -> Iterator[TrainingBatch]:
    """
    Muestreo aleatorio uniforme entre las instancias no excluidas (ablación sin currículo).

    Raises:
        ValidationError: Si no hay instancias elegibles
    """
    pool = bins.training_positions
    if pool.size == 0:
        raise ValidationError({"bins": "Todos los bins de entrenamiento están vacíos"})
    labels = bins.labels
    for _ in range(num_batches):
        positions = pool[rng.integers(pool.size, size=batch_size)]
        yield TrainingBatch(positions=positions, bins=labels[positions], coeffs=coeffs, stage=stage)
