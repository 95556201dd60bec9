from __future__ import annotations

import json
import logging
from typing import TYPE_CHECKING, Any

from rest_framework.exceptions import ValidationError

import numpy as np

from apps.grammar.domain import CHECKPOINT_VOCAB, CheckpointAnswer, Trajectory
from apps.rewards.services import infer_label_service, infer_labels_batch
from apps.world.domain import (
    F_LONGTAIL,
    F_MATCH,
    F_OFFICIAL,
    F_PREMIUM,
    F_SHORTCUT,
    F_STRONG,
    F_WEAK,
    MARGIN_HIGH,
    MARGIN_LOW,
    NUM_SEMANTIC,
    THRESHOLD,
    Dataset,
    Instance,
    WorldConfig,
)
from apps.world.serializers import InstanceRecordSerializer, WorldConfigSerializer

if TYPE_CHECKING:
    from pathlib import Path

logger = logging.getLogger(__name__)

YES, NO = CheckpointAnswer.YES, CheckpointAnswer.NO
_YES_TOKEN, _NO_TOKEN = 0, 1

# Substream reservado para el split train/holdout (los índices usan [seed, i])
SPLIT_STREAM = 2**31 - 1
SHORTCUT_JITTER = 0.25
# Evidencias (oficial, long-tail) de una instancia de cabeza: nunca las dos a la vez
HEAD_OFFICIAL_CUES = ((False, False), (True, False), (False, True))


def build_world_config_service(data: dict[str, Any] | None = None) -> WorldConfig:
    """
    Valida y construye un WorldConfig.

    Raises:
        ValidationError: Si alguna tasa está fuera de [0, 1] o D < 7
    """
    serializer = WorldConfigSerializer(data=data or {})
    serializer.is_valid(raise_exception=True)
    return serializer.to_domain()


def oracle_checkpoint_tokens(features: np.ndarray) -> np.ndarray:
    """Oráculo vectorizado: features (..., D) -> tokens de checkpoint (..., 5), 0 = Yes."""
    f = np.asarray(features, dtype=np.float64)
    answers = np.stack(
        [
            f[..., F_MATCH] < THRESHOLD,
            f[..., F_WEAK] > THRESHOLD,
            f[..., F_STRONG] > THRESHOLD,
            f[..., F_PREMIUM] > THRESHOLD,
            (f[..., F_OFFICIAL] > THRESHOLD) & (f[..., F_LONGTAIL] > THRESHOLD),
        ],
        axis=-1,
    )
    return np.where(answers, _YES_TOKEN, _NO_TOKEN).astype(np.int64)


def oracle_checkpoints_service(
    features: np.ndarray,
    feature_dim: int | None = None,
) -> tuple[CheckpointAnswer, ...]:
    """
    Checkpoints verdaderos (irrelevant, weak, strong, premium, official) de una instancia.

    Cada checkpoint umbraliza una coordenada en 0.5; el oficial exige además
    la coordenada indicadora de long-tail.

    Args:
        features: Vector de dimensión D
        feature_dim: Dimensión esperada (opcional)

    Returns:
        5 CheckpointAnswer

    Raises:
        ValidationError: Si la dimensión no coincide
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] < NUM_SEMANTIC:
        raise ValidationError({"features": f"Se esperaba un vector de dimensión >= {NUM_SEMANTIC}"})
    if feature_dim is not None and f.shape[0] != feature_dim:
        raise ValidationError({"features": f"Dimensión {f.shape[0]} != {feature_dim}"})
    return tuple(CHECKPOINT_VOCAB[t] for t in oracle_checkpoint_tokens(f))


def _head_pattern(label: int, rng: np.random.Generator) -> tuple[bool, bool, bool, bool]:
    # (irrelevant, weak, strong, premium) para una instancia de cabeza
    if label == 0:
        return True, bool(rng.random() < 0.5), False, False
    if label == 1:
        return False, bool(rng.random() < 0.5), False, False
    if label == 2:
        return False, False, True, False
    return False, False, True, True


def _generate_row(index: int, cfg: WorldConfig) -> tuple[np.ndarray, bool, float]:
    rng = np.random.default_rng([cfg.seed, index])
    is_longtail = bool(rng.random() < cfg.longtail_rate)
    if is_longtail:
        pattern = (False, False, True, True)
        official_cue, longtail_cue = True, True
    else:
        label = int(rng.choice(4, p=np.asarray(cfg.label_marginals)))
        pattern = _head_pattern(label, rng)
        # Casi-aciertos: dos de cada tres instancias de cabeza llevan una sola evidencia
        official_cue, longtail_cue = HEAD_OFFICIAL_CUES[int(rng.integers(len(HEAD_OFFICIAL_CUES)))]

    margins = rng.uniform(MARGIN_LOW, MARGIN_HIGH, size=6)
    f = np.empty(cfg.feature_dim, dtype=np.float64)
    irrelevant, weak, strong, premium = pattern
    for coord, above, margin in (
        (F_MATCH, not irrelevant, margins[0]),
        (F_WEAK, weak, margins[1]),
        (F_STRONG, strong, margins[2]),
        (F_PREMIUM, premium, margins[3]),
        (F_OFFICIAL, official_cue, margins[4]),
        (F_LONGTAIL, longtail_cue, margins[5]),
    ):
        f[coord] = THRESHOLD + margin if above else THRESHOLD - margin
    decisive = margins if is_longtail else margins[:4]

    # Las consultas long-tail no tienen coincidencia superficial: el atajo las muestra irrelevantes
    shown = strong != is_longtail
    agrees = rng.random() < cfg.shortcut_strength
    f[F_SHORTCUT] = float(shown == agrees) + rng.uniform(-SHORTCUT_JITTER, SHORTCUT_JITTER)
    f[NUM_SEMANTIC:] = rng.normal(0.0, cfg.noise_scale, size=cfg.feature_dim - NUM_SEMANTIC)

    ambiguity = float(np.clip((MARGIN_HIGH - decisive.min()) / (MARGIN_HIGH - MARGIN_LOW), 0.0, 1.0))
    return f, is_longtail, ambiguity


def gen_dataset_service(n: int, cfg: WorldConfig) -> Dataset:
    """
    Genera n instancias reproducibles a partir de (cfg, cfg.seed).

    Cada índice usa su propio substream `default_rng([seed, i])`, de modo que el
    resultado no depende de cómo se particione el espacio de índices.

    Args:
        n: Número de instancias (>= 1)
        cfg: Configuración del mundo

    Returns:
        Dataset con etiquetas consistentes con el oráculo

    Raises:
        ValidationError: Si n < 1
    """
    if n < 1:
        raise ValidationError({"n": "Debe ser al menos 1"})
    return _assemble_dataset(cfg, range(n))


def _assemble_dataset(cfg: WorldConfig, indices: range | np.ndarray) -> Dataset:
    rows = [_generate_row(int(i), cfg) for i in indices]
    features = np.stack([row[0] for row in rows])
    checkpoint_tokens = oracle_checkpoint_tokens(features)
    labels = infer_labels_batch(checkpoint_tokens).astype(np.int64)
    index_array = np.asarray(indices, dtype=np.int64)
    dataset = Dataset(
        config=cfg,
        features=features,
        checkpoint_tokens=checkpoint_tokens,
        labels=labels,
        is_longtail=np.array([row[1] for row in rows], dtype=bool),
        query_ids=index_array // cfg.docs_per_query,
        ambiguity=np.array([row[2] for row in rows], dtype=np.float64),
        indices=index_array,
    )
    logger.info(
        "dataset generated n=%d seed=%d longtail=%d label_counts=%s",
        len(dataset),
        cfg.seed,
        int(dataset.is_longtail.sum()),
        np.bincount(labels, minlength=5).tolist(),
    )
    return dataset


def split_dataset_service(dataset: Dataset, holdout_fraction: float = 0.2) -> tuple[Dataset, Dataset]:
    """
    Separa train y holdout por query (todas las instancias de una query van juntas).

    Args:
        dataset: Dataset completo
        holdout_fraction: Fracción de queries reservadas para evaluación

    Returns:
        Tupla (train, holdout)
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ValidationError({"holdout_fraction": "Debe estar en (0, 1)"})
    queries = np.unique(dataset.query_ids)
    rng = np.random.default_rng([dataset.config.seed, SPLIT_STREAM])
    n_holdout = max(1, round(holdout_fraction * len(queries))) if len(queries) > 1 else 0
    holdout_queries = rng.permutation(queries)[:n_holdout]
    in_holdout = np.isin(dataset.query_ids, holdout_queries)
    return dataset.subset(np.flatnonzero(~in_holdout)), dataset.subset(np.flatnonzero(in_holdout))


def expert_trajectory_service(instance: Instance) -> Trajectory:
    """Trayectoria del oráculo experto: y_dec = y_final = label y checkpoints verdaderos."""
    return Trajectory.from_slots(instance.label, instance.truth_checkpoints, instance.label)


def relabel_checkpoints(checkpoints: tuple[CheckpointAnswer, ...], label: int) -> tuple[CheckpointAnswer, ...]:
    """
    Edición mínima de los checkpoints para que el árbol de decisión infiera `label`.

    Args:
        checkpoints: Checkpoints de partida
        label: Etiqueta objetivo en [0, 3]

    Returns:
        Checkpoints editados
    """
    irrelevant, weak, strong, premium, official = checkpoints
    if label == 0:
        irrelevant = YES
    elif label == 1:
        irrelevant = NO
        if weak is not YES and strong is YES:
            strong = NO
    elif label == 2:
        irrelevant, weak, strong, premium = NO, NO, YES, NO
    else:
        irrelevant, weak, strong, premium, official = NO, NO, YES, YES, NO
    edited = (irrelevant, weak, strong, premium, official)
    if infer_label_service(edited) != label:
        raise ValidationError({"label": f"No se puede reetiquetar a {label}"})
    return edited


def _neighbour_label(label: int, rng: np.random.Generator) -> int:
    if label == 0:
        return 1
    if label == 3:
        return 2
    return label + (1 if rng.random() < 0.5 else -1)


def free_checkpoint_mask(checkpoint_tokens: np.ndarray) -> np.ndarray:
    """
    Checkpoints que ya no deciden la etiqueta, forma (..., 5).

    El árbol de decisión se detiene en el primer checkpoint concluyente; los
    posteriores pueden tomar cualquier valor sin cambiar la etiqueta inferida.
    """
    yes = np.asarray(checkpoint_tokens) == _YES_TOKEN
    free = np.zeros(yes.shape, dtype=bool)
    free[..., 1] = yes[..., 0]
    free[..., 2] = free[..., 1] | yes[..., 1]
    free[..., 3] = free[..., 2] | ~yes[..., 2]
    free[..., 4] = free[..., 3] | ~yes[..., 3]
    return free


def _perturb_free_checkpoints(tokens: np.ndarray, rng: np.random.Generator, checkpoint_noise: float) -> np.ndarray:
    checkpoints = tokens[..., 1:6]
    flip = free_checkpoint_mask(checkpoints) & (rng.random(checkpoints.shape) < checkpoint_noise)
    tokens[..., 1:6] = np.where(flip, 1 - checkpoints, checkpoints)
    return tokens


def sample_expert_trajectory_service(
    instance: Instance,
    rng: np.random.Generator,
    label_noise: float,
    checkpoint_noise: float = 0.0,
) -> Trajectory:
    """
    Muestra de la distribución experta π_data.

    Con probabilidad `label_noise * ambiguity` una instancia de cabeza recibe la
    trayectoria de una etiqueta vecina con la edición mínima de checkpoints;
    las instancias long-tail nunca se reetiquetan. Después, cada checkpoint que
    ya no decide la etiqueta se invierte con probabilidad `checkpoint_noise`.

    Args:
        instance: Instancia
        rng: Generador aleatorio
        label_noise: Probabilidad máxima de reetiquetado
        checkpoint_noise: Probabilidad de invertir un checkpoint libre

    Returns:
        Trajectory experta (siempre consistente: y_dec = y_final = ŷ)
    """
    draw = rng.random()
    if instance.is_longtail or draw >= label_noise * instance.ambiguity:
        trajectory = expert_trajectory_service(instance)
    else:
        trajectory = neighbour_expert_trajectory(instance, rng)
    if checkpoint_noise <= 0.0:
        return trajectory
    tokens = _perturb_free_checkpoints(np.asarray(trajectory.slot_tokens()), rng, checkpoint_noise)
    return Trajectory.from_slot_tokens(tokens.tolist())


def neighbour_expert_trajectory(instance: Instance, rng: np.random.Generator) -> Trajectory:
    """Trayectoria experta de una etiqueta vecina (0 -> 1, 3 -> 2, resto ±1)."""
    label = _neighbour_label(instance.label, rng)
    checkpoints = relabel_checkpoints(instance.truth_checkpoints, label)
    return Trajectory.from_slots(label, checkpoints, label)


def expert_slot_tokens_batch(
    dataset: Dataset,
    positions: np.ndarray,
    rng: np.random.Generator | None = None,
    label_noise: float = 0.0,
    checkpoint_noise: float = 0.0,
) -> np.ndarray:
    """
    Tokens de slot (B, 7) de trayectorias expertas para un lote de posiciones.

    Sin `rng` (o sin ruido) devuelve las trayectorias deterministas; si no, es
    la versión vectorizada de sample_expert_trajectory_service.
    """
    positions = np.asarray(positions, dtype=np.int64)
    labels = dataset.labels[positions]
    tokens = np.concatenate(
        [labels[:, None], dataset.checkpoint_tokens[positions], labels[:, None]], axis=1
    )
    if rng is None or (label_noise <= 0.0 and checkpoint_noise <= 0.0):
        return tokens
    draws = rng.random(len(positions))
    noisy = (draws < label_noise * dataset.ambiguity[positions]) & ~dataset.is_longtail[positions]
    for row in np.flatnonzero(noisy):
        trajectory = neighbour_expert_trajectory(dataset.instance(int(positions[row])), rng)
        tokens[row] = trajectory.slot_tokens()
    if checkpoint_noise > 0.0:
        tokens = _perturb_free_checkpoints(tokens, rng, checkpoint_noise)
    return tokens
    draws = rng.random(len(positions))
    noisy = (draws < label_noise * dataset.ambiguity[positions]) & ~dataset.is_longtail[positions]
    for row in np.flatnonzero(noisy):
        trajectory = neighbour_expert_trajectory(dataset.instance(int(positions[row])), rng)
        tokens[row] = trajectory.slot_tokens()
    return tokens


def dataset_to_records(dataset: Dataset) -> list[dict[str, Any]]:
    """Registros JSONL: uno por instancia."""
    return [
        {
            "index": int(dataset.indices[i]),
            "query_id": int(dataset.query_ids[i]),
            "features": dataset.features[i].tolist(),
            "checkpoints": [CHECKPOINT_VOCAB[t].value for t in dataset.checkpoint_tokens[i]],
            "label": int(dataset.labels[i]),
            "is_longtail": bool(dataset.is_longtail[i]),
            "ambiguity": float(dataset.ambiguity[i]),
        }
        for i in range(len(dataset))
    ]


def write_dataset_jsonl_service(dataset: Dataset, path: Path) -> int:
    """
    Escribe el dataset en JSONL (una instancia por línea).

    Returns:
        Número de líneas escritas
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    records = dataset_to_records(dataset)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")
    return len(records)


def read_dataset_jsonl_service(path: Path, cfg: WorldConfig | None = None) -> Dataset:
    """
    Lee un dataset JSONL y valida cada línea y la consistencia etiqueta-oráculo.

    Raises:
        ValidationError: Si una línea es inválida o la etiqueta no coincide con el oráculo
    """
    records = []
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            serializer = InstanceRecordSerializer(data=json.loads(line))
            serializer.is_valid(raise_exception=True)
            records.append(serializer.validated_data)
    if not records:
        raise ValidationError({"path": f"{path} no contiene instancias"})

    features = np.array([r["features"] for r in records], dtype=np.float64)
    checkpoint_tokens = np.array(
        [[CHECKPOINT_VOCAB.index(CheckpointAnswer(c)) for c in r["checkpoints"]] for r in records],
        dtype=np.int64,
    )
    labels = np.array([r["label"] for r in records], dtype=np.int64)
    if not np.array_equal(oracle_checkpoint_tokens(features), checkpoint_tokens) or not np.array_equal(
        infer_labels_batch(checkpoint_tokens), labels
    ):
        raise ValidationError({"path": "Etiquetas inconsistentes con el oráculo"})
    config = cfg or WorldConfig(feature_dim=features.shape[1])
    return Dataset(
        config=config,
        features=features,
        checkpoint_tokens=checkpoint_tokens,
        labels=labels,
        is_longtail=np.array([r["is_longtail"] for r in records], dtype=bool),
        query_ids=np.array([r["query_id"] for r in records], dtype=np.int64),
        ambiguity=np.array([r["ambiguity"] for r in records], dtype=np.float64),
        indices=np.array([r["index"] for r in records], dtype=np.int64),
    )
