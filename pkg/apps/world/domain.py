from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any

import numpy as np

from apps.grammar.domain import CHECKPOINT_VOCAB, CheckpointAnswer

if TYPE_CHECKING:
    from collections.abc import Sequence

# Coordenadas semánticas de las features
F_MATCH = 0
F_WEAK = 1
F_STRONG = 2
F_PREMIUM = 3
F_OFFICIAL = 4
F_LONGTAIL = 5
F_SHORTCUT = 6
NUM_SEMANTIC = 7

THRESHOLD = 0.5
MARGIN_LOW = 0.25
MARGIN_HIGH = 1.25


@dataclass(frozen=True)
class WorldConfig:
    """
    Parámetros del mundo sintético.

    Attributes:
        feature_dim: Dimensión D (7 semánticas + ruido)
        longtail_rate: Fracción esperada de instancias long-tail (etiqueta 4)
        shortcut_strength: Probabilidad de que la feature atajo muestre `label >= 2`
            (en las instancias long-tail muestra lo contrario)
        seed: Semilla raíz; cada índice usa el substream `[seed, i]`
        noise_scale: Desviación típica de las coordenadas de ruido
        label_noise: Probabilidad máxima de reetiquetado del experto (escala con la ambigüedad)
        checkpoint_noise: Probabilidad de que el experto invierta un checkpoint que ya no
            decide la etiqueta (0.5 = respuesta al azar)
        docs_per_query: Documentos por query
        label_marginals: Marginales de las etiquetas de cabeza 0..3
    """

    feature_dim: int = 16
    longtail_rate: float = 0.02
    shortcut_strength: float = 0.9
    seed: int = 0
    noise_scale: float = 0.3
    label_noise: float = 0.2
    checkpoint_noise: float = 0.5
    docs_per_query: int = 8
    label_marginals: tuple[float, ...] = (0.22, 0.33, 0.35, 0.10)

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["label_marginals"] = list(self.label_marginals)
        return data


@dataclass(frozen=True, eq=False)
class Instance:
    features: np.ndarray
    truth_checkpoints: tuple[CheckpointAnswer, ...]
    label: int
    is_longtail: bool
    query_id: int = 0
    ambiguity: float = 0.0


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Dataset en formato columnar; `instances` da la vista por instancia.

    `checkpoint_tokens` usa el vocabulario de la política (0 = Yes, 1 = No).
    """

    config: WorldConfig
    features: np.ndarray
    checkpoint_tokens: np.ndarray
    labels: np.ndarray
    is_longtail: np.ndarray
    query_ids: np.ndarray
    ambiguity: np.ndarray
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def instance(self, position: int) -> Instance:
        return Instance(
            features=self.features[position],
            truth_checkpoints=tuple(CHECKPOINT_VOCAB[t] for t in self.checkpoint_tokens[position]),
            label=int(self.labels[position]),
            is_longtail=bool(self.is_longtail[position]),
            query_id=int(self.query_ids[position]),
            ambiguity=float(self.ambiguity[position]),
        )

    @cached_property
    def instances(self) -> tuple[Instance, ...]:
        return tuple(self.instance(i) for i in range(len(self)))

    def subset(self, positions: Sequence[int] | np.ndarray) -> Dataset:
        """Sub-dataset con las posiciones dadas (conserva los índices de generación)."""
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(
            config=self.config,
            features=self.features[positions],
            checkpoint_tokens=self.checkpoint_tokens[positions],
            labels=self.labels[positions],
            is_longtail=self.is_longtail[positions],
            query_ids=self.query_ids[positions],
            ambiguity=self.ambiguity[positions],
            indices=self.indices[positions],
        )
