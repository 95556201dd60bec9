from __future__ import annotations

import factory
import numpy as np

from apps.grammar.domain import SLOT_VOCAB_SIZES
from apps.policy.domain import Capacity, PolicyParams


def _random_arrays(feature_dim: int, seed: int, scale: float) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...]]:
    rng = np.random.default_rng(seed)
    weights = tuple(scale * rng.normal(size=(size, feature_dim)) for size in SLOT_VOCAB_SIZES)
    biases = tuple(scale * rng.normal(size=size) for size in SLOT_VOCAB_SIZES)
    return weights, biases


class PolicyParamsFactory(factory.Factory):
    """Parámetros teacher aleatorios (no uniformes) para tests numéricos."""

    class Meta:
        model = PolicyParams

    class Params:
        feature_dim = 16
        seed = factory.Sequence(lambda n: n)
        scale = 0.5

    weights = factory.LazyAttribute(lambda o: _random_arrays(o.feature_dim, o.seed, o.scale)[0])
    biases = factory.LazyAttribute(lambda o: _random_arrays(o.feature_dim, o.seed, o.scale)[1])
    capacity = Capacity.TEACHER
    projection = None
