from __future__ import annotations

import factory

from apps.world.domain import WorldConfig


class WorldConfigFactory(factory.Factory):
    """Factory para configuraciones del mundo sintético."""

    class Meta:
        model = WorldConfig

    feature_dim = 16
    longtail_rate = 0.02
    shortcut_strength = 0.9
    seed = factory.Sequence(lambda n: n)
    noise_scale = 0.3
    label_noise = 0.2
    checkpoint_noise = 0.5
    docs_per_query = 8
