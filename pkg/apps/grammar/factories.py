from __future__ import annotations

import factory
from factory import fuzzy

from apps.grammar.domain import CHECKPOINT_VOCAB, CheckpointAnswer, Trajectory


class TrajectoryFactory(factory.Factory):
    """Factory para crear trayectorias canónicas aleatorias."""

    class Meta:
        model = Trajectory

    y_dec = fuzzy.FuzzyInteger(0, 4)
    checkpoints = factory.List([fuzzy.FuzzyChoice(CHECKPOINT_VOCAB) for _ in range(5)])
    y_final = factory.SelfAttribute("y_dec")

    @classmethod
    def _build(cls, model_class, *args, **kwargs):
        return cls._create(model_class, *args, **kwargs)

    @classmethod
    def _create(cls, model_class, *args, **kwargs):
        return model_class.from_slots(kwargs["y_dec"], tuple(kwargs["checkpoints"]), kwargs["y_final"])


class FigureTrajectoryFactory(TrajectoryFactory):
    """La trayectoria de ejemplo con decisión [3] y checkpoints (No, No, Yes, Yes, No)."""

    y_dec = 3
    checkpoints = factory.LazyFunction(
        lambda: [
            CheckpointAnswer.NO,
            CheckpointAnswer.NO,
            CheckpointAnswer.YES,
            CheckpointAnswer.YES,
            CheckpointAnswer.NO,
        ]
    )
