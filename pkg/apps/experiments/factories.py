from __future__ import annotations

import factory
from factory.django import DjangoModelFactory

from apps.experiments.models import ExperimentRun, MetricsRow


class ExperimentRunFactory(DjangoModelFactory):
    """Factory para crear ejecuciones persistidas de prueba."""

    class Meta:
        model = ExperimentRun

    label = factory.Sequence(lambda n: f"run-{n}")
    config_hash = factory.Sequence(lambda n: f"{n:064x}")
    code_version = "0.1.0"
    seed = factory.Sequence(lambda n: n)
    mode = factory.Iterator(["mode_balanced", "pure_grpo", "grpo_uniform", "sft_only"])
    sampling = "curriculum"
    deterministic = True
    status = "completed"
    manifest = factory.LazyAttribute(lambda o: {"config_hash": o.config_hash, "seed": o.seed})


class MetricsRowFactory(DjangoModelFactory):
    class Meta:
        model = MetricsRow

    run = factory.SubFactory(ExperimentRunFactory)
    step = factory.Sequence(lambda n: n * 100)
    stage = 1
    alpha_t = 0.85
    gamma_t = 0.15
    reward_mean = 0.5
    reward_std = 0.5
    entropy = 1.0
    five_acc = 0.6
    two_acc = 0.8
    macro_f1 = 0.5
    weighted_f1 = 0.55
    pair_acc = 0.7
    ndcg3 = 0.75
    longtail_checkpoint_acc = None
