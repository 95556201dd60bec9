from __future__ import annotations

from dataclasses import replace
from typing import Any

from rest_framework import serializers

from apps.curriculum.services import build_stage_specs_service
from apps.experiments.domain import (
    DistillConfig,
    ExperimentConfig,
    LogRow,
    Mode,
    RunManifest,
    Sampling,
)
from apps.metrics.domain import MetricsRecord
from apps.metrics.serializers import MetricsRecordSerializer
from apps.optim.services import build_optim_config_service
from apps.rewards.services import build_reward_config_service
from apps.world.services import build_world_config_service

# Pasos por etapa cuando el config no los fija
DEFAULT_STEPS_PER_STAGE = 2000


class ExperimentConfigSerializer(serializers.Serializer):
    """
    Config JSON de un experimento.

    **Campos:**
    - `world`, `reward`, `optim` (object): Sub-configuraciones (ver sus serializers)
    - `stages` (array[object]): Etapas; sin valor se usa el calendario por defecto
    - `steps_per_stage` (int >= 0): Pasos de las etapas con `steps = 0`
    - `mode` (str): mode_balanced, pure_grpo, grpo_uniform o sft_only
    - `sampling` (str): curriculum o random
    - `seed` (int >= 0), `output_dir` (str)
    - `train_size`, `batch_size`, `sft_batch_size`, `eval_interval` (int >= 1)
    - `holdout_fraction` (float en (0, 1)), `sft_warmup_steps` (int >= 0)
    - `static_binning`, `deterministic` (bool), `n_difficulty_samples` (int >= 2)
    """

    world = serializers.DictField(default=dict)
    reward = serializers.DictField(default=dict)
    optim = serializers.DictField(default=dict)
    stages = serializers.ListField(child=serializers.DictField(), default=list)
    steps_per_stage = serializers.IntegerField(min_value=0, default=DEFAULT_STEPS_PER_STAGE)
    mode = serializers.ChoiceField(choices=[m.value for m in Mode], default=Mode.MODE_BALANCED.value)
    sampling = serializers.ChoiceField(choices=[s.value for s in Sampling], default=Sampling.CURRICULUM.value)
    seed = serializers.IntegerField(min_value=0, default=0)
    output_dir = serializers.CharField(default="runs/default")
    train_size = serializers.IntegerField(min_value=1, default=10_000)
    holdout_fraction = serializers.FloatField(default=0.2)
    batch_size = serializers.IntegerField(min_value=1, default=64)
    sft_batch_size = serializers.IntegerField(min_value=1, default=64)
    eval_interval = serializers.IntegerField(min_value=1, default=100)
    sft_warmup_steps = serializers.IntegerField(min_value=0, default=0)
    static_binning = serializers.BooleanField(default=False)
    deterministic = serializers.BooleanField(default=True)
    n_difficulty_samples = serializers.IntegerField(min_value=2, default=8)

    def validate_holdout_fraction(self, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("Debe estar en (0, 1)")
        return value

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        builders = {
            "world": build_world_config_service,
            "reward": build_reward_config_service,
            "optim": build_optim_config_service,
            "stages": build_stage_specs_service,
        }
        for key, builder in builders.items():
            try:
                attrs[key] = builder(attrs[key])
            except serializers.ValidationError as exc:
                raise serializers.ValidationError({key: exc.detail}) from exc
        steps = attrs.pop("steps_per_stage")
        attrs["stages"] = tuple(
            stage if stage.steps else replace(stage, steps=steps)
            for stage in attrs["stages"]
        )
        return attrs

    def to_domain(self) -> ExperimentConfig:
        data = dict(self.validated_data)
        data["mode"] = Mode(data["mode"])
        data["sampling"] = Sampling(data["sampling"])
        return ExperimentConfig(**data)


class DistillConfigSerializer(serializers.Serializer):
    """
    Config de destilación.

    **Campos:**
    - `steps` (int >= 0), `learning_rate` (float > 0), `batch_size` (int >= 0, 0 = completo)
    - `student_dim` (int >= 1 o null): null = control de igual capacidad
    - `all_slots` (bool), `seed` (int >= 0), `init_scale` (float >= 0), `temperature` (float > 0)
    """

    steps = serializers.IntegerField(min_value=0, default=500)
    learning_rate = serializers.FloatField(default=0.05)
    batch_size = serializers.IntegerField(min_value=0, default=0)
    student_dim = serializers.IntegerField(min_value=1, allow_null=True, default=4)
    all_slots = serializers.BooleanField(default=False)
    seed = serializers.IntegerField(min_value=0, default=0)
    init_scale = serializers.FloatField(min_value=0.0, default=0.01)
    temperature = serializers.FloatField(default=1.0)

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        for field in ("learning_rate", "temperature"):
            if attrs[field] <= 0:
                raise serializers.ValidationError({field: "Debe ser mayor que 0"})
        return attrs

    def to_domain(self) -> DistillConfig:
        return DistillConfig(**self.validated_data)


class RunManifestSerializer(serializers.Serializer):
    """Primera línea del export JSONL de un RunLog."""

    config_hash = serializers.RegexField(r"^[0-9a-f]{64}$")
    code_version = serializers.CharField()
    seed = serializers.IntegerField(min_value=0)
    mode = serializers.ChoiceField(choices=[m.value for m in Mode])
    sampling = serializers.ChoiceField(choices=[s.value for s in Sampling])
    deterministic = serializers.BooleanField()
    rollout_entropy = serializers.IntegerField(min_value=0)
    config = serializers.DictField()

    def to_domain(self) -> RunManifest:
        data = dict(self.validated_data)
        data["mode"] = Mode(data["mode"])
        data["sampling"] = Sampling(data["sampling"])
        return RunManifest(**data)


class LogRowSerializer(MetricsRecordSerializer):
    """Fila exportada: las columnas de LOG_COLUMNS (métricas más contexto de etapa)."""

    stage = serializers.IntegerField(min_value=0)
    alpha_t = serializers.FloatField(min_value=0.0, max_value=1.0)
    gamma_t = serializers.FloatField(min_value=0.0, max_value=1.0)

    def to_domain(self) -> LogRow:
        data = {key: float("nan") if value is None else value for key, value in self.validated_data.items()}
        context = {key: data.pop(key) for key in ("stage", "alpha_t", "gamma_t")}
        return LogRow(metrics=MetricsRecord(**data), **context)
