from __future__ import annotations

from typing import ClassVar

from django.db import models


class ExperimentRun(models.Model):
    """Ejecución persistida de `train` o de un miembro de `ablate`."""

    MODE_CHOICES: ClassVar[list[tuple[str, str]]] = [
        ("mode_balanced", "Mode-Balanced"),
        ("pure_grpo", "Pure GRPO"),
        ("grpo_uniform", "GRPO (uniform mask)"),
        ("sft_only", "SFT only"),
    ]

    SAMPLING_CHOICES: ClassVar[list[tuple[str, str]]] = [
        ("curriculum", "Curriculum"),
        ("random", "Random"),
    ]

    STATUS_CHOICES: ClassVar[list[tuple[str, str]]] = [
        ("running", "Running"),
        ("completed", "Completed"),
        ("aborted", "Aborted"),
    ]

    label = models.CharField(max_length=255, db_index=True)
    config_hash = models.CharField(max_length=64, db_index=True)
    code_version = models.CharField(max_length=50)
    seed = models.PositiveIntegerField()
    mode = models.CharField(max_length=20, choices=MODE_CHOICES, db_index=True)
    sampling = models.CharField(max_length=20, choices=SAMPLING_CHOICES)
    deterministic = models.BooleanField(default=True)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default="running", db_index=True)
    manifest = models.JSONField(default=dict, blank=True)
    output_dir = models.CharField(max_length=500, blank=True)
    final_step = models.PositiveIntegerField(default=0)
    diagnostic = models.TextField(blank=True, null=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        db_table = "experiment_runs"
        verbose_name = "Experiment Run"
        verbose_name_plural = "Experiment Runs"
        indexes: ClassVar[list] = [
            models.Index(fields=["config_hash"]),
            models.Index(fields=["mode", "sampling"]),
            models.Index(fields=["status"]),
        ]

    def __str__(self) -> str:
        return f"{self.label} ({self.mode}/{self.sampling}, seed={self.seed})"


class MetricsRow(models.Model):
    """Fila de evaluación de una ejecución (columnas del log CSV)."""

    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="metrics_rows")
    step = models.PositiveIntegerField()
    stage = models.PositiveSmallIntegerField()
    alpha_t = models.FloatField()
    gamma_t = models.FloatField()
    reward_mean = models.FloatField()
    reward_std = models.FloatField()
    entropy = models.FloatField()
    five_acc = models.FloatField()
    two_acc = models.FloatField()
    macro_f1 = models.FloatField()
    weighted_f1 = models.FloatField()
    pair_acc = models.FloatField(blank=True, null=True)
    ndcg3 = models.FloatField(blank=True, null=True)
    longtail_checkpoint_acc = models.FloatField(blank=True, null=True)

    class Meta:
        db_table = "metrics_rows"
        verbose_name = "Metrics Row"
        verbose_name_plural = "Metrics Rows"
        ordering: ClassVar[list[str]] = ["run", "step"]
        constraints: ClassVar[list] = [
            models.UniqueConstraint(fields=["run", "step"], name="unique_run_step"),
        ]

    def __str__(self) -> str:
        return f"{self.run_id}@{self.step}"
