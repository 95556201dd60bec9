from __future__ import annotations

from typing import ClassVar

from django.contrib import admin

from apps.experiments.models import ExperimentRun, MetricsRow


class MetricsRowInline(admin.TabularInline):
    model = MetricsRow
    extra = 0
    fields: ClassVar[list[str]] = [
        "step",
        "stage",
        "alpha_t",
        "gamma_t",
        "reward_mean",
        "entropy",
        "five_acc",
        "pair_acc",
        "longtail_checkpoint_acc",
    ]
    readonly_fields: ClassVar[list[str]] = fields
    can_delete = False


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display: ClassVar[list[str]] = [
        "id",
        "label",
        "mode",
        "sampling",
        "seed",
        "status",
        "final_step",
        "created_at",
    ]
    list_filter: ClassVar[list[str]] = ["mode", "sampling", "status", "deterministic", "created_at"]
    search_fields: ClassVar[list[str]] = ["label", "config_hash"]
    readonly_fields: ClassVar[list[str]] = ["id", "config_hash", "manifest", "created_at", "updated_at"]
    inlines: ClassVar[list] = [MetricsRowInline]
    fieldsets: ClassVar[tuple] = (
        ("Ejecución", {"fields": ("label", "status", "final_step", "diagnostic")}),
        ("Protocolo", {"fields": ("mode", "sampling", "seed", "deterministic")}),
        ("Reproducción", {"fields": ("config_hash", "code_version", "manifest", "output_dir")}),
        ("Metadatos", {"fields": ("id", "created_at", "updated_at")}),
    )


@admin.register(MetricsRow)
class MetricsRowAdmin(admin.ModelAdmin):
    list_display: ClassVar[list[str]] = ["run", "step", "stage", "reward_mean", "entropy", "five_acc"]
    list_filter: ClassVar[list[str]] = ["stage", "run__mode"]
    search_fields: ClassVar[list[str]] = ["run__label"]
