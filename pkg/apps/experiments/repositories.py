from __future__ import annotations

import math
from typing import TYPE_CHECKING

from django.db import transaction
from django.db.models import QuerySet

from apps.experiments.models import ExperimentRun, MetricsRow

if TYPE_CHECKING:
    from apps.experiments.domain import LogRow, RunManifest, RunStatus

NULLABLE_COLUMNS = ("pair_acc", "ndcg3", "longtail_checkpoint_acc")


def create_run_repository(label: str, manifest: RunManifest, output_dir: str = "") -> ExperimentRun:
    """
    Crea una ejecución en estado `running` a partir de su manifiesto.

    Args:
        label: Nombre legible de la ejecución
        manifest: Manifiesto de reproducción
        output_dir: Directorio de artefactos

    Returns:
        ExperimentRun creado
    """
    return ExperimentRun.objects.create(
        label=label,
        config_hash=manifest.config_hash,
        code_version=manifest.code_version,
        seed=manifest.seed,
        mode=manifest.mode.value,
        sampling=manifest.sampling.value,
        deterministic=manifest.deterministic,
        manifest=manifest.as_dict(),
        output_dir=output_dir,
    )


def get_run_by_id_repository(run_id: int) -> ExperimentRun | None:
    try:
        return ExperimentRun.objects.get(id=run_id)
    except ExperimentRun.DoesNotExist:
        return None


def list_runs_repository(config_hash: str | None = None, mode: str | None = None) -> QuerySet[ExperimentRun]:
    """Ejecuciones filtradas por hash de config y modo, las más recientes primero."""
    queryset = ExperimentRun.objects.all()
    if config_hash:
        queryset = queryset.filter(config_hash=config_hash)
    if mode:
        queryset = queryset.filter(mode=mode)
    return queryset.order_by("-created_at", "-id")


@transaction.atomic
def save_metrics_rows_repository(run: ExperimentRun, rows: list[LogRow]) -> int:
    """
    Inserta las filas de métricas de una ejecución (NaN se guarda como NULL).

    Returns:
        Número de filas creadas
    """
    objects = []
    for row in rows:
        data = row.as_row()
        for column in NULLABLE_COLUMNS:
            if math.isnan(data[column]):
                data[column] = None
        objects.append(MetricsRow(run=run, **data))
    MetricsRow.objects.bulk_create(objects)
    return len(objects)


def finish_run_repository(
    run: ExperimentRun,
    status: RunStatus,
    final_step: int,
    diagnostic: str | None = None,
) -> ExperimentRun:
    """Marca la ejecución como completada o abortada."""
    run.status = status.value
    run.final_step = final_step
    run.diagnostic = diagnostic
    run.save(update_fields=["status", "final_step", "diagnostic", "updated_at"])
    return run
