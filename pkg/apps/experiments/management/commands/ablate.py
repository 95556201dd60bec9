from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Any

from apps.experiments.domain import Mode, RunStatus, Sampling
from apps.experiments.management.commands._base import ExperimentCommand, resolve_config_path
from apps.experiments.services import (
    ablation_labels,
    load_experiment_config_service,
    persist_run_log_service,
    run_ablation_service,
)

if TYPE_CHECKING:
    from argparse import ArgumentParser

    from apps.experiments.domain import ExperimentConfig


class Command(ExperimentCommand):
    help = "Ejecuta la matriz de ablación (modos × muestreos) sobre un mundo compartido"

    requires_config = True

    def add_arguments(self, parser: ArgumentParser) -> None:
        super().add_arguments(parser)
        parser.add_argument(
            "--modes",
            nargs="+",
            choices=[m.value for m in Mode],
            default=[Mode.MODE_BALANCED.value, Mode.PURE_GRPO.value],
        )
        parser.add_argument(
            "--samplings",
            nargs="+",
            choices=[s.value for s in Sampling],
            default=[Sampling.CURRICULUM.value],
        )
        parser.add_argument("--extra-config", action="append", default=[], help="Miembro adicional de la matriz")
        parser.add_argument("--workers", type=int, default=1, help="Procesos en paralelo")
        parser.add_argument("--output-dir", help="Directorio de salida (por defecto output_dir del config)")
        parser.add_argument("--persist", action="store_true", help="Guardar cada miembro en la base de datos")

    def build_matrix(self, options: dict[str, Any]) -> list[ExperimentConfig]:
        cfgs = [
            self.load_config(options, {"mode": mode, "sampling": sampling})
            for mode in options["modes"]
            for sampling in options["samplings"]
        ]
        cfgs.extend(load_experiment_config_service(resolve_config_path(path)) for path in options["extra_config"])
        return cfgs

    def run(self, **options: Any) -> None:
        cfgs = self.build_matrix(options)
        output_dir = Path(options["output_dir"] or cfgs[0].output_dir)
        result = run_ablation_service(cfgs, workers=options["workers"], output_dir=output_dir)
        if options["persist"]:
            for label in ablation_labels(cfgs):
                persist_run_log_service(label, result.logs[label], RunStatus.COMPLETED, str(output_dir / label))
        self.emit({"output_dir": str(output_dir), "summary": [row.as_dict() for row in result.summary]})
