from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Any

from apps.experiments.domain import Mode, RunStatus, Sampling
from apps.experiments.management.commands._base import ExperimentCommand
from apps.experiments.services import persist_run_log_service, run_training_service
from apps.optim.exceptions import NumericAbortError
from apps.policy.services import load_params_service
from apps.world.services import read_dataset_jsonl_service

if TYPE_CHECKING:
    from argparse import ArgumentParser


class Command(ExperimentCommand):
    help = "Entrena una política con el protocolo del config y escribe el RunLog"

    def add_arguments(self, parser: ArgumentParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--output-dir", help="Directorio de salida (por defecto output_dir del config)")
        parser.add_argument("--data-dir", help="Directorio con train.jsonl y holdout.jsonl de gen_data")
        parser.add_argument("--init", help="Parámetros JSON de partida")
        parser.add_argument("--mode", choices=[m.value for m in Mode])
        parser.add_argument("--sampling", choices=[s.value for s in Sampling])
        parser.add_argument("--seed", type=int)
        parser.add_argument("--persist", action="store_true", help="Guardar la ejecución en la base de datos")
        parser.add_argument("--label", help="Nombre de la ejecución persistida")

    def run(self, **options: Any) -> None:
        cfg = self.load_config(
            options, {"mode": options["mode"], "sampling": options["sampling"], "seed": options["seed"]}
        )
        output_dir = Path(options["output_dir"] or cfg.output_dir)
        datasets = None
        if options["data_dir"]:
            data_dir = Path(options["data_dir"])
            datasets = (
                read_dataset_jsonl_service(data_dir / "train.jsonl", cfg.world),
                read_dataset_jsonl_service(data_dir / "holdout.jsonl", cfg.world),
            )
        init = load_params_service(Path(options["init"])) if options["init"] else None
        label = options["label"] or f"{cfg.mode.value}_{cfg.sampling.value}_seed{cfg.seed}"

        try:
            outcome = run_training_service(cfg, datasets, output_dir, init)
        except NumericAbortError as exc:
            if options["persist"]:
                if exc.partial is not None:
                    persist_run_log_service(label, exc.partial, RunStatus.ABORTED, str(output_dir), exc.diagnostic)
            raise
        if options["persist"]:
            persist_run_log_service(label, outcome.log, RunStatus.COMPLETED, str(output_dir))
        self.emit(
            {
                "output_dir": str(output_dir),
                "config_hash": outcome.log.manifest.config_hash,
                "rows": len(outcome.log.rows),
                "final": outcome.log.final.as_row(),
                "checkpoints": list(outcome.checkpoints),
            }
        )
