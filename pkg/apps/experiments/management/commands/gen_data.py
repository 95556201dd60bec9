from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import TYPE_CHECKING, Any

from apps.experiments.management.commands._base import ExperimentCommand
from apps.experiments.services import prepare_datasets_service
from apps.world.services import write_dataset_jsonl_service

if TYPE_CHECKING:
    from argparse import ArgumentParser


class Command(ExperimentCommand):
    help = "gen-data: genera el mundo sintético y escribe train.jsonl y holdout.jsonl"

    def add_arguments(self, parser: ArgumentParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--output-dir", required=True, help="Directorio de salida")
        parser.add_argument("--train-size", type=int, help="Instancias de entrenamiento")
        parser.add_argument("--seed", type=int, help="Semilla del mundo")

    def run(self, **options: Any) -> None:
        overrides: dict[str, Any] = {"train_size": options["train_size"]}
        cfg = self.load_config(options, overrides)
        if options["seed"] is not None:
            cfg = replace(cfg, world=replace(cfg.world, seed=options["seed"]))
        train, holdout = prepare_datasets_service(cfg)
        output_dir = Path(options["output_dir"])
        self.emit(
            {
                "train": write_dataset_jsonl_service(train, output_dir / "train.jsonl"),
                "holdout": write_dataset_jsonl_service(holdout, output_dir / "holdout.jsonl"),
                "output_dir": str(output_dir),
                "world": cfg.world.as_dict(),
            }
        )
