from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Any

from django.core.management.base import CommandError

from apps.experiments.management.commands._base import CONFIG_ERROR, ExperimentCommand
from apps.metrics.services import (
    metrics_summary_service,
    per_class_prf_service,
    predict_records_service,
    read_predictions_jsonl_service,
    write_per_class_csv_service,
    write_predictions_jsonl_service,
)
from apps.policy.services import load_params_service
from apps.world.services import read_dataset_jsonl_service

if TYPE_CHECKING:
    from argparse import ArgumentParser


class Command(ExperimentCommand):
    help = "Calcula 5-ACC, 2-ACC, F1, Pair-ACC y NDCG@k de un fichero de predicciones o de una política"

    def add_arguments(self, parser: ArgumentParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--predictions", help="JSONL de PredictionRecord")
        parser.add_argument("--params", help="Parámetros JSON de la política a evaluar")
        parser.add_argument("--data", help="Dataset JSONL (requerido con --params)")
        parser.add_argument("--write-predictions", help="Guardar las predicciones de --params en JSONL")
        parser.add_argument("--per-class-csv", help="CSV label,precision,recall,f1,support")
        parser.add_argument("--k", type=int, default=3, help="Corte de NDCG")

    def run(self, **options: Any) -> None:
        if options["predictions"]:
            records = read_predictions_jsonl_service(Path(options["predictions"]))
        elif options["params"] and options["data"]:
            cfg = self.load_config(options)
            params = load_params_service(Path(options["params"]))
            dataset = read_dataset_jsonl_service(Path(options["data"]), cfg.world)
            records = predict_records_service(params, dataset, cfg.optim.temperature)
            if options["write_predictions"]:
                write_predictions_jsonl_service(records, Path(options["write_predictions"]))
        else:
            raise CommandError("Se requiere --predictions o --params con --data", returncode=CONFIG_ERROR)

        summary = metrics_summary_service(records, options["k"])
        if options["per_class_csv"]:
            path = write_per_class_csv_service(per_class_prf_service(records), Path(options["per_class_csv"]))
            summary["per_class_csv"] = str(path)
        self.emit(summary)
