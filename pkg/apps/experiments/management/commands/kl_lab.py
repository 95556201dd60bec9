from __future__ import annotations

import json
from pathlib import Path
from typing import TYPE_CHECKING, Any

from rest_framework.exceptions import ValidationError

import pandas as pd

from apps.experiments.management.commands._base import ExperimentCommand, resolve_config_path
from apps.kl_lab.services import fit_trace_rows, run_kl_lab_service

if TYPE_CHECKING:
    from argparse import ArgumentParser

TRACE_COLUMNS = ["direction", "seed", "step", "loss", "mu", "sigma"]


class Command(ExperimentCommand):
    help = "kl-lab: laboratorio de divergencias (identidades, política de Gibbs y ajustes forward/reverse)"

    def add_arguments(self, parser: ArgumentParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--seeds", type=int, help="Número de semillas del ajuste bimodal")
        parser.add_argument("--pairs", type=int, help="Pares aleatorios de las identidades")
        parser.add_argument("--steps", type=int, help="Pasos de Adam por ajuste")
        parser.add_argument("--lr", type=float)
        parser.add_argument("--output-dir", help="Directorio para report.json y traces.csv")

    def run(self, **options: Any) -> None:
        settings_data: dict[str, Any] = {"seeds": 10, "pairs": 1000, "steps": 2000, "lr": 0.1}
        if options["config"]:
            path = resolve_config_path(options["config"])
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ValidationError({"config": f"No se pudo leer {path}: {exc}"}) from exc
            settings_data.update(data.get("kl_lab", {}))
        settings_data.update({k: options[k] for k in settings_data if options.get(k) is not None})

        report = run_kl_lab_service(
            seeds=range(settings_data["seeds"]),
            n_pairs=settings_data["pairs"],
            steps=settings_data["steps"],
            lr=settings_data["lr"],
        )
        payload = report.as_dict()
        if options["output_dir"]:
            output_dir = Path(options["output_dir"])
            output_dir.mkdir(parents=True, exist_ok=True)
            (output_dir / "report.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
            pd.DataFrame(fit_trace_rows(report.fits), columns=TRACE_COLUMNS).to_csv(
                output_dir / "traces.csv", index=False
            )
        self.emit({key: value for key, value in payload.items() if key != "fits"})
