from __future__ import annotations

import json
from pathlib import Path
from typing import TYPE_CHECKING, Any

from apps.experiments.management.commands._base import ExperimentCommand
from apps.experiments.services import (
    build_distill_config_service,
    prepare_datasets_service,
    run_distill_service,
    run_training_service,
)
from apps.policy.services import load_params_service, save_params_service

if TYPE_CHECKING:
    from argparse import ArgumentParser


class Command(ExperimentCommand):
    help = "Destila un teacher en un student de menor capacidad y compara su 5-ACC"

    def add_arguments(self, parser: ArgumentParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--teacher", help="Parámetros JSON del teacher (si falta se entrena con --config)")
        parser.add_argument("--student-dim", type=int, help="D' del student")
        parser.add_argument("--capacity-matched", action="store_true", help="Student con proyección identidad")
        parser.add_argument("--all-slots", action="store_true", help="Destilar los 7 slots")
        parser.add_argument("--steps", type=int)
        parser.add_argument("--lr", type=float)
        parser.add_argument("--output-dir", help="Directorio de salida (por defecto output_dir del config)")

    def run(self, **options: Any) -> None:
        cfg = self.load_config(options)
        output_dir = Path(options["output_dir"] or cfg.output_dir)
        distill_data: dict[str, Any] = {"all_slots": options["all_slots"], "seed": cfg.seed}
        if options["steps"] is not None:
            distill_data["steps"] = options["steps"]
        if options["lr"] is not None:
            distill_data["learning_rate"] = options["lr"]
        if options["capacity_matched"]:
            distill_data["student_dim"] = None
        elif options["student_dim"] is not None:
            distill_data["student_dim"] = options["student_dim"]
        distill_cfg = build_distill_config_service(distill_data)

        train, holdout = prepare_datasets_service(cfg)
        if options["teacher"]:
            teacher = load_params_service(Path(options["teacher"]))
        else:
            teacher = run_training_service(cfg, (train, holdout), output_dir / "teacher").params
        student, report = run_distill_service(teacher, train, holdout, distill_cfg)

        save_params_service(student, output_dir / "student.json")
        report_path = output_dir / "distill_report.json"
        report_path.write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
        self.emit({**report.as_dict(), "output_dir": str(output_dir)})
