from __future__ import annotations

import json
import logging
from argparse import BooleanOptionalAction
from pathlib import Path
from typing import TYPE_CHECKING, Any

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from apps.experiments.services import build_experiment_config_service, load_experiment_config_service
from apps.optim.exceptions import NumericAbortError

if TYPE_CHECKING:
    from argparse import ArgumentParser

    from apps.experiments.domain import ExperimentConfig

logger = logging.getLogger(__name__)

CONFIG_ERROR = 2
NUMERIC_ABORT = 3


def resolve_config_path(value: str) -> Path:
    """Ruta tal cual o, si no existe, relativa a AFRL["CONFIG_DIR"]."""
    path = Path(value)
    if path.exists():
        return path
    fallback = Path(settings.AFRL["CONFIG_DIR"]) / value
    return fallback if fallback.exists() else path


class ExperimentCommand(BaseCommand):
    """
    Base de los comandos del runner.

    Añade `--config` y `--deterministic/--no-deterministic` y traduce los errores
    a códigos de salida: 2 para configuración inválida y 3 para abortos numéricos.
    """

    requires_config = False

    def add_arguments(self, parser: ArgumentParser) -> None:
        parser.add_argument(
            "--config",
            required=self.requires_config,
            help="Config JSON (ruta o nombre dentro de config/experiments/)",
        )
        parser.add_argument(
            "--deterministic",
            action=BooleanOptionalAction,
            default=None,
            help="Ejecución reproducible bit a bit (por defecto AFRL_DETERMINISTIC)",
        )

    def handle(self, *args: Any, **options: Any) -> None:
        try:
            self.run(**options)
        except ValidationError as exc:
            logger.error("config error command=%s detail=%s", self.__class__.__module__, exc.detail)
            raise CommandError(f"Configuración inválida: {exc.detail}", returncode=CONFIG_ERROR) from exc
        except NumericAbortError as exc:
            raise CommandError(f"Aborto numérico: {exc}", returncode=NUMERIC_ABORT) from exc

    def run(self, **options: Any) -> None:
        raise NotImplementedError

    def load_config(self, options: dict[str, Any], overrides: dict[str, Any] | None = None) -> ExperimentConfig:
        """Config del fichero (o por defecto) con overrides de la línea de comandos."""
        overrides = {key: value for key, value in (overrides or {}).items() if value is not None}
        deterministic = options.get("deterministic")
        if deterministic is None and not options.get("config"):
            deterministic = settings.AFRL["DETERMINISTIC"]
        if deterministic is not None:
            overrides["deterministic"] = deterministic
        if options.get("config"):
            return load_experiment_config_service(resolve_config_path(options["config"]), overrides)
        return build_experiment_config_service(overrides)

    def emit(self, payload: dict[str, Any]) -> None:
        """Escribe el resumen JSON del comando en stdout."""
        self.stdout.write(json.dumps(payload, indent=2, sort_keys=True, default=str))
