from __future__ import annotations

from typing import Any

from rest_framework import status
from rest_framework.exceptions import APIException


class NumericAbortError(APIException):
    """
    Pérdida o gradiente no finito: el paso se aborta sin tocar los parámetros.

    Attributes:
        diagnostic: Descripción del valor no finito
        checkpoint_path: Último checkpoint válido (lo rellena el runner)
        partial: Resultado parcial hasta el paso abortado (lo rellena el runner)
    """

    status_code = status.HTTP_500_INTERNAL_SERVER_ERROR
    default_detail = "Valor numérico no finito"
    default_code = "numeric_abort"

    def __init__(self, diagnostic: str, checkpoint_path: str | None = None) -> None:
        self.diagnostic = diagnostic
        self.checkpoint_path = checkpoint_path
        self.partial: Any = None
        super().__init__(detail=diagnostic)

    def __str__(self) -> str:
        if self.checkpoint_path:
            return f"{self.diagnostic} (último checkpoint: {self.checkpoint_path})"
        return self.diagnostic
