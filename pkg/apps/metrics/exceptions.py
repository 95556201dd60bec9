from __future__ import annotations

from rest_framework.exceptions import ValidationError


class NoEligiblePairsError(ValidationError):
    """Ninguna query tiene dos documentos con etiquetas distintas."""

    default_code = "no_eligible_pairs"

    def __init__(self, n_records: int) -> None:
        self.n_records = n_records
        super().__init__(
            {"records": f"Sin pares elegibles en {n_records} registros"},
            code=self.default_code,
        )
