from __future__ import annotations

from enum import Enum

from rest_framework.exceptions import ValidationError


class FormatRule(str, Enum):
    MISSING_DECISION = "missing_decision"
    MISSING_STEP = "missing_step"
    BAD_BOXED = "bad_boxed"
    MISSING_FINAL = "missing_final"
    EXTRA_CONTENT = "extra_content"


class FormatError(ValidationError):
    """
    Violación de la gramática AFRL.

    Attributes:
        rule: Primera regla violada
        step: Número de step implicado (solo MissingStep y BadBoxed)
    """

    default_code = "format_error"

    def __init__(self, rule: FormatRule, step: int | None = None) -> None:
        self.rule = rule
        self.step = step
        super().__init__({"trajectory": [self.error_code]}, code=rule.value)

    @property
    def error_code(self) -> str:
        """Código estable para la salida del CLI, p. ej. `MISSING_STEP(6)`."""
        name = self.rule.name
        return f"{name}({self.step})" if self.step is not None else name

    def __str__(self) -> str:
        return self.error_code

    def __repr__(self) -> str:
        return f"FormatError({self.error_code})"
