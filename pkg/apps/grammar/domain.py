from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import TYPE_CHECKING

from rest_framework.exceptions import ValidationError

if TYPE_CHECKING:
    from collections.abc import Sequence

RELEVANCE_LABELS: tuple[int, ...] = (0, 1, 2, 3, 4)
NUM_STEPS = 9
CHECKPOINT_STEPS: tuple[int, ...] = (4, 5, 6, 7, 8)


class CheckpointAnswer(str, Enum):
    """Respuesta de un checkpoint encerrada en `\\boxed{...}`."""

    YES = "Yes"
    NO = "No"
    NONE = "None"


class SlotIndex(IntEnum):
    """Los 7 slots controlados por la política."""

    DECISION = 0
    IRRELEVANT = 1
    WEAK = 2
    STRONG = 3
    PREMIUM = 4
    OFFICIAL = 5
    FINAL = 6


NUM_SLOTS = len(SlotIndex)
CHECKPOINT_SLOTS: tuple[SlotIndex, ...] = (
    SlotIndex.IRRELEVANT,
    SlotIndex.WEAK,
    SlotIndex.STRONG,
    SlotIndex.PREMIUM,
    SlotIndex.OFFICIAL,
)

# Vocabulario de los slots 1..5: índice 0 = Yes, índice 1 = No
CHECKPOINT_VOCAB: tuple[CheckpointAnswer, ...] = (CheckpointAnswer.YES, CheckpointAnswer.NO)
SLOT_VOCAB_SIZES: tuple[int, ...] = (5, 2, 2, 2, 2, 2, 5)

STEP_TITLES: tuple[str, ...] = (
    "Intent",
    "Domain",
    "Freshness",
    "Irrelevant?",
    "Weak?",
    "Strong?",
    "Premium?",
    "Official?",
    "Synthesis",
)

TEMPLATE_TEXT: dict[int, str] = {
    1: "Identify what the query is asking for",
    2: "Check that the document belongs to the query domain",
    3: "Check whether the query needs fresh content",
    4: "Does the document fail to match the query at all?",
    5: "Does the document only touch the topic weakly?",
    6: "Does the document answer the query directly?",
    7: "Is the answer complete and of premium quality?",
    8: "Is the document an official or authoritative source?",
    9: "Combine the checkpoints into the final relevance level",
}

# Steps 2 y 3 llevan un box fijo por plantilla
TEMPLATE_BOXED: dict[int, CheckpointAnswer] = {
    2: CheckpointAnswer.YES,
    3: CheckpointAnswer.NONE,
}


def validate_label(value: int, field: str = "label") -> int:
    """
    Valida una etiqueta ordinal de relevancia.

    Args:
        value: Valor a validar
        field: Nombre del campo para el mensaje de error

    Returns:
        La etiqueta como entero

    Raises:
        ValidationError: Si el valor no está en [0, 4]
    """
    try:
        valid = not isinstance(value, bool) and int(value) == value and int(value) in RELEVANCE_LABELS
    except (TypeError, ValueError):
        valid = False
    if not valid:
        raise ValidationError({field: f"Debe ser un entero en [0, 4], recibido {value!r}"})
    return int(value)


@dataclass(frozen=True)
class Step:
    """Una línea `Step n: Title - text` del bloque `<think>`."""

    number: int
    title: str
    text: str
    boxed: CheckpointAnswer | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.number <= NUM_STEPS:
            raise ValidationError({"number": f"Step fuera de rango: {self.number}"})
        if not self.title or " - " in self.title or "\n" in self.title:
            raise ValidationError({"title": "El título no puede estar vacío ni contener ' - '"})
        if "\n" in self.text or "\\boxed{" in self.text:
            raise ValidationError({"text": "El texto no puede contener saltos de línea ni boxes"})


@dataclass(frozen=True)
class Trajectory:
    """
    Trayectoria AFRL completa: decisión, traza de 9 pasos y confirmación final.

    Los pasos 4-8 llevan exactamente un CheckpointAnswer en su box.
    """

    y_dec: int
    trace: tuple[Step, ...]
    y_final: int

    def __post_init__(self) -> None:
        validate_label(self.y_dec, "y_dec")
        validate_label(self.y_final, "y_final")
        if len(self.trace) != NUM_STEPS:
            raise ValidationError({"trace": f"Se esperaban 9 steps, recibidos {len(self.trace)}"})
        for position, step in enumerate(self.trace, start=1):
            if step.number != position:
                raise ValidationError({"trace": f"Step {step.number} en la posición {position}"})
            if position in CHECKPOINT_STEPS and step.boxed is None:
                raise ValidationError({"trace": f"Step {position} requiere un checkpoint"})
            if position in (1, NUM_STEPS) and step.boxed is not None:
                raise ValidationError({"trace": f"Step {position} no admite box"})

    @property
    def checkpoints(self) -> tuple[CheckpointAnswer, ...]:
        """Checkpoints c_1..c_5 (steps 4-8, en orden)."""
        return tuple(self.trace[n - 1].boxed for n in CHECKPOINT_STEPS)  # type: ignore[misc]

    @classmethod
    def from_slots(
        cls,
        y_dec: int,
        checkpoints: Sequence[CheckpointAnswer | str],
        y_final: int,
    ) -> Trajectory:
        """
        Construye una trayectoria canónica a partir de los 7 slots.

        Args:
            y_dec: Etiqueta de decisión (primer token)
            checkpoints: 5 respuestas para los steps 4-8
            y_final: Etiqueta de confirmación final

        Returns:
            Trajectory con la prosa de plantilla en los steps fijos
        """
        if len(checkpoints) != len(CHECKPOINT_STEPS):
            raise ValidationError({"checkpoints": "Se requieren exactamente 5 checkpoints"})
        answers = dict(zip(CHECKPOINT_STEPS, (CheckpointAnswer(c) for c in checkpoints)))
        trace = tuple(
            Step(
                number=n,
                title=STEP_TITLES[n - 1],
                text=TEMPLATE_TEXT[n],
                boxed=answers.get(n, TEMPLATE_BOXED.get(n)),
            )
            for n in range(1, NUM_STEPS + 1)
        )
        return cls(y_dec=int(y_dec), trace=trace, y_final=int(y_final))

    @classmethod
    def from_slot_tokens(cls, tokens: Sequence[int]) -> Trajectory:
        """Inversa de `slot_tokens`: 7 índices de vocabulario a trayectoria."""
        if len(tokens) != NUM_SLOTS:
            raise ValidationError({"tokens": "Se requieren exactamente 7 tokens"})
        checkpoints = [CHECKPOINT_VOCAB[int(t)] for t in tokens[1:6]]
        return cls.from_slots(int(tokens[0]), checkpoints, int(tokens[6]))

    def slot_tokens(self) -> tuple[int, ...]:
        """
        Índices de vocabulario de los 7 slots controlados.

        Raises:
            ValidationError: Si algún checkpoint es `None` (fuera del vocabulario de la política)
        """
        tokens = [self.y_dec]
        for answer in self.checkpoints:
            if answer not in CHECKPOINT_VOCAB:
                raise ValidationError({"checkpoints": "None no es una acción de la política"})
            tokens.append(CHECKPOINT_VOCAB.index(answer))
        tokens.append(self.y_final)
        return tuple(tokens)
