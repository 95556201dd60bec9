from __future__ import annotations

import re

from apps.grammar.domain import (
    CHECKPOINT_STEPS,
    NUM_STEPS,
    CheckpointAnswer,
    Step,
    Trajectory,
)
from apps.grammar.exceptions import FormatError, FormatRule

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
BOX_MARKER = "\\boxed{"

_LABEL_LINE = re.compile(r"\[([0-4])\]")
_STEP_LINE = re.compile(r"Step ([0-9]+): (.*)")
_TRAILING_BOX = re.compile(r"(.*) \\boxed\{(Yes|No|None)\}")

# Steps 2 y 3 admiten como mucho un box; 4-8 exactamente uno; 1 y 9 ninguno
_OPTIONAL_BOX_STEPS = (2, 3)


def render_trajectory_service(trajectory: Trajectory) -> str:
    """
    Renderiza una trayectoria con la plantilla canónica AFRL.

    Cada línea termina en `\\n`: `[k]`, `<think>`, los nueve `Step n: ...`,
    `</think>` y `[k']`.

    Args:
        trajectory: Trayectoria válida

    Returns:
        Texto canónico
    """
    lines = [f"[{trajectory.y_dec}]", THINK_OPEN]
    for step in trajectory.trace:
        line = f"Step {step.number}: {step.title} - {step.text}"
        if step.boxed is not None:
            line += f" {BOX_MARKER}{step.boxed.value}}}"
        lines.append(line)
    lines.extend([THINK_CLOSE, f"[{trajectory.y_final}]"])
    return "\n".join(lines) + "\n"


def _parse_step(number: int, line: str | None) -> Step:
    match = _STEP_LINE.fullmatch(line) if line is not None else None
    if match is None or match.group(1) != str(number):
        raise FormatError(FormatRule.MISSING_STEP, number)

    title, sep, body = match.group(2).partition(" - ")
    if not sep or not title:
        raise FormatError(FormatRule.MISSING_STEP, number)

    box_count = body.count(BOX_MARKER)
    if box_count == 0:
        if number in CHECKPOINT_STEPS:
            raise FormatError(FormatRule.BAD_BOXED, number)
        return Step(number=number, title=title, text=body)

    if box_count > 1 or number not in (*CHECKPOINT_STEPS, *_OPTIONAL_BOX_STEPS):
        raise FormatError(FormatRule.BAD_BOXED, number)
    boxed = _TRAILING_BOX.fullmatch(body)
    if boxed is None:
        raise FormatError(FormatRule.BAD_BOXED, number)
    return Step(
        number=number,
        title=title,
        text=boxed.group(1),
        boxed=CheckpointAnswer(boxed.group(2)),
    )


def parse_trajectory_service(text: str | bytes) -> Trajectory:
    """
    Parser estricto de la gramática AFRL.

    Recorre el texto de arriba abajo y reporta la primera regla violada.

    Args:
        text: Texto arbitrario (los bytes se decodifican como UTF-8 con reemplazo)

    Returns:
        La Trajectory parseada

    Raises:
        FormatError: MissingDecision, MissingStep(n), BadBoxed(n), MissingFinal o ExtraContent
    """
    if isinstance(text, bytes | bytearray):
        text = bytes(text).decode("utf-8", errors="replace")
    if not isinstance(text, str):
        raise FormatError(FormatRule.MISSING_DECISION)

    if text.endswith("\n"):
        text = text[:-1]
    lines = text.split("\n")

    def line_at(index: int) -> str | None:
        return lines[index] if index < len(lines) else None

    decision = _LABEL_LINE.fullmatch(lines[0])
    if decision is None:
        raise FormatError(FormatRule.MISSING_DECISION)

    if line_at(1) != THINK_OPEN:
        raise FormatError(FormatRule.MISSING_STEP, 1)

    trace = tuple(_parse_step(n, line_at(1 + n)) for n in range(1, NUM_STEPS + 1))

    close_index = 2 + NUM_STEPS
    close_line = line_at(close_index)
    if close_line != THINK_CLOSE:
        if close_line is not None and _STEP_LINE.fullmatch(close_line):
            raise FormatError(FormatRule.EXTRA_CONTENT)
        raise FormatError(FormatRule.MISSING_FINAL)

    final_line = line_at(close_index + 1)
    final = _LABEL_LINE.fullmatch(final_line) if final_line is not None else None
    if final is None:
        raise FormatError(FormatRule.MISSING_FINAL)

    if len(lines) > close_index + 2:
        raise FormatError(FormatRule.EXTRA_CONTENT)

    return Trajectory(y_dec=int(decision.group(1)), trace=trace, y_final=int(final.group(1)))


def format_gate_service(text: str | bytes) -> int:
    """I_fmt: 1 si el texto parsea, 0 en caso contrario."""
    try:
        parse_trajectory_service(text)
    except FormatError:
        return 0
    return 1
