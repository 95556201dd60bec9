from __future__ import annotations

from pathlib import Path

from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

import factory.random
import numpy as np

from apps.grammar.domain import (
    CheckpointAnswer,
    SlotIndex,
    Step,
    Trajectory,
)
from apps.grammar.exceptions import FormatError, FormatRule
from apps.grammar.factories import FigureTrajectoryFactory, TrajectoryFactory
from apps.grammar.services import (
    format_gate_service,
    parse_trajectory_service,
    render_trajectory_service,
)

TESTDATA = Path(__file__).resolve().parent / "testdata"


# ============================================================================
# Tests Unitarios - Domain
# ============================================================================


class TrajectoryDomainTestCase(SimpleTestCase):
    """Tests unitarios para Trajectory y Step."""

    def test_from_slots_builds_nine_steps(self):
        """Test: from_slots genera 9 steps con checkpoints en 4-8."""
        # Act
        trajectory = FigureTrajectoryFactory()

        # Assert
        self.assertEqual(len(trajectory.trace), 9)
        self.assertEqual(
            trajectory.checkpoints,
            (
                CheckpointAnswer.NO,
                CheckpointAnswer.NO,
                CheckpointAnswer.YES,
                CheckpointAnswer.YES,
                CheckpointAnswer.NO,
            ),
        )
        self.assertEqual(trajectory.trace[1].boxed, CheckpointAnswer.YES)
        self.assertEqual(trajectory.trace[2].boxed, CheckpointAnswer.NONE)
        self.assertIsNone(trajectory.trace[0].boxed)

    def test_slot_tokens_round_trip(self):
        """Test: slot_tokens y from_slot_tokens son inversas."""
        # Arrange
        trajectory = FigureTrajectoryFactory()

        # Act
        tokens = trajectory.slot_tokens()

        # Assert
        self.assertEqual(tokens, (3, 1, 1, 0, 0, 1, 3))
        self.assertEqual(Trajectory.from_slot_tokens(tokens), trajectory)
        self.assertEqual(len(SlotIndex), 7)

    def test_slot_tokens_rejects_none_checkpoint(self):
        """Test: un checkpoint None no es una acción de la política."""
        # Arrange
        trajectory = Trajectory.from_slots(2, ["No", "No", "Yes", "None", "No"], 2)

        # Act & Assert
        with self.assertRaises(ValidationError):
            trajectory.slot_tokens()

    def test_invalid_label_rejected(self):
        """Test: etiquetas fuera de [0, 4] se rechazan."""
        with self.assertRaises(ValidationError):
            Trajectory.from_slots(5, ["No"] * 5, 5)

    def test_wrong_step_count_rejected(self):
        """Test: una traza de 8 steps no es una Trajectory."""
        # Arrange
        trace = FigureTrajectoryFactory().trace[:8]

        # Act & Assert
        with self.assertRaises(ValidationError):
            Trajectory(y_dec=3, trace=trace, y_final=3)

    def test_step_rejects_embedded_box(self):
        """Test: el texto de un step no puede contener un box."""
        with self.assertRaises(ValidationError):
            Step(number=1, title="Intent", text="x \\boxed{Yes}")


# ============================================================================
# Tests Unitarios - Services (render / parse)
# ============================================================================


class RenderTrajectoryServiceTestCase(SimpleTestCase):
    """Tests para render_trajectory_service."""

    def test_figure_example_matches_golden_file(self):
        """Test: el ejemplo [3] coincide byte a byte con el golden file."""
        # Arrange
        expected = (TESTDATA / "figure_trajectory.txt").read_text(encoding="utf-8")

        # Act
        text = render_trajectory_service(FigureTrajectoryFactory())

        # Assert
        self.assertEqual(text, expected)
        self.assertTrue(text.startswith("[3]\n<think>\n"))
        self.assertIn("Step 4: Irrelevant? - ", text)
        self.assertIn("\\boxed{No}\nStep 9:", text)
        self.assertTrue(text.endswith("</think>\n[3]\n"))

    def test_label_zero_prefix(self):
        """Test: y_dec=0 renderiza `[0]` como primera línea."""
        # Arrange
        trajectory = Trajectory.from_slots(0, ["Yes", "No", "No", "No", "No"], 0)

        # Act
        text = render_trajectory_service(trajectory)

        # Assert
        self.assertTrue(text.startswith("[0]"))


class ParseTrajectoryServiceTestCase(SimpleTestCase):
    """Tests para parse_trajectory_service."""

    def setUp(self):
        """Arrange: texto canónico del ejemplo."""
        factory.random.reseed_random(1234)
        self.text = render_trajectory_service(FigureTrajectoryFactory())
        self.lines = self.text.splitlines()

    def _assert_format_error(self, text, rule, step=None):
        with self.assertRaises(FormatError) as ctx:
            parse_trajectory_service(text)
        self.assertEqual(ctx.exception.rule, rule)
        self.assertEqual(ctx.exception.step, step)
        return ctx.exception

    def test_parse_figure_example(self):
        """Test: el ejemplo parsea con y_dec=3, y_final=3."""
        # Act
        trajectory = parse_trajectory_service(self.text)

        # Assert
        self.assertEqual(trajectory.y_dec, 3)
        self.assertEqual(trajectory.y_final, 3)
        self.assertEqual(trajectory, FigureTrajectoryFactory())

    def test_round_trip_random_trajectories(self):
        """Test: parse(render(t)) == t para trayectorias aleatorias."""
        for trajectory in TrajectoryFactory.build_batch(200):
            self.assertEqual(parse_trajectory_service(render_trajectory_service(trajectory)), trajectory)

    def test_round_trip_inconsistent_and_none_checkpoints(self):
        """Test: el round-trip no exige consistencia ni checkpoints de la política."""
        # Arrange
        trajectory = Trajectory.from_slots(1, ["None", "Yes", "No", "None", "Yes"], 4)

        # Act & Assert
        self.assertEqual(parse_trajectory_service(render_trajectory_service(trajectory)), trajectory)

    def test_missing_step_six(self):
        """Test: borrar el Step 6 produce MissingStep(6)."""
        # Arrange
        text = "\n".join(line for line in self.lines if not line.startswith("Step 6:")) + "\n"

        # Act & Assert
        error = self._assert_format_error(text, FormatRule.MISSING_STEP, 6)
        self.assertEqual(error.error_code, "MISSING_STEP(6)")
        self.assertEqual(str(error), "MISSING_STEP(6)")

    def test_bad_boxed_value(self):
        """Test: `\\boxed{Maybe}` en el Step 5 produce BadBoxed(5)."""
        # Arrange
        text = self.text.replace(
            "weakly? \\boxed{No}", "weakly? \\boxed{Maybe}"
        )

        # Act & Assert
        self._assert_format_error(text, FormatRule.BAD_BOXED, 5)

    def test_missing_box_in_checkpoint_step(self):
        """Test: un checkpoint sin box es BadBoxed."""
        # Arrange
        text = self.text.replace(" \\boxed{Yes}\nStep 7", "\nStep 7")

        # Act & Assert
        self._assert_format_error(text, FormatRule.BAD_BOXED, 6)

    def test_double_box_rejected(self):
        """Test: dos boxes en un mismo step es BadBoxed."""
        # Arrange
        text = self.text.replace("directly? \\boxed{Yes}", "directly? \\boxed{Yes} \\boxed{No}")

        # Act & Assert
        self._assert_format_error(text, FormatRule.BAD_BOXED, 6)

    def test_box_in_synthesis_rejected(self):
        """Test: el Step 9 no admite box."""
        # Arrange
        text = self.text.replace("relevance level\n", "relevance level \\boxed{Yes}\n")

        # Act & Assert
        self._assert_format_error(text, FormatRule.BAD_BOXED, 9)

    def test_missing_decision(self):
        """Test: sin etiqueta inicial se reporta MissingDecision."""
        # Arrange
        text = "\n".join(self.lines[1:]) + "\n"

        # Act & Assert
        error = self._assert_format_error(text, FormatRule.MISSING_DECISION)
        self.assertEqual(error.error_code, "MISSING_DECISION")

    def test_missing_think_open(self):
        """Test: sin `<think>` el Step 1 no aparece en su sitio."""
        # Arrange
        text = self.text.replace("<think>\n", "")

        # Act & Assert
        self._assert_format_error(text, FormatRule.MISSING_STEP, 1)

    def test_missing_final(self):
        """Test: sin confirmación final se reporta MissingFinal."""
        # Arrange
        text = "\n".join(self.lines[:-1]) + "\n"

        # Act & Assert
        self._assert_format_error(text, FormatRule.MISSING_FINAL)

    def test_missing_think_close(self):
        """Test: sin `</think>` se reporta MissingFinal."""
        # Arrange
        text = self.text.replace("</think>\n", "")

        # Act & Assert
        self._assert_format_error(text, FormatRule.MISSING_FINAL)

    def test_extra_step_ten(self):
        """Test: un `Step 10` tras el Step 9 es ExtraContent."""
        # Arrange
        text = self.text.replace("</think>", "Step 10: Extra - more\n</think>")

        # Act & Assert
        self._assert_format_error(text, FormatRule.EXTRA_CONTENT)

    def test_trailing_content(self):
        """Test: líneas tras la etiqueta final son ExtraContent."""
        self._assert_format_error(self.text + "[3]\n", FormatRule.EXTRA_CONTENT)

    def test_text_without_trailing_newline_accepted(self):
        """Test: el salto de línea final es opcional."""
        self.assertEqual(parse_trajectory_service(self.text.rstrip("\n")).y_final, 3)

    def test_bytes_input(self):
        """Test: la entrada en bytes se decodifica."""
        self.assertEqual(parse_trajectory_service(self.text.encode("utf-8")).y_dec, 3)

    def test_parser_is_total_on_arbitrary_bytes(self):
        """Test: bytes arbitrarios devuelven Trajectory o FormatError, nunca otra excepción."""
        # Arrange
        rng = np.random.default_rng(7)
        payloads = [bytes(rng.integers(0, 256, size=int(n)).astype(np.uint8)) for n in rng.integers(0, 400, size=300)]
        payloads += [b"", b"\xff\xfe", b"[3]\n<think>\nStep 99999999999999999999999: x - y\n"]

        # Act & Assert
        for payload in payloads:
            try:
                parse_trajectory_service(payload)
            except FormatError:
                pass


class FormatGateServiceTestCase(SimpleTestCase):
    """Tests para format_gate_service."""

    def setUp(self):
        """Arrange: texto canónico del ejemplo."""
        self.text = render_trajectory_service(FigureTrajectoryFactory())

    def test_valid_trajectory_passes(self):
        """Test: una trayectoria renderizada pasa el gate."""
        self.assertEqual(format_gate_service(self.text), 1)

    def test_empty_string_fails(self):
        """Test: la cadena vacía no pasa el gate."""
        self.assertEqual(format_gate_service(""), 0)

    def test_missing_final_fails(self):
        """Test: sin confirmación final el gate es 0."""
        self.assertEqual(format_gate_service(self.text.rsplit("[3]", 1)[0]), 0)

    def test_single_structural_mutations_flip_gate(self):
        """Test: eliminar un header o corromper un box pone el gate a 0."""
        # Arrange
        mutations = [self.text.replace(f"Step {n}: ", "", 1) for n in range(1, 10)]
        mutations += [
            self.text.replace("\\boxed{No}", "\\boxed{no}", 1),
            self.text.replace("\\boxed{Yes}\nStep 7", "\\boxed{Yes\nStep 7"),
            self.text.replace("<think>", "<thinking>"),
            self.text.replace("</think>", "</thinking>"),
            self.text.replace("[3]\n", "3\n", 1),
        ]

        # Act & Assert
        for mutated in mutations:
            self.assertNotEqual(mutated, self.text)
            self.assertEqual(format_gate_service(mutated), 0, mutated)
