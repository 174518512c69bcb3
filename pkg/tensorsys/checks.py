"""Consistency checks run by the ``check`` command."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

from tensorsys.core import TensorSystemError
from tensorsys.diagram import boundary_order, diagram_json, from_diagram, parse_diagram_json, to_diagram
from tensorsys.normal_form import canonical, equivalent, is_reduced
from tensorsys.syntax import SourceFile, format_source, parse
from tensorsys.valuation import eval_pinned, evaluate

logger = logging.getLogger(__name__)


@dataclass
class CheckStep:
    """A named check over every expression of a source file."""

    name: str
    description: str
    applies: Callable[[], bool]
    execute: Callable[[], None]


class CheckError(TensorSystemError):
    """Raised when a check step fails; keeps the failing step's exit status."""

    code = "check-failed"

    def __init__(self, message: str, exit_status: int = 1):
        super().__init__(message)
        self.exit_status = exit_status


STEP_NAMES = (
    "label-discipline",
    "canonical-forms",
    "diagram-round-trip",
    "print-round-trip",
    "valuation",
)


def _fail(message: str) -> None:
    raise CheckError(message)


def check_label_discipline(source: SourceFile) -> None:
    for E in source.expressions.values():
        E.validate(source.alphabet)


def check_canonical_forms(source: SourceFile) -> None:
    for name, E in source.expressions.items():
        normal = canonical(E)
        again = normal.to_expression()
        if not is_reduced(again):
            _fail(f"canonical form of {name} is not delta-reduced")
        if canonical(again) != normal:
            _fail(f"canonical form of {name} is not idempotent")


def check_diagram_round_trip(source: SourceFile) -> None:
    for name, E in source.expressions.items():
        lower, upper = boundary_order(E)
        D = to_diagram(E, lower, upper)
        if parse_diagram_json(diagram_json(D)) != D:
            _fail(f"diagram JSON of {name} does not read back")
        if not equivalent(from_diagram(D, lower_labels=lower, upper_labels=upper), E):
            _fail(f"diagram of {name} does not convert back to an equivalent expression")


def check_print_round_trip(source: SourceFile) -> None:
    reread = parse(format_source(source))
    for name, E in source.expressions.items():
        if not equivalent(reread.expression(name), E):
            _fail(f"printed form of {name} parses to an inequivalent expression")


def _evaluable(source: SourceFile, E) -> bool:
    return all(s.name in source.bindings for s in E.symbols) and all(
        x.type in source.dims for x in E.labels()
    )


def check_valuation(source: SourceFile) -> None:
    v = source.valuation()
    for name, E in source.expressions.items():
        if not _evaluable(source, E):
            logger.debug(f"  {name}: not fully assigned, skipping")
            continue
        if evaluate(E, v) != eval_pinned(E, v):
            _fail(f"einsum and pinned evaluation of {name} disagree")


def run_checks(source: SourceFile, stop_after: Optional[str] = None) -> list[str]:
    """Run the check steps in order.

    Args:
        source: a parsed source file
        stop_after: name of the last step to run

    Returns:
        Names of the steps that ran (skipped steps are not listed).

    Raises:
        CheckError: if any step fails
    """
    steps = [
        CheckStep(
            name="label-discipline",
            description="Validating labels against the alphabet",
            applies=lambda: True,
            execute=lambda: check_label_discipline(source),
        ),
        CheckStep(
            name="canonical-forms",
            description="Checking canonical forms are reduced and idempotent",
            applies=lambda: True,
            execute=lambda: check_canonical_forms(source),
        ),
        CheckStep(
            name="diagram-round-trip",
            description="Converting to diagrams and back",
            applies=lambda: True,
            execute=lambda: check_diagram_round_trip(source),
        ),
        CheckStep(
            name="print-round-trip",
            description="Printing the file and parsing it again",
            applies=lambda: True,
            execute=lambda: check_print_round_trip(source),
        ),
        CheckStep(
            name="valuation",
            description="Comparing einsum and pinned-form evaluation",
            applies=lambda: source.has_valuation,
            execute=lambda: check_valuation(source),
        ),
    ]

    logger.info(f"Checking {len(source.expressions)} expressions")
    ran = []
    for step in steps:
        logger.info(f"Step: {step.name}")
        if not step.applies():
            logger.info("  nothing to check, skipping")
        else:
            logger.info(f"  → {step.description}")
            try:
                step.execute()
                logger.info("  ✓ Complete")
            except CheckError as e:
                logger.error(f"  ✗ {e}")
                raise CheckError(f"step '{step.name}' failed: {e}") from e
            except TensorSystemError as e:
                logger.error(f"  ✗ {e}")
                raise CheckError(f"step '{step.name}' failed: {e}", e.exit_status) from e
            ran.append(step.name)

        if stop_after == step.name:
            logger.info(f"Stopping after {step.name} as requested")
            break
    return ran
