import functools
import logging
import sys
from pathlib import Path

import click

from tensorsys import config
from tensorsys.checks import STEP_NAMES, run_checks
from tensorsys.core import EinsteinExpression, Label, LabelError, TensorSystemError, free_labels
from tensorsys.diagram import diagram_json, to_diagram, to_dot
from tensorsys.normal_form import canonical, equivalent, equivalent_up_to_free, oracle_equivalent
from tensorsys.syntax import ParseError, SourceFile, format_expression, parse
from tensorsys.valuation import Signature, ValuationError, eval_pinned, evaluate, load_valuation, tensor_json

logging.basicConfig(
    level=config.LOG_LEVEL, format="%(asctime)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)


class OracleDisagreementError(TensorSystemError):
    """Raised by ``eq --oracle`` when the two decision procedures differ."""

    code = "oracle-disagreement"
    exit_status = 1


def reports_errors(command):
    """Print tensorsys errors as ``error[<code>]: message`` and exit with their status."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except TensorSystemError as e:
            click.secho(f"error[{e.code}]: {e}", fg="red", err=True)
            sys.exit(e.exit_status)

    return wrapper


def _load(path: str) -> SourceFile:
    logger.info(f"Reading {path}")
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror}") from e
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        line = data.count(b"\n", 0, e.start) + 1
        column = e.start - (data.rfind(b"\n", 0, e.start) + 1) + 1
        raise ParseError(f"invalid UTF-8 at byte offset {e.start} in {path}", line, column) from e
    return parse(text)


def _pick_labels(E: EinsteinExpression, names: str | None, side: str) -> tuple[Label, ...] | None:
    """Resolve a comma-separated list of free label names (or canonical literals)."""
    if names is None:
        return None
    lower, upper = free_labels(E)
    free = {str(x): x for x in (lower if side == "lower" else upper)}
    picked = []
    for name in filter(None, (n.strip() for n in names.split(","))):
        if name not in free:
            raise LabelError(f"{name} is not a free {side} label of the expression")
        picked.append(free[name])
    return tuple(picked)


source_file = click.argument("file", type=click.Path(exists=True, dir_okay=False))
expr_option = click.option("--expr", "-e", "expr_name", required=True, help="Name of the expression")
lower_option = click.option("--lower", default=None, help="Free lower labels in order, comma separated")
upper_option = click.option("--upper", default=None, help="Free upper labels in order, comma separated")


@click.group()
def cli():
    """tensorsys - decide, draw and evaluate Einstein expressions."""
    pass


@cli.command()
@source_file
@expr_option
@reports_errors
def reduce(file, expr_name):
    """Print the canonical reduced form of an expression.

    Example:
        tensorsys reduce examples.ats --expr two_boxes
    """
    source = _load(file)
    click.echo(format_expression(canonical(source.expression(expr_name)).to_expression()))


@cli.command()
@source_file
@click.option("--left", "-l", required=True, help="Name of the left expression")
@click.option("--right", "-r", required=True, help="Name of the right expression")
@click.option("--oracle", is_flag=True, help="Cross-check with the brute-force oracle")
@click.option("--up-to-free", is_flag=True, help="Allow renaming free labels")
@reports_errors
def eq(file, left, right, oracle, up_to_free):
    """Exit 0 iff the two expressions are equivalent, 1 otherwise."""
    if oracle and up_to_free:
        raise click.UsageError("--oracle cannot be combined with --up-to-free")
    source = _load(file)
    E, E2 = source.expression(left), source.expression(right)

    result = equivalent_up_to_free(E, E2) if up_to_free else equivalent(E, E2)
    if oracle:
        expected = oracle_equivalent(E, E2)
        if expected != result:
            raise OracleDisagreementError(
                f"canonical forms say {result}, oracle says {expected} for {left} and {right}"
            )
        logger.info("oracle agrees")

    click.echo("equivalent" if result else "not equivalent")
    if not result:
        sys.exit(1)


@cli.command(name="eval")
@source_file
@expr_option
@lower_option
@upper_option
@click.option(
    "--valuation",
    "valuation_file",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON file with dims and tensors (default: the file's own dim/bind declarations)",
)
@click.option("--pinned", is_flag=True, help="Use the pinned-form evaluator instead of einsum")
@reports_errors
def eval_command(file, expr_name, lower, upper, valuation_file, pinned):
    """Print the concrete tensor of an expression as JSON."""
    source = _load(file)
    E = source.expression(expr_name)
    if valuation_file is not None:
        v = load_valuation(valuation_file, Signature.from_alphabet(source.alphabet))
    elif source.has_valuation:
        v = source.valuation()
    else:
        raise ValuationError(f"{file} declares no dims or tensor bindings; pass --valuation")

    lower_order = _pick_labels(E, lower, "lower")
    upper_order = _pick_labels(E, upper, "upper")
    evaluator = eval_pinned if pinned else evaluate
    click.echo(tensor_json(evaluator(E, v, lower_order, upper_order)), nl=False)


def _diagram(file: str, expr_name: str, lower: str | None, upper: str | None):
    source = _load(file)
    E = source.expression(expr_name)
    return to_diagram(E, _pick_labels(E, lower, "lower"), _pick_labels(E, upper, "upper"))


@cli.command()
@source_file
@expr_option
@lower_option
@upper_option
@reports_errors
def dot(file, expr_name, lower, upper):
    """Print the string diagram of an expression as Graphviz DOT."""
    click.echo(to_dot(_diagram(file, expr_name, lower, upper)), nl=False)


@cli.command(name="json")
@source_file
@expr_option
@lower_option
@upper_option
@reports_errors
def json_command(file, expr_name, lower, upper):
    """Print the string diagram of an expression as JSON."""
    click.echo(diagram_json(_diagram(file, expr_name, lower, upper)), nl=False)


@cli.command()
@source_file
@click.option(
    "--stop-after",
    type=click.Choice(list(STEP_NAMES)),
    help="Stop after this step",
)
@reports_errors
def check(file, stop_after):
    """Run every consistency check on every expression in FILE.

    Steps: label-discipline, canonical-forms, diagram-round-trip,
    print-round-trip and valuation (only when the file has one).
    """
    source = _load(file)
    for name in run_checks(source, stop_after=stop_after):
        click.echo(f"ok {name}")


if __name__ == "__main__":
    cli()
