"""Command line entry point for qrecords."""
from __future__ import annotations

import hashlib
import json
import logging
import warnings
from pathlib import Path

import click
from pydantic import ValidationError

from qrecords.const import VERSION, ExitStatus
from qrecords.experiments import ExperimentOutcome, run_experiment
from qrecords.models import Report, Scenario
from qrecords.types import (
    CoincidenceWarning,
    DisturbingPreconditionWarning,
    NumericalViolationError,
    QRecordsError,
)

__all__ = ["cli", "load_scenario", "write_outputs"]

_LOGGER = logging.getLogger(__name__)

REPORT_FILE = "report.json"
SUMMARY_FILE = "summary.txt"
EVENTS_FILE = "events.jsonl"

# Pydantic error types of invariant violations and out-of-range values.
_VALIDATION_ERROR_TYPES = frozenset(
    {
        "value_error",
        "greater_than",
        "greater_than_equal",
        "less_than",
        "less_than_equal",
    },
)


class ScenarioLoadError(click.ClickException):
    """A scenario file could not be read into a Scenario."""

    def __init__(self, message: str, status: ExitStatus) -> None:
        """Initialize with the exit status of the failure category."""
        super().__init__(message)
        self.exit_code = int(status)


def load_scenario(raw: bytes) -> Scenario:
    """Parse and validate scenario bytes.

    Malformed JSON and schema errors map to the parse status. Invariant
    violations raised by validators and values outside their allowed range
    map to the validation status.
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        msg = f"scenario is not valid JSON: {exc}"
        raise ScenarioLoadError(msg, ExitStatus.PARSE_ERROR) from exc
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        semantic = all(error["type"] in _VALIDATION_ERROR_TYPES for error in exc.errors())
        status = ExitStatus.VALIDATION_ERROR if semantic else ExitStatus.PARSE_ERROR
        raise ScenarioLoadError(str(exc), status) from exc


def _diagnostics(caught: list[warnings.WarningMessage]) -> list[str]:
    return sorted(
        {
            f"{w.category.__name__}: {w.message}"
            for w in caught
            if issubclass(w.category, (DisturbingPreconditionWarning, CoincidenceWarning))
        },
    )


def write_outputs(out: Path, report: Report, outcome: ExperimentOutcome) -> None:
    """Write the report, the summary and the run log into `out`."""
    out.mkdir(parents=True, exist_ok=True)
    document = json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True)
    (out / REPORT_FILE).write_text(document + "\n", encoding="utf-8")
    lines = [
        f"qrecords {report.tool_version}",
        f"experiment: {report.experiment.value}",
        f"seed: {report.seed}",
        f"scenario sha256: {report.scenario_hash}",
        "",
        *outcome.summary,
    ]
    if report.diagnostics:
        lines += ["", "diagnostics:", *(f"  {d}" for d in report.diagnostics)]
    (out / SUMMARY_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    events = outcome.log.to_lines()
    (out / EVENTS_FILE).write_text(
        "".join(f"{line}\n" for line in events),
        encoding="utf-8",
    )


@click.group()
@click.version_option(VERSION, prog_name="qrecords")
def cli() -> None:
    """Measurement records, forbidden states and lattice branching."""


@cli.command()
@click.argument(
    "scenario",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("qrecords-out"),
    show_default=True,
    help="Directory for report.json, summary.txt and events.jsonl.",
)
@click.option("--samples", type=click.IntRange(min=1), default=None, help="Override the sample count.")
@click.option("--verbose", is_flag=True, help="Log every step at debug level.")
def run(
    scenario: Path,
    seed: int | None,
    out: Path,
    samples: int | None,
    verbose: bool,
) -> None:
    """Run the experiment described by a SCENARIO file."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    raw = scenario.read_bytes()
    loaded = load_scenario(raw)
    seed = loaded.parameters.seed if seed is None else seed
    samples = loaded.parameters.samples if samples is None else samples
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            outcome = run_experiment(loaded, seed, samples)
        except NumericalViolationError as exc:
            click.echo(f"numerical violation: {exc}", err=True)
            raise SystemExit(int(ExitStatus.NUMERICAL_VIOLATION)) from exc
        except (QRecordsError, ValueError) as exc:
            click.echo(f"invalid scenario: {exc}", err=True)
            raise SystemExit(int(ExitStatus.VALIDATION_ERROR)) from exc
    report = Report(
        scenario_hash=hashlib.sha256(raw).hexdigest(),
        seed=seed,
        experiment=loaded.experiment,
        results=outcome.results,
        diagnostics=_diagnostics(caught),
    )
    write_outputs(out, report, outcome)
    _LOGGER.debug("wrote %s, %s and %s to %s", REPORT_FILE, SUMMARY_FILE, EVENTS_FILE, out)
    click.echo(f"{loaded.experiment.value}: report written to {out / REPORT_FILE}")
