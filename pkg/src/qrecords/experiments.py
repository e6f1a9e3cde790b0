"""Experiment runners behind the command line."""
from __future__ import annotations

import math
from logging import getLogger
from typing import TYPE_CHECKING, Any, NamedTuple

from qrecords.const import READY, Experiment, ScenarioMode
from qrecords.forbidden import (
    SubspaceReport,
    allowed_subspace,
    back_propagate,
    back_propagate_with_projections,
    evolve_report,
    forbidden_final_states,
    forbidden_outcomes,
    si_witness,
    typical_overlap,
)
from qrecords.helper import check_norm, vector_to_pairs
from qrecords.lattice import (
    LatticeWorld,
    bath_overlap,
    born_sample,
    branch_decompose,
    pointer_population,
    reverse_run,
    simulate,
    step_unitary,
)
from qrecords.measureframe import (
    EPR_OUTCOMES,
    MeasurementSetup,
    epr_setup,
    macro_projectors,
    outcome_distribution,
    run_schedule,
    sample_outcomes,
    schedule_unitary,
    spin_correlation,
)
from qrecords.qstate import StateVector, apply_unitary
from qrecords.records import (
    AuditVerdict,
    EventLog,
    RecordClaim,
    audit_state,
    forge_false_record_state,
    planted_final_state,
)
from qrecords.types import ScenarioError

if TYPE_CHECKING:
    from collections.abc import Callable

    from qrecords.models import Scenario

__all__ = ["ExperimentOutcome", "run_experiment"]

_LOGGER = getLogger(__name__)


class ExperimentOutcome(NamedTuple):
    """Results, run log and summary lines of an experiment."""

    results: dict[str, Any]
    log: EventLog
    summary: list[str]


def _setup(scenario: Scenario) -> MeasurementSetup:
    if scenario.setup is None:
        msg = "scenario has no measurement setup"
        raise ScenarioError(msg)
    return scenario.setup


def _world(scenario: Scenario) -> LatticeWorld:
    if scenario.world is None:
        msg = "scenario has no lattice world"
        raise ScenarioError(msg)
    return scenario.world


def _final(setup: MeasurementSetup) -> StateVector:
    if setup.initial_system is None:
        msg = "the setup needs an initial_system for this experiment"
        raise ScenarioError(msg)
    final = run_schedule(setup, setup.initial_system)
    check_norm(final, "the measurement schedule")
    return final


def _terms(state: StateVector) -> list[dict[str, Any]]:
    return [
        {"label": list(label), "amplitude": list(vector_to_pairs([a])[0])}
        for label, a in state.items()
    ]


def _verdicts(verdicts: list[AuditVerdict]) -> list[dict[str, Any]]:
    return [v.model_dump(mode="json") for v in verdicts]


def run_abstract(scenario: Scenario, seed: int, samples: int) -> ExperimentOutcome:
    """Run the schedule and report the outcome distribution."""
    setup = _setup(scenario)
    distribution = outcome_distribution(_final(setup), setup)
    excluded = forbidden_outcomes(setup)
    forbidden_probability = math.fsum(distribution.probability(*o) for o in excluded)
    results = {
        "distribution": distribution.as_records(),
        "forbidden_outcomes": [list(o) for o in excluded],
        "forbidden_probability": forbidden_probability,
    }
    summary = [
        f"outcome {list(o)}: {p:.6f}" for o, p in distribution.probabilities.items()
    ]
    summary.append(f"forbidden outcome probability: {forbidden_probability:.3e}")
    return ExperimentOutcome(results, EventLog(), summary)


def run_born_stats(scenario: Scenario, seed: int, samples: int) -> ExperimentOutcome:
    """Compare seeded Born samples with the exact distribution."""
    setup = _setup(scenario)
    distribution = outcome_distribution(_final(setup), setup)
    counts = sample_outcomes(distribution, samples, seed)
    rows = []
    for outcome, probability in distribution.probabilities.items():
        frequency = counts[outcome] / samples
        sigma = math.sqrt(probability * (1 - probability) / samples)
        rows.append(
            {
                "outcome": list(outcome),
                "probability": probability,
                "count": counts[outcome],
                "frequency": frequency,
                "sigma": sigma,
                "within_3_sigma": abs(frequency - probability) <= 3 * sigma,
            },
        )
    results = {
        "samples": samples,
        "outcomes": rows,
        "all_within_3_sigma": all(r["within_3_sigma"] for r in rows),
    }
    summary = [
        f"outcome {r['outcome']}: frequency {r['frequency']:.5f}, "
        f"probability {r['probability']:.5f} (3 sigma {3 * r['sigma']:.5f})"
        for r in rows
    ]
    return ExperimentOutcome(results, EventLog(), summary)


def _subspace(scenario: Scenario) -> tuple[MeasurementSetup, SubspaceReport]:
    setup = _setup(scenario)
    parameters = scenario.parameters
    finals = forbidden_final_states(setup, parameters.span_system)
    if parameters.projection_after is None:
        initials = back_propagate(setup, finals)
    else:
        initials = back_propagate_with_projections(
            setup,
            finals,
            macro_projectors(setup),
            parameters.projection_after,
        )
    return setup, allowed_subspace(setup, initials)


def run_forbidden_subspace(
    scenario: Scenario,
    seed: int,
    samples: int,
) -> ExperimentOutcome:
    """Report the forbidden span, its time invariance and typical overlap."""
    setup, report = _subspace(scenario)
    later = evolve_report(report, schedule_unitary(setup))
    typical = typical_overlap(report, samples, seed)
    results = {
        **report.summary(),
        "forbidden_dim_after_schedule": later.forbidden_dim,
        "typical_overlap": typical,
    }
    summary = [
        f"total dimension: {report.total_dim}",
        f"forbidden dimension: {report.forbidden_dim}",
        f"allowed dimension: {report.allowed_dim}",
        f"forbidden dimension after the schedule: {later.forbidden_dim}",
        f"mean forbidden overlap of {samples} random states: {typical:.6f}",
    ]
    return ExperimentOutcome(results, EventLog(), summary)


def run_si_witness(scenario: Scenario, seed: int, samples: int) -> ExperimentOutcome:
    """Search a product state with a forbidden component."""
    _, report = _subspace(scenario)
    witness = si_witness(
        report,
        scenario.parameters.subsystem,
        samples=samples,
        seed=seed,
    )
    results: dict[str, Any] = {**report.summary(), "found": witness is not None}
    if witness is None:
        summary = ["no product state with a forbidden component found"]
    else:
        results.update(
            {
                "factor": list(witness.factor_names),
                "forbidden_overlap": witness.forbidden_overlap,
                "subsystem_state": _terms(witness.system_state),
                "rest_state": _terms(witness.env_state),
            },
        )
        summary = [
            f"product state over {list(witness.factor_names)} and the rest "
            f"has forbidden overlap {witness.forbidden_overlap:.6f}",
        ]
    return ExperimentOutcome(results, EventLog(), summary)


def run_epr(scenario: Scenario, seed: int, samples: int) -> ExperimentOutcome:
    """Measure the singlet along two angles."""
    parameters = scenario.parameters
    setup = epr_setup(parameters.a_angle, parameters.b_angle)
    distribution = outcome_distribution(_final(setup), setup)
    counts = sample_outcomes(distribution, samples, seed)
    parallel = distribution.probability(1) + distribution.probability(4)
    correlation = spin_correlation(distribution)
    results = {
        "a_angle": parameters.a_angle,
        "b_angle": parameters.b_angle,
        "outcomes": [
            {
                "spins": list(EPR_OUTCOMES[o[0]]),
                "probability": p,
                "count": counts[o],
            }
            for o, p in distribution.probabilities.items()
        ],
        "parallel_probability": parallel,
        "antiparallel_probability": 1 - parallel,
        "correlation": correlation,
    }
    summary = [
        f"{'/'.join(EPR_OUTCOMES[o[0]])}: {p:.6f}"
        for o, p in distribution.probabilities.items()
    ]
    summary += [
        f"parallel outcomes: {parallel:.3e}",
        f"spin correlation: {correlation:.6f}",
    ]
    return ExperimentOutcome(results, EventLog(), summary)


def run_lattice(scenario: Scenario, seed: int, samples: int) -> ExperimentOutcome:
    """Simulate the lattice, then decompose and audit the branches."""
    world = _world(scenario)
    parameters = scenario.parameters
    run = simulate(world, scenario.lattice_state(), parameters.horizon, parameters.coupling)
    log = EventLog(entries=run.events)
    branches = branch_decompose(run.world, run.state)
    verdicts = audit_state(run.world, log, run.state)
    results = {
        "time": run.world.time,
        "branches": [{"label": str(b.label), "weight": b.weight} for b in branches],
        "audits": _verdicts(verdicts),
        "all_valid": all(v.all_valid for v in verdicts),
        "sampled_branch": str(born_sample(branches, seed)),
    }
    summary = [f"branch {b.label}: weight {b.weight:.6f}" for b in branches]
    summary.append(f"{len(run.events)} contact events, all records valid: {results['all_valid']}")
    return ExperimentOutcome(results, log, summary)


def run_forge_audit(scenario: Scenario, seed: int, samples: int) -> ExperimentOutcome:
    """Plant records by reverse evolution and audit them after the forward run."""
    world = _world(scenario)
    parameters = scenario.parameters
    claims = list(parameters.claims) or [
        RecordClaim(device=pid, value=1) for pid in world.measuring_ids
    ]
    forged = forge_false_record_state(world, claims, parameters.horizon)
    run = simulate(world, forged, parameters.horizon)
    target = planted_final_state(world, claims, parameters.horizon)
    error = run.state.max_difference(target)
    log = EventLog(entries=run.events)
    verdicts = audit_state(run.world, log, run.state)
    results = {
        "claims": [c.model_dump(mode="json") for c in claims],
        "forged_terms": len(forged),
        "round_trip_error": error,
        "audits": _verdicts(verdicts),
        "any_invalid": any(v.any_invalid for v in verdicts),
    }
    summary = [
        f"forged {len(claims)} claims over {parameters.horizon} steps "
        f"({len(forged)} terms at t=0)",
        f"round trip error: {error:.3e}",
        f"some record invalid: {results['any_invalid']}",
    ]
    return ExperimentOutcome(results, log, summary)


def run_reversal_demo(scenario: Scenario, seed: int, samples: int) -> ExperimentOutcome:
    """Branch by forward steps, then undo them exactly."""
    world = _world(scenario)
    parameters = scenario.parameters
    initial = scenario.lattice_state()
    run = simulate(world, initial, parameters.horizon, parameters.coupling)
    restored = reverse_run(world, run.state, parameters.horizon, parameters.coupling)
    results = {
        "branches_before": len(branch_decompose(world, initial)),
        "branches_after_forward": len(branch_decompose(run.world, run.state)),
        "branches_after_reverse": len(branch_decompose(world, restored)),
        "max_amplitude_error": restored.max_difference(initial),
    }
    summary = [f"{key.replace('_', ' ')}: {value}" for key, value in results.items()]
    return ExperimentOutcome(results, EventLog(entries=run.events), summary)


def run_thermal_demo(scenario: Scenario, seed: int, samples: int) -> ExperimentOutcome:
    """Follow pointer reset and bath decoherence contact by contact."""
    world = _world(scenario)
    if not world.bath_ids:
        msg = "the thermal demo needs bath particles"
        raise ScenarioError(msg)
    parameters = scenario.parameters
    initial = scenario.lattice_state()
    unitary = step_unitary(world, parameters.coupling)
    components = [b.state * math.sqrt(b.weight) for b in branch_decompose(world, initial)]
    state = initial
    populations: dict[int, list[float]] = {pid: [] for pid in world.measuring_ids}
    overlaps: list[float] = []
    for _ in range(parameters.horizon):
        state = apply_unitary(unitary, state)
        check_norm(state, "a thermal step")
        components = [apply_unitary(unitary, c) for c in components]
        for pid in world.measuring_ids:
            populations[pid].append(pointer_population(world, state, pid, READY))
        if len(components) >= 2:
            overlaps.append(bath_overlap(world, components[0], components[1]))
    monotonic = all(b <= a + 1e-12 for a, b in zip(overlaps, overlaps[1:]))
    results = {
        "coupling": parameters.coupling,
        "ready_population": {str(pid): p for pid, p in populations.items()},
        "branch_bath_overlap": overlaps,
        "overlap_monotonic": monotonic,
    }
    summary = [
        f"device {pid} ready population after {parameters.horizon} steps: "
        f"{p[-1] if p else pointer_population(world, initial, pid, READY):.6f}"
        for pid, p in populations.items()
    ]
    if overlaps:
        summary.append(f"bath overlap of the first two branches: {overlaps[-1]:.3e}")
    return ExperimentOutcome(results, EventLog(), summary)


RUNNERS: dict[
    tuple[ScenarioMode, Experiment],
    Callable[[Scenario, int, int], ExperimentOutcome],
] = {
    (ScenarioMode.ABSTRACT, Experiment.RUN): run_abstract,
    (ScenarioMode.ABSTRACT, Experiment.BORN_STATS): run_born_stats,
    (ScenarioMode.ABSTRACT, Experiment.FORBIDDEN_SUBSPACE): run_forbidden_subspace,
    (ScenarioMode.ABSTRACT, Experiment.SI_WITNESS): run_si_witness,
    (ScenarioMode.ABSTRACT, Experiment.EPR): run_epr,
    (ScenarioMode.LATTICE, Experiment.RUN): run_lattice,
    (ScenarioMode.LATTICE, Experiment.FORGE_AUDIT): run_forge_audit,
    (ScenarioMode.LATTICE, Experiment.REVERSAL_DEMO): run_reversal_demo,
    (ScenarioMode.LATTICE, Experiment.THERMAL_DEMO): run_thermal_demo,
}


def run_experiment(scenario: Scenario, seed: int, samples: int) -> ExperimentOutcome:
    """Dispatch a validated scenario to its runner."""
    runner = RUNNERS[(scenario.mode, scenario.experiment)]
    _LOGGER.debug("running %s in %s mode", scenario.experiment.value, scenario.mode.value)
    return runner(scenario, seed, samples)
