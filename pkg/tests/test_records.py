"""Tests for the event log, record audits and forged records."""
from __future__ import annotations

import json

import pytest
from pydantic import ValidationError

from qrecords.const import EventTag, ParticleKind, RecordStatus
from qrecords.lattice import ContactEvent, LatticeWorld, Particle, branch_decompose, simulate
from qrecords.records import (
    EventLog,
    RecordClaim,
    audit,
    audit_state,
    extract_records,
    forge_false_record_state,
    planted_final_state,
    record_history,
)
from qrecords.types import (
    BranchError,
    CoincidenceWarning,
    SetupValidationError,
    UnreachableLabelError,
)

from .const import ROUND_TRIP
from .helper import branching_world, pair_world


def _forge_world(ordinary_at: int = 5) -> LatticeWorld:
    return LatticeWorld(
        extent=16,
        particles=(
            Particle(id=0, m=3, position=(ordinary_at, 0, 0), velocity=(1, 0, 0)),
            Particle(id=1, kind=ParticleKind.MEASURING, m=3),
        ),
    )


def _event(time: int, device: int = 1) -> ContactEvent:
    return ContactEvent(
        time=time,
        device=device,
        observed=0,
        tag=EventTag.IDEAL,
        position=(0, 0, 0),
        velocities=((1, 0, 0), (0, 0, 0)),
        pointer_before=0,
    )


def test_extract_records() -> None:
    """Test reading claims from non-ready pointers."""
    world = pair_world(1, 0, 3)
    assert extract_records(world, world.initial_state()) == []
    after = simulate(world, None, 1).state
    assert extract_records(world, after) == [RecordClaim(device=1, value=1)]


def test_extract_records_needs_single_branch() -> None:
    """Test that a superposition of records is rejected."""
    world = branching_world()
    with pytest.raises(BranchError):
        extract_records(world, simulate(world, None, 2).state)


def test_audit_valid_records() -> None:
    """Test that an ideal contact backs the record in each branch."""
    world = branching_world()
    run = simulate(world, None, 2)
    log = EventLog(entries=run.events)
    assert record_history(log, 1) == [(1, EventTag.IDEAL, 0)]
    ready, written = audit_state(world, log, run.state)
    assert ready.verdicts == ()
    assert ready.all_valid
    (verdict,) = written.verdicts
    assert verdict.claim == RecordClaim(device=1, value=1)
    assert verdict.status is RecordStatus.VALID
    assert verdict.provenance == 1
    assert written.all_valid


def test_audit_wrong_value() -> None:
    """Test that a value no contact wrote is invalid."""
    world = branching_world()
    run = simulate(world, None, 2)
    log = EventLog(entries=run.events)
    branch = branch_decompose(world, run.state)[1].label
    verdict = audit(log, [RecordClaim(device=1, value=0)], branch)
    assert verdict.verdicts[0].status is RecordStatus.INVALID
    assert verdict.any_invalid
    assert audit(log, [], branch).all_valid


def test_audit_unverifiable_record() -> None:
    """Test that a record written by a busy pointer is unverifiable."""
    world = pair_world(1, 1, 3)
    run = simulate(world, None, 1)
    (verdict,) = audit_state(world, EventLog(entries=run.events), run.state)
    assert verdict.verdicts[0].claim.value == 2
    assert verdict.verdicts[0].status is RecordStatus.UNVERIFIABLE
    assert verdict.verdicts[0].provenance == 0


def test_audit_second_contact_in_one_step() -> None:
    """Test that a pointer written twice in one step is unverifiable."""
    world = LatticeWorld(
        extent=1,
        particles=(
            Particle(id=0, m=5, internal=1),
            Particle(id=1, kind=ParticleKind.MEASURING, m=5),
            Particle(id=2, m=5, internal=2),
        ),
    )
    with pytest.warns(CoincidenceWarning):
        run = simulate(world, None, 1)
    (branch,) = audit_state(world, EventLog(entries=run.events), run.state)
    (verdict,) = branch.verdicts
    assert verdict.claim == RecordClaim(device=1, value=4)
    assert verdict.status is RecordStatus.UNVERIFIABLE
    assert not branch.all_valid


def test_forged_record_is_invalid() -> None:
    """Test that a forged state shows the claim while the log stays empty."""
    world = _forge_world()
    claims = [RecordClaim(device=1, value=2)]
    forged = forge_false_record_state(world, claims, 3)
    run = simulate(world, forged, 3)
    assert run.events == []
    assert run.state.max_difference(planted_final_state(world, claims, 3)) < ROUND_TRIP
    assert extract_records(world, run.state) == claims
    (verdict,) = audit_state(world, EventLog(entries=run.events), run.state)
    assert verdict.verdicts[0].status is RecordStatus.INVALID
    assert verdict.verdicts[0].provenance is None


def test_forge_at_horizon_zero() -> None:
    """Test that a zero horizon plants the claim directly."""
    world = _forge_world()
    claims = [RecordClaim(device=1, value=1)]
    forged = forge_false_record_state(world, claims, 0)
    assert forged.terms == planted_final_state(world, claims, 0).terms
    assert extract_records(world, forged) == claims


@pytest.mark.parametrize(
    ("claim", "ordinary_at"),
    [
        (RecordClaim(device=0, value=1), 5),
        (RecordClaim(device=1, value=0), 5),
        (RecordClaim(device=1, value=3), 5),
        (RecordClaim(device=1, value=1), 14),
    ],
    ids=["Not a device", "Ready value", "Too large", "Contact before horizon"],
)
def test_forge_unreachable(claim: RecordClaim, ordinary_at: int) -> None:
    """Test claims that cannot be planted."""
    with pytest.raises(UnreachableLabelError):
        forge_false_record_state(_forge_world(ordinary_at), [claim], 3)


def test_forge_negative_horizon() -> None:
    """Test rejection of a negative horizon."""
    with pytest.raises(ValueError):
        forge_false_record_state(_forge_world(), [], -1)


def test_log_order() -> None:
    """Test that the log only grows forward in time."""
    log = EventLog()
    log.append([_event(1), _event(2)])
    with pytest.raises(ValueError):
        log.append([_event(0)])
    assert log.last_time(1) == 2
    assert log.last_time(5) is None
    with pytest.raises(ValidationError):
        EventLog(entries=[_event(2), _event(1)])


def test_log_devices() -> None:
    """Test that log entries have to name measuring particles."""
    world = pair_world(0, 0, 2)
    EventLog(entries=[_event(0)]).validate_devices(world)
    with pytest.raises(SetupValidationError):
        EventLog(entries=[_event(0, device=0)]).validate_devices(world)


def test_log_lines() -> None:
    """Test the JSON lines of a run log."""
    world = branching_world()
    log = EventLog(entries=simulate(world, None, 2).events)
    lines = [json.loads(line) for line in log.to_lines()]
    assert lines == [
        {
            "time": 1,
            "device": 1,
            "observed": 0,
            "tag": "ideal",
            "branch": f"1@1,0,0={value}",
            "value": value,
        }
        for value in (0, 1)
    ]


def test_simulation_is_deterministic() -> None:
    """Test that two runs give the same state and events."""
    world = branching_world()
    first, second = simulate(world, None, 6), simulate(world, None, 6)
    assert first.state.terms == second.state.terms
    assert first.events == second.events
