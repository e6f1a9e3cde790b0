"""Event ledger, record audits and forged record states."""
from __future__ import annotations

import itertools
from logging import getLogger
from typing import TYPE_CHECKING

from pydantic import BaseModel, ConfigDict, Field, model_validator

from qrecords.const import READY, EventTag, ParticleKind, RecordStatus
from qrecords.lattice import (
    ContactEvent,
    LatticeWorld,
    Particle,
    ParticleState,
    branch_decompose,
    macro_label,
    reverse_run,
    step,
)
from qrecords.qstate import MacroLabel, StateVector
from qrecords.types import BranchError, SetupValidationError, UnreachableLabelError

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

__all__ = [
    "RecordClaim",
    "ClaimVerdict",
    "AuditVerdict",
    "RunLogRecord",
    "EventLog",
    "AdditionEntry",
    "InformationAudit",
    "record_history",
    "extract_records",
    "audit",
    "audit_state",
    "planted_final_state",
    "forge_false_record_state",
    "information_audit",
]

_LOGGER = getLogger(__name__)


class RecordClaim(BaseModel):
    """A device showing a non-ready pointer value."""

    model_config = ConfigDict(frozen=True)

    device: int = Field(...)
    value: int = Field(...)


class ClaimVerdict(BaseModel):
    """Audit status of one claim and the time of the event backing it."""

    model_config = ConfigDict(frozen=True)

    claim: RecordClaim = Field(...)
    status: RecordStatus = Field(...)
    provenance: int | None = Field(None)


class AuditVerdict(BaseModel):
    """Verdicts of every claim made in one branch."""

    model_config = ConfigDict(frozen=True)

    branch: MacroLabel = Field(...)
    verdicts: tuple[ClaimVerdict, ...] = Field(())

    @property
    def all_valid(self) -> bool:
        """Return if every claim is backed by an ideal event."""
        return all(v.status is RecordStatus.VALID for v in self.verdicts)

    @property
    def any_invalid(self) -> bool:
        """Return if some claim has no provenance at all."""
        return any(v.status is RecordStatus.INVALID for v in self.verdicts)


class RunLogRecord(BaseModel):
    """One line of the run log."""

    time: int = Field(...)
    device: int = Field(...)
    observed: int = Field(...)
    tag: EventTag = Field(...)
    branch: str = Field(...)
    value: int = Field(...)


class EventLog(BaseModel):
    """Append-only ground truth of every measurement contact."""

    entries: list[ContactEvent] = Field([])

    @model_validator(mode="after")
    def _check_order(self) -> EventLog:
        times = [e.time for e in self.entries]
        if times != sorted(times):
            msg = "event times have to be non-decreasing"
            raise ValueError(msg)
        return self

    def append(self, events: Iterable[ContactEvent]) -> None:
        """Add events, keeping times non-decreasing."""
        for event in events:
            if self.entries and event.time < self.entries[-1].time:
                msg = f"event at t={event.time} after an event at t={self.entries[-1].time}"
                raise ValueError(msg)
            self.entries.append(event)

    def validate_devices(self, world: LatticeWorld) -> None:
        """Raise SetupValidationError if an entry names a non-measuring device."""
        measuring = set(world.measuring_ids)
        for event in self.entries:
            if event.device not in measuring:
                msg = f"log entry at t={event.time} names device {event.device}, not a measuring particle"
                raise SetupValidationError(msg)

    def for_device(self, device: int) -> list[ContactEvent]:
        """Return the entries of one device."""
        return [e for e in self.entries if e.device == device]

    def last_time(self, device: int) -> int | None:
        """Return the time of the latest entry of a device."""
        times = [e.time for e in self.entries if e.device == device]
        return max(times, default=None)

    def records(self) -> list[RunLogRecord]:
        """Flatten the entries into run log records, one per branch outcome."""
        return [
            RunLogRecord(
                time=event.time,
                device=event.device,
                observed=event.observed,
                tag=event.tag,
                branch=str(outcome.branch),
                value=outcome.value,
            )
            for event in self.entries
            for outcome in event.outcomes
        ]

    def to_lines(self) -> list[str]:
        """Return the run log as JSON lines."""
        return [record.model_dump_json() for record in self.records()]


def record_history(log: EventLog, device: int) -> list[tuple[int, EventTag, int]]:
    """Return (time, tag, observed) of every contact of a device."""
    return [(e.time, e.tag, e.observed) for e in log.for_device(device)]


def extract_records(world: LatticeWorld, branch: StateVector) -> list[RecordClaim]:
    """Read one claim per non-ready pointer of a single-branch state."""
    labels = {macro_label(world, label) for label in branch.terms}
    if len(labels) != 1:
        msg = f"expected a single macro branch, found {len(labels)}"
        raise BranchError(msg)
    (macro,) = labels
    return [
        RecordClaim(device=r.device, value=r.pointer)
        for r in macro.readings
        if r.pointer != READY
    ]


def _compatible(
    log: EventLog,
    event: ContactEvent,
    recorded: MacroLabel,
    branch: MacroLabel,
) -> bool:
    """Return if the branch still shows what the event branch showed.

    Devices that measured again after the event are not compared.
    """
    current = {r.device: r.pointer for r in branch.readings}
    for reading in recorded.readings:
        later = log.last_time(reading.device)
        if later is not None and later > event.time:
            continue
        if current.get(reading.device) != reading.pointer:
            return False
    return True


def _judge(log: EventLog, claim: RecordClaim, branch: MacroLabel) -> ClaimVerdict:
    last = log.last_time(claim.device)
    if last is None:
        return ClaimVerdict(claim=claim, status=RecordStatus.INVALID)
    matches = [
        event
        for event in log.for_device(claim.device)
        if event.time == last
        and any(
            outcome.value == claim.value
            and _compatible(log, event, outcome.branch, branch)
            for outcome in event.outcomes
        )
    ]
    if not matches:
        return ClaimVerdict(claim=claim, status=RecordStatus.INVALID)
    if any(event.tag is EventTag.DISTURBING for event in matches):
        return ClaimVerdict(claim=claim, status=RecordStatus.UNVERIFIABLE, provenance=last)
    return ClaimVerdict(claim=claim, status=RecordStatus.VALID, provenance=last)


def audit(
    log: EventLog,
    claims: Sequence[RecordClaim],
    branch: MacroLabel,
) -> AuditVerdict:
    """Judge claims against the latest logged contacts of their devices.

    A claim is valid when an ideal contact wrote its value in a branch that
    agrees with `branch`, unverifiable when that contact was disturbing and
    invalid without such a contact.
    """
    verdicts = tuple(_judge(log, claim, branch) for claim in claims)
    for verdict in verdicts:
        _LOGGER.debug(
            "claim device %d = %d in %s: %s",
            verdict.claim.device,
            verdict.claim.value,
            branch,
            verdict.status.value,
        )
    return AuditVerdict(branch=branch, verdicts=verdicts)


def audit_state(world: LatticeWorld, log: EventLog, state: StateVector) -> list[AuditVerdict]:
    """Audit the records of every branch of a state."""
    log.validate_devices(world)
    return [
        audit(log, extract_records(world, branch.state), branch.label)
        for branch in branch_decompose(world, state)
    ]


def planted_final_state(
    world: LatticeWorld,
    target_claims: Sequence[RecordClaim],
    horizon: int,
) -> StateVector:
    """Return the basis state at `horizon` that carries the claimed pointer values.

    It keeps every particle on its free path and at its configured internal
    value, except for the claimed pointers. No claimed device may touch
    another non-bath particle before `horizon`.

    :raises ~qrecords.types.UnreachableLabelError: when the claims cannot be planted
    """
    if horizon < 0:
        msg = f"horizon has to be >= 0, got {horizon}"
        raise ValueError(msg)
    claimed: dict[int, int] = {}
    for claim in target_claims:
        device = world.particle(claim.device)
        if device.kind is not ParticleKind.MEASURING:
            msg = f"particle {claim.device} is not a measuring device"
            raise UnreachableLabelError(msg)
        if not 1 <= claim.value < device.m:
            msg = f"value {claim.value} is not a record of device {claim.device}"
            raise UnreachableLabelError(msg)
        claimed[claim.device] = claim.value

    def position(p: Particle, t: int) -> tuple[int, ...]:
        return tuple((x + v * t) % world.extent for x, v in zip(p.position, p.velocity))

    for t, device_id in itertools.product(range(horizon), sorted(claimed)):
        device = world.particle(device_id)
        for other in world.particles:
            if other.id == device_id or other.kind is ParticleKind.BATH:
                continue
            if position(device, t) == position(other, t):
                msg = f"device {device_id} meets particle {other.id} at t={t}"
                raise UnreachableLabelError(msg)
    final = StateVector.basis(
        world.layout,
        world.label(
            {
                p.id: ParticleState(
                    position(p, horizon),  # type: ignore[arg-type]
                    p.velocity,
                    claimed.get(p.id, p.internal),
                )
                for p in world.particles
            },
        ),
    )
    _LOGGER.debug("planting %d claims at horizon %d", len(claimed), horizon)
    return final


def forge_false_record_state(
    world: LatticeWorld,
    target_claims: Sequence[RecordClaim],
    horizon: int,
) -> StateVector:
    """Return a time-0 state that evolves into the claimed pointer values.

    The state is the planted final state run backwards for `horizon` steps.
    """
    return reverse_run(world, planted_final_state(world, target_claims, horizon), horizon)


class AdditionEntry(BaseModel):
    """Record written by a device holding `pointer` that meets value `observed`."""

    model_config = ConfigDict(frozen=True)

    observed: int = Field(...)
    pointer: int = Field(...)
    record: int = Field(...)


class InformationAudit(BaseModel):
    """Exhaustive table of contact records for one internal dimension."""

    model_config = ConfigDict(frozen=True)

    m: int = Field(..., ge=2)
    entries: tuple[AdditionEntry, ...] = Field(())

    @property
    def arithmetic_exact(self) -> bool:
        """Return if every record equals pointer + observed mod m."""
        return all(e.record == (e.pointer + e.observed) % self.m for e in self.entries)

    @property
    def compatible(self) -> dict[int, list[int]]:
        """Return, per record value, the observed values that could have produced it."""
        table: dict[int, set[int]] = {r: set() for r in range(self.m)}
        for entry in self.entries:
            table[entry.record].add(entry.observed)
        return {r: sorted(values) for r, values in table.items()}

    @property
    def recoverable(self) -> bool:
        """Return if a record alone pins down the observed value."""
        return all(len(values) <= 1 for values in self.compatible.values())


def information_audit(m: int) -> InformationAudit:
    """Run every (observed, pointer) contact on a one-site lattice and tabulate."""
    entries = []
    for observed, pointer in itertools.product(range(m), repeat=2):
        world = LatticeWorld(
            extent=1,
            particles=(
                Particle(id=0, m=m, internal=observed),
                Particle(id=1, kind=ParticleKind.MEASURING, m=m, internal=pointer),
            ),
        )
        (label,) = step(world, world.initial_state()).terms
        record = world.decode(label)[1].internal
        entries.append(AdditionEntry(observed=observed, pointer=pointer, record=record))
    return InformationAudit(m=m, entries=tuple(entries))
