"""Particles on a periodic cubic lattice with contact interactions."""
from __future__ import annotations

import itertools
import math
import warnings
from collections import defaultdict
from logging import getLogger
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from qrecords.const import DEFAULT_EXTENT, PRUNE_EPSILON, READY, EventTag, ParticleKind
from qrecords.helper import (
    ComplexPair,
    check_norm,
    is_unitary,
    make_rng,
    pairs_to_matrix,
    sample_counts,
)
from qrecords.qstate import (
    BasisLabel,
    DeviceReading,
    MacroLabel,
    Register,
    RegisterLayout,
    StateVector,
    UnitarySpec,
    apply_adjoint,
    apply_unitary,
)
from qrecords.types import (
    BranchError,
    CoincidenceWarning,
    DomainError,
    SetupValidationError,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Mapping, Sequence

__all__ = [
    "Vector3",
    "Particle",
    "ParticleState",
    "LatticeWorld",
    "BranchOutcome",
    "ContactEvent",
    "Branch",
    "SimulationResult",
    "contact_roles",
    "step_unitary",
    "step",
    "measure_contact",
    "macro_label",
    "branch_decompose",
    "born_sample",
    "born_counts",
    "reverse_run",
    "thermal_step",
    "simulate",
    "bath_overlap",
    "pointer_population",
]

_LOGGER = getLogger(__name__)

Vector3 = tuple[int, int, int]
MatrixRows = tuple[tuple[ComplexPair, ...], ...]

_AXES = ("x", "y", "z")
_FIELDS = (*_AXES, *(f"v{axis}" for axis in _AXES), "a")


class Particle(BaseModel):
    """A lattice particle and its starting configuration.

    Matrices are given as rows of [re, im] pairs. A basis matrix holds the
    basis vector |a> in column a.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    id: int = Field(..., ge=0)
    kind: ParticleKind = Field(ParticleKind.ORDINARY)
    m: int = Field(..., ge=2)
    raw_internal_unitary: MatrixRows | None = Field(None, alias="internal_unitary")
    raw_basis: MatrixRows | None = Field(None, alias="basis")
    raw_partner_basis: dict[int, MatrixRows] = Field({}, alias="partner_basis")
    position: Vector3 = Field((0, 0, 0))
    velocity: Vector3 = Field((0, 0, 0))
    internal: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_invariants(self) -> Particle:
        if any(c not in (-1, 0, 1) for c in self.velocity):
            msg = f"particle {self.id} has velocity {self.velocity} outside {{-1, 0, 1}}^3"
            raise SetupValidationError(msg)
        if self.internal >= self.m:
            msg = f"particle {self.id} has internal value {self.internal} >= m={self.m}"
            raise SetupValidationError(msg)
        matrices = {"internal_unitary": self.internal_unitary, "basis": self.basis}
        matrices.update(
            {f"partner_basis[{k}]": self.basis_for(k) for k in self.raw_partner_basis},
        )
        for name, matrix in matrices.items():
            if matrix.shape != (self.m, self.m) or not is_unitary(matrix):
                msg = f"{name} of particle {self.id} is not a unitary {self.m}x{self.m} matrix"
                raise SetupValidationError(msg)
        if self.kind is ParticleKind.MEASURING:
            if not np.array_equal(self.internal_unitary, np.eye(self.m)):
                msg = f"measuring particle {self.id} needs the identity internal unitary"
                raise SetupValidationError(msg)
            if self.raw_basis is not None or self.raw_partner_basis:
                msg = f"measuring particle {self.id} keeps the computational pointer basis"
                raise SetupValidationError(msg)
        return self

    @property
    def internal_unitary(self) -> np.ndarray:
        """Return the free internal evolution, identity by default."""
        if self.raw_internal_unitary is None:
            return np.eye(self.m, dtype=complex)
        return pairs_to_matrix(self.raw_internal_unitary)

    @property
    def basis(self) -> np.ndarray:
        """Return the default interaction basis."""
        if self.raw_basis is None:
            return np.eye(self.m, dtype=complex)
        return pairs_to_matrix(self.raw_basis)

    def basis_for(self, partner: int) -> np.ndarray:
        """Return the interaction basis used against a given partner."""
        if partner in self.raw_partner_basis:
            return pairs_to_matrix(self.raw_partner_basis[partner])
        return self.basis


class ParticleState(NamedTuple):
    """Decoded basis values of one particle."""

    position: Vector3
    velocity: Vector3
    internal: int


class LatticeWorld(BaseModel):
    """Particles on the periodic lattice (Z_extent)^3 at a time step."""

    model_config = ConfigDict(frozen=True)

    extent: int = Field(DEFAULT_EXTENT, ge=1)
    particles: tuple[Particle, ...] = Field(())
    time: int = Field(0)

    @model_validator(mode="after")
    def _check_invariants(self) -> LatticeWorld:
        ids = [p.id for p in self.particles]
        if len(set(ids)) != len(ids):
            msg = f"particle ids are not unique: {ids}"
            raise SetupValidationError(msg)
        for particle in self.particles:
            if any(not 0 <= c < self.extent for c in particle.position):
                msg = f"particle {particle.id} starts outside the lattice of extent {self.extent}"
                raise SetupValidationError(msg)
        pointer_dims = {p.m for p in self.particles if p.kind is ParticleKind.MEASURING}
        for bath in self.particles:
            if bath.kind is ParticleKind.BATH and pointer_dims - {bath.m}:
                msg = f"bath particle {bath.id} needs the pointer dimension of every device"
                raise SetupValidationError(msg)
        return self

    @staticmethod
    def register(pid: int, field: str) -> str:
        """Return the register name of one particle field."""
        return f"p{pid}.{field}"

    @property
    def layout(self) -> RegisterLayout:
        """Return position, velocity and internal registers per particle.

        Velocity components are stored shifted by one.
        """
        registers = []
        for p in self.particles:
            dims = (self.extent,) * 3 + (3,) * 3 + (p.m,)
            registers.extend(
                Register(self.register(p.id, f), d) for f, d in zip(_FIELDS, dims)
            )
        return RegisterLayout(tuple(registers))

    def particle(self, pid: int) -> Particle:
        """Return a particle by id."""
        for p in self.particles:
            if p.id == pid:
                return p
        msg = f"no particle with id {pid}"
        raise DomainError(msg)

    @property
    def measuring_ids(self) -> list[int]:
        """Return the ids of the measuring devices, ascending."""
        return sorted(p.id for p in self.particles if p.kind is ParticleKind.MEASURING)

    @property
    def bath_ids(self) -> list[int]:
        """Return the ids of the bath particles, ascending."""
        return sorted(p.id for p in self.particles if p.kind is ParticleKind.BATH)

    def label(self, states: Mapping[int, ParticleState]) -> BasisLabel:
        """Encode particle states into a basis label."""
        values: list[int] = []
        for p in self.particles:
            position, velocity, internal = states[p.id]
            values.extend(c % self.extent for c in position)
            values.extend(c + 1 for c in velocity)
            values.append(internal)
        return tuple(values)

    def decode(self, label: BasisLabel) -> dict[int, ParticleState]:
        """Decode a basis label into particle states."""
        if len(label) != len(_FIELDS) * len(self.particles):
            msg = f"label of length {len(label)} does not fit {len(self.particles)} particles"
            raise DomainError(msg)
        states = {}
        for index, p in enumerate(self.particles):
            chunk = label[len(_FIELDS) * index : len(_FIELDS) * (index + 1)]
            states[p.id] = ParticleState(
                position=tuple(chunk[:3]),  # type: ignore[arg-type]
                velocity=tuple(c - 1 for c in chunk[3:6]),  # type: ignore[arg-type]
                internal=chunk[6],
            )
        return states

    def initial_label(self) -> BasisLabel:
        """Return the label of the configured starting values."""
        return self.label(
            {p.id: ParticleState(p.position, p.velocity, p.internal) for p in self.particles},
        )

    def initial_state(self) -> StateVector:
        """Return the configured starting basis state."""
        return StateVector.basis(self.layout, self.initial_label())

    def advance(self, steps: int = 1) -> LatticeWorld:
        """Return the world with its time counter moved forward."""
        return self.model_copy(update={"time": self.time + steps})


def _moved(position: Vector3, velocity: Vector3, extent: int, sign: int) -> Vector3:
    return tuple((x + sign * v) % extent for x, v in zip(position, velocity))  # type: ignore[return-value]


def _contact_operator(control: Particle, target: Particle) -> np.ndarray:
    """Return the controlled addition target += control in the partner bases.

    Indexed row-major over (control, target).
    """
    m_c, m_t = control.m, target.m
    adder = np.zeros((m_c * m_t, m_c * m_t), dtype=complex)
    for a, b in itertools.product(range(m_c), range(m_t)):
        adder[a * m_t + (b + a) % m_t, a * m_t + b] = 1.0
    change = np.kron(control.basis_for(target.id), target.basis_for(control.id))
    if np.array_equal(change, np.eye(m_c * m_t)):
        return adder
    return change @ adder @ change.conj().T


def _partial_swap(m: int, coupling: float) -> np.ndarray:
    """Return cos(t) I - i sin(t) SWAP with t = coupling * pi / 2."""
    theta = coupling * math.pi / 2
    swap = np.zeros((m * m, m * m), dtype=complex)
    for p, b in itertools.product(range(m), repeat=2):
        swap[b * m + p, p * m + b] = 1.0
    return math.cos(theta) * np.eye(m * m) - 1j * math.sin(theta) * swap


def contact_roles(first: Particle, second: Particle) -> tuple[Particle, Particle]:
    """Return (control, target) of a contact interaction.

    The measuring particle is the target when exactly one of the two measures,
    otherwise the particle with the higher id.
    """
    low, high = sorted((first, second), key=lambda p: p.id)
    if low.kind is ParticleKind.MEASURING and high.kind is not ParticleKind.MEASURING:
        return high, low
    return low, high


Operation = tuple[tuple[int, ...], np.ndarray]


class _Stepper:
    """Builds the internal-register operations of one lattice step."""

    def __init__(self, world: LatticeWorld, coupling: float) -> None:
        self.world = world
        self.coupling = coupling
        self.slot = {p.id: i for i, p in enumerate(world.particles)}
        self.dims = tuple(p.m for p in world.particles)
        self._pair_ops: dict[tuple[int, int], Operation | None] = {}
        self._free_ops = [
            ((i,), p.internal_unitary)
            for i, p in enumerate(world.particles)
            if not np.array_equal(p.internal_unitary, np.eye(p.m))
        ]

    def pair_operation(self, first: Particle, second: Particle) -> Operation | None:
        """Return the operation of two coincident particles, None for no action."""
        key = (first.id, second.id)
        if key not in self._pair_ops:
            self._pair_ops[key] = self._build_pair(first, second)
        return self._pair_ops[key]

    def _build_pair(self, first: Particle, second: Particle) -> Operation | None:
        kinds = {first.kind, second.kind}
        if ParticleKind.BATH in kinds:
            if kinds != {ParticleKind.BATH, ParticleKind.MEASURING} or self.coupling == 0:
                return None
            slots = (self.slot[first.id], self.slot[second.id])
            return slots, _partial_swap(first.m, self.coupling)
        control, target = contact_roles(first, second)
        slots = (self.slot[control.id], self.slot[target.id])
        return slots, _contact_operator(control, target)

    def pairs(
        self,
        states: Mapping[int, ParticleState],
        *,
        warn: bool = True,
    ) -> list[tuple[Particle, Particle]]:
        """Return the coincident pairs in the order their interactions apply."""
        sites: dict[Vector3, list[Particle]] = defaultdict(list)
        for p in self.world.particles:
            sites[states[p.id].position].append(p)
        pairs = []
        for position, group in sites.items():
            if warn and len(group) >= 3:
                warnings.warn(
                    f"{len(group)} particles meet at {position}, "
                    "applying pair interactions in ascending id order",
                    CoincidenceWarning,
                    stacklevel=5,
                )
            pairs.extend(itertools.combinations(sorted(group, key=lambda p: p.id), 2))
        return sorted(pairs, key=lambda pair: (pair[0].id, pair[1].id))

    def operations(self, states: Mapping[int, ParticleState]) -> list[Operation]:
        """Return the ordered operations for particles at the given positions."""
        operations = []
        for first, second in self.pairs(states):
            operation = self.pair_operation(first, second)
            if operation is not None:
                operations.append(operation)
        return operations + self._free_ops

    def evolve(
        self,
        terms: Mapping[tuple[int, ...], complex],
        operations: Sequence[Operation],
        adjoint: bool,
    ) -> dict[tuple[int, ...], complex]:
        """Apply the operations to a superposition of internal value tuples."""
        if adjoint:
            operations = [(slots, m.conj().T) for slots, m in reversed(operations)]
        for slots, matrix in operations:
            sub_dims = tuple(self.dims[s] for s in slots)
            out: dict[tuple[int, ...], complex] = defaultdict(complex)
            for current, amplitude in terms.items():
                column = matrix[:, np.ravel_multi_index([current[s] for s in slots], sub_dims)]
                for row in np.flatnonzero(column):
                    updated = list(current)
                    for s, v in zip(slots, np.unravel_index(row, sub_dims)):
                        updated[s] = int(v)
                    out[tuple(updated)] += amplitude * column[row]
            terms = out
        return dict(terms)

    def action(
        self,
        sign: int,
    ) -> Callable[[BasisLabel], Iterable[tuple[BasisLabel, complex]]]:
        """Return the forward (sign 1) or inverse (sign -1) step as an action."""
        world = self.world

        def act(label: BasisLabel) -> Iterable[tuple[BasisLabel, complex]]:
            states = world.decode(label)
            if sign < 0:
                states = {
                    pid: s._replace(position=_moved(s.position, s.velocity, world.extent, -1))
                    for pid, s in states.items()
                }
            operations = self.operations(states)
            internals = tuple(states[p.id].internal for p in world.particles)
            evolved = self.evolve({internals: 1.0}, operations, adjoint=sign < 0)
            if sign > 0:
                states = {
                    pid: s._replace(position=_moved(s.position, s.velocity, world.extent, 1))
                    for pid, s in states.items()
                }
            out = []
            for values, amplitude in evolved.items():
                updated = {
                    p.id: states[p.id]._replace(internal=v)
                    for p, v in zip(world.particles, values)
                }
                out.append((world.label(updated), amplitude))
            return out

        return act


def step_unitary(world: LatticeWorld, coupling: float = 0.0) -> UnitarySpec:
    """Return the one-step unitary: contact interactions, internal evolution, motion.

    Coincidence is judged at the positions before the move. Bath particles act
    only on measuring particles, through a partial swap of strength `coupling`.
    """
    if not 0.0 <= coupling <= 1.0:
        msg = f"coupling has to lie in [0, 1], got {coupling}"
        raise ValueError(msg)
    stepper = _Stepper(world, coupling)
    return UnitarySpec(
        world.layout,
        stepper.action(1),
        stepper.action(-1),
        name=f"step[c={coupling}]",
    )


def step(world: LatticeWorld, s: StateVector) -> StateVector:
    """Advance a state by one time step without bath coupling."""
    return apply_unitary(step_unitary(world), s)


def thermal_step(world: LatticeWorld, s: StateVector, coupling: float) -> StateVector:
    """Advance a state by one step with bath particles coupled to the pointers."""
    if not 0.0 <= coupling <= 1.0:
        msg = f"coupling has to lie in [0, 1], got {coupling}"
        raise ValueError(msg)
    if not world.bath_ids:
        msg = "a thermal step needs bath particles"
        raise SetupValidationError(msg)
    return apply_unitary(step_unitary(world, coupling), s)


def macro_label(world: LatticeWorld, label: BasisLabel) -> MacroLabel:
    """Return positions and pointer values of every measuring device."""
    states = world.decode(label)
    return MacroLabel(
        readings=tuple(
            DeviceReading(
                device=pid,
                position=states[pid].position,
                pointer=states[pid].internal,
            )
            for pid in world.measuring_ids
        ),
    )


class BranchOutcome(BaseModel):
    """Pointer value written in one post-contact branch."""

    model_config = ConfigDict(frozen=True)

    branch: MacroLabel = Field(...)
    value: int = Field(...)


class ContactEvent(BaseModel):
    """A measuring device met another particle during a step."""

    model_config = ConfigDict(frozen=True)

    time: int = Field(...)
    device: int = Field(...)
    observed: int = Field(...)
    tag: EventTag = Field(...)
    position: Vector3 = Field(...)
    velocities: tuple[Vector3, Vector3] = Field(...)
    pointer_before: int = Field(...)
    outcomes: tuple[BranchOutcome, ...] = Field(())


def measure_contact(
    world: LatticeWorld,
    s: StateVector,
    coupling: float = 0.0,
) -> tuple[StateVector, list[ContactEvent]]:
    """Step the state and report every contact a measuring device made.

    Pair interactions at a site apply in ascending id order, so a device that
    meets several particles in one step sees the pointer left by its earlier
    contacts. A contact with a ready pointer is tagged ideal, otherwise
    disturbing. The outcomes list the branches after the step with the value
    the device holds.
    """
    unitary = step_unitary(world, coupling)
    after = apply_unitary(unitary, s)
    stepper = _Stepper(world, coupling)
    found: dict[tuple[Any, ...], set[tuple[MacroLabel, int]]] = defaultdict(set)
    for label in s.terms:
        states = world.decode(label)
        terms: dict[tuple[int, ...], complex] = {
            tuple(states[p.id].internal for p in world.particles): 1.0,
        }
        images = None
        for first, second in stepper.pairs(states, warn=False):
            operation = stepper.pair_operation(first, second)
            kinds = {first.kind, second.kind}
            if ParticleKind.BATH not in kinds and ParticleKind.MEASURING in kinds:
                observed, device = contact_roles(first, second)
                slot = stepper.slot[device.id]
                seen = sorted({v[slot] for v, a in terms.items() if abs(a) > PRUNE_EPSILON})
                if images is None:
                    column = StateVector(world.layout, unitary.action(label))
                    images = [image for image in column.terms if after.amplitude(image) != 0]
                for before in seen:
                    key = (
                        device.id,
                        observed.id,
                        before,
                        states[device.id].position,
                        (states[device.id].velocity, states[observed.id].velocity),
                    )
                    found[key].update(
                        (macro_label(world, image), world.decode(image)[device.id].internal)
                        for image in images
                    )
            if operation is not None:
                terms = stepper.evolve(terms, [operation], adjoint=False)
    events = [
        ContactEvent(
            time=world.time,
            device=device,
            observed=observed,
            tag=EventTag.IDEAL if before == READY else EventTag.DISTURBING,
            position=position,
            velocities=velocities,
            pointer_before=before,
            outcomes=tuple(
                BranchOutcome(branch=branch, value=value)
                for branch, value in sorted(
                    outcomes,
                    key=lambda pair: (pair[0].sort_key(), pair[1]),
                )
            ),
        )
        for (device, observed, before, position, velocities), outcomes in sorted(
            found.items(),
            key=lambda item: item[0],
        )
    ]
    for event in events:
        _LOGGER.debug(
            "t=%d device %d measured particle %d (%s)",
            event.time,
            event.device,
            event.observed,
            event.tag.value,
        )
    return after, events


class Branch(NamedTuple):
    """One macro branch of a state."""

    label: MacroLabel
    state: StateVector
    weight: float


def branch_decompose(world: LatticeWorld, s: StateVector) -> list[Branch]:
    """Split a state by macro label into normalized branches with Born weights."""
    grouped: dict[MacroLabel, list[tuple[BasisLabel, complex]]] = defaultdict(list)
    for label, amplitude in s.items():
        grouped[macro_label(world, label)].append((label, amplitude))
    total = s.norm() ** 2
    branches = []
    for macro in sorted(grouped, key=MacroLabel.sort_key):
        part = StateVector(s.layout, grouped[macro], s.prune_epsilon)
        branches.append(Branch(macro, part.normalized(), part.norm() ** 2 / total))
    return branches


def born_sample(branches: Sequence[Branch], rng_seed: int) -> MacroLabel:
    """Pick a branch with its Born weight, reproducible for a seed."""
    if not branches:
        msg = "cannot sample from an empty branch list"
        raise BranchError(msg)
    weights = np.array([b.weight for b in branches], dtype=float)
    index = make_rng(rng_seed).choice(len(branches), p=weights / weights.sum())
    return branches[int(index)].label


def born_counts(
    branches: Sequence[Branch],
    samples: int,
    seed: int,
) -> dict[MacroLabel, int]:
    """Draw `samples` seeded Born samples and count them per branch."""
    if not branches:
        msg = "cannot sample from an empty branch list"
        raise BranchError(msg)
    counts = sample_counts([b.weight for b in branches], samples, seed)
    return {b.label: c for b, c in zip(branches, counts)}


def reverse_run(
    world: LatticeWorld,
    s: StateVector,
    steps: int,
    coupling: float = 0.0,
) -> StateVector:
    """Undo `steps` lattice steps by applying the adjoint step."""
    if steps < 0:
        msg = f"steps has to be >= 0, got {steps}"
        raise ValueError(msg)
    unitary = step_unitary(world, coupling)
    for _ in range(steps):
        s = apply_adjoint(unitary, s)
    return s


class SimulationResult(NamedTuple):
    """Final state, time-advanced world and every contact event of a run."""

    state: StateVector
    world: LatticeWorld
    events: list[ContactEvent]


def simulate(
    world: LatticeWorld,
    state: StateVector | None,
    steps: int,
    coupling: float = 0.0,
) -> SimulationResult:
    """Run `steps` lattice steps from `state`, the configured start when None."""
    if steps < 0:
        msg = f"steps has to be >= 0, got {steps}"
        raise ValueError(msg)
    if state is None:
        state = world.initial_state()
    events: list[ContactEvent] = []
    for _ in range(steps):
        state, new_events = measure_contact(world, state, coupling)
        check_norm(state, f"lattice step at t={world.time}")
        events.extend(new_events)
        world = world.advance()
    _LOGGER.debug("simulated %d steps, %d terms, %d events", steps, len(state), len(events))
    return SimulationResult(state, world, events)


def _bath_blocks(
    world: LatticeWorld,
    s: StateVector,
) -> dict[BasisLabel, dict[BasisLabel, complex]]:
    names = [
        world.register(pid, f) for pid in world.bath_ids for f in _FIELDS
    ]
    blocks: dict[BasisLabel, dict[BasisLabel, complex]] = defaultdict(dict)
    normalized = s.normalized()
    for label, amplitude in normalized.items():
        bath, rest = s.layout.split(label, names)
        blocks[rest][bath] = amplitude
    return blocks


def bath_overlap(world: LatticeWorld, a: StateVector, b: StateVector) -> float:
    """Return Tr(rho_a rho_b) of the bath marginals of two normalized states."""
    if not world.bath_ids:
        msg = "bath_overlap needs bath particles"
        raise SetupValidationError(msg)
    first, second = _bath_blocks(world, a), _bath_blocks(world, b)
    total = 0.0
    for u in first.values():
        for w in second.values():
            overlap = sum(amp.conjugate() * w[k] for k, amp in u.items() if k in w)
            total += abs(overlap) ** 2
    return total


def pointer_population(
    world: LatticeWorld,
    state: StateVector,
    device: int,
    value: int,
) -> float:
    """Return the probability that a device shows `value`."""
    if world.particle(device).kind is not ParticleKind.MEASURING:
        msg = f"particle {device} is not a measuring device"
        raise DomainError(msg)
    position = state.layout.index(world.register(device, "a"))
    kept = state.restrict(lambda label: label[position] == value)
    return kept.norm() ** 2 / state.norm() ** 2
