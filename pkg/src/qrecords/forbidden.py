"""Forbidden initial states, the allowed subspace and independence witnesses."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np

from qrecords.const import (
    ORACLE_BOUND,
    PROJECTION_DEPTH_CAP,
    RANK_TOL,
    READY,
    SYSTEM_REGISTER,
    WITNESS_SAMPLES,
    WITNESS_SEED,
    WITNESS_THRESHOLD,
)
from qrecords.helper import make_rng
from qrecords.measureframe import MeasurementSetup, run_schedule, schedule_unitaries
from qrecords.qstate import (
    BasisLabel,
    Projector,
    RegisterLayout,
    StateVector,
    UnitarySpec,
    apply_adjoint,
    apply_projector,
    apply_unitary,
    inner_product,
    orthonormalize,
    tensor,
)
from qrecords.types import DimensionBoundError, DomainError, PartitionError

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Sequence

__all__ = [
    "SubspaceReport",
    "SIWitness",
    "forbidden_outcomes",
    "forbidden_final_states",
    "back_propagate",
    "back_propagate_with_projections",
    "reach_probability",
    "allowed_subspace",
    "forbidden_overlap",
    "forbidden_outcome_probability",
    "sample_allowed",
    "evolve_report",
    "typical_overlap",
    "si_witness",
]

_LOGGER = getLogger(__name__)


@dataclass(frozen=True)
class SubspaceReport:
    """Forbidden span and the dimension of its orthogonal complement."""

    layout: RegisterLayout
    forbidden_basis: tuple[StateVector, ...]
    total_dim: int
    forbidden_dim: int
    allowed_dim: int

    def __post_init__(self) -> None:
        """Check the dimension bookkeeping."""
        if self.forbidden_dim + self.allowed_dim != self.total_dim:
            msg = "forbidden_dim + allowed_dim has to equal total_dim"
            raise ValueError(msg)
        if len(self.forbidden_basis) != self.forbidden_dim:
            msg = "forbidden_basis length has to equal forbidden_dim"
            raise ValueError(msg)

    @property
    def forbidden_fraction(self) -> float:
        """Return forbidden_dim / total_dim, the mean overlap of uniform states."""
        return self.forbidden_dim / self.total_dim

    def overlap(self, state: StateVector) -> float:
        """Return the squared norm of the projection of `state` onto the span."""
        return math.fsum(
            abs(inner_product(f, state)) ** 2 for f in self.forbidden_basis
        )

    def project_out(self, state: StateVector) -> StateVector:
        """Return the component of `state` orthogonal to the forbidden span."""
        for f in self.forbidden_basis:
            state = state - f * inner_product(f, state)
        return state

    def summary(self) -> dict[str, int | float]:
        """Return the dimensions for reports."""
        return {
            "total_dim": self.total_dim,
            "forbidden_dim": self.forbidden_dim,
            "allowed_dim": self.allowed_dim,
            "forbidden_fraction": self.forbidden_fraction,
        }


@dataclass(frozen=True)
class SIWitness:
    """A product state with a component in the forbidden span."""

    layout: RegisterLayout
    factor_names: tuple[str, ...]
    system_state: StateVector
    env_state: StateVector
    forbidden_overlap: float

    def product(self) -> StateVector:
        """Return system_state ⊗ env_state on the full layout."""
        return tensor(self.system_state, self.env_state, self.layout, self.factor_names)


def forbidden_outcomes(setup: MeasurementSetup) -> list[tuple[int, ...]]:
    """Return the outcome tuples excluded by repeated observables or declared."""
    schedule = setup.ordered_schedule
    repeated = [
        (p, q)
        for p, q in itertools.combinations(range(len(schedule)), 2)
        if schedule[p].observable == schedule[q].observable
    ]
    declared = set(setup.forbidden_outcomes)
    return [
        outcome
        for outcome in itertools.product(range(1, setup.n + 1), repeat=len(schedule))
        if outcome in declared or any(outcome[p] != outcome[q] for p, q in repeated)
    ]


def forbidden_final_states(
    setup: MeasurementSetup,
    span_system: bool = False,
) -> list[StateVector]:
    """Return the final states carrying forbidden records.

    By default the system sits in the eigenstate of the last observable that
    matches its last record. With `span_system` every system basis state is
    used, covering the whole forbidden-record sector.
    """
    schedule = setup.ordered_schedule
    if not schedule:
        return []
    layout = setup.layout
    positions = [
        layout.index(setup.pointer_register(entry.pointer)) for entry in schedule
    ]
    sys_pos = layout.index(SYSTEM_REGISTER)
    env_pos = len(layout.registers) - 1
    finals: list[StateVector] = []
    for outcome in forbidden_outcomes(setup):
        values = [READY] * len(layout.registers)
        for p, value in zip(positions, outcome):
            values[p] = value
        if span_system:
            systems = [
                StateVector.basis(setup.system_layout, (s,)) for s in range(setup.n)
            ]
        else:
            systems = [setup.eigenstate(schedule[-1].observable, outcome[-1] - 1)]
        for system, env in itertools.product(systems, range(setup.env_dim)):
            values[env_pos] = env
            pairs = []
            for (s,), amplitude in system.items():
                values[sys_pos] = s
                pairs.append((tuple(values), amplitude))
            finals.append(StateVector(layout, pairs))
    _LOGGER.debug("built %d forbidden final states", len(finals))
    return finals


def back_propagate(
    setup: MeasurementSetup,
    finals: Sequence[StateVector],
) -> list[StateVector]:
    """Return U† f for every final state, U the whole schedule."""
    unitaries = schedule_unitaries(setup)
    result = []
    for final in finals:
        state = final
        for unitary in reversed(unitaries):
            state = apply_adjoint(unitary, state)
        result.append(state)
    return result


def _segments(
    setup: MeasurementSetup,
    after_steps: Sequence[int] | None,
) -> list[list[UnitarySpec]]:
    """Split the schedule into the unitary stretches between projections."""
    unitaries = schedule_unitaries(setup)
    if after_steps is None:
        after_steps = range(len(unitaries) - 1)
    cuts = sorted(set(after_steps))
    if any(not 0 <= c < len(unitaries) for c in cuts):
        msg = f"projection steps {cuts} outside a schedule of {len(unitaries)}"
        raise DomainError(msg)
    segments, start = [], 0
    for cut in cuts:
        segments.append(unitaries[start : cut + 1])
        start = cut + 1
    segments.append(unitaries[start:])
    return segments


def _check_partition(
    layout: RegisterLayout,
    macro: Sequence[Projector],
    labels: Iterable[BasisLabel],
) -> None:
    """Raise PartitionError unless each label is kept by exactly one projector."""
    if not macro:
        msg = "empty projector family"
        raise PartitionError(msg)
    if layout.total_dim <= ORACLE_BOUND:
        labels = layout.labels()
    for label in labels:
        kept = sum(1 for p in macro if p(label))
        if kept != 1:
            msg = f"label {label} is kept by {kept} projectors, expected exactly 1"
            raise PartitionError(msg)


def back_propagate_with_projections(
    setup: MeasurementSetup,
    finals: Sequence[StateVector],
    macro: Sequence[Projector],
    after_steps: Sequence[int] | None = None,
    depth_cap: int = PROJECTION_DEPTH_CAP,
) -> list[StateVector]:
    """Return the pre-images of each final state through every projection path.

    Projections happen after the schedule positions in `after_steps`, by
    default after every measurement but the last. Walking backwards, each
    projection time is "unprojected" by splitting the state over the macro
    cells and following every cell with a nonzero component.
    """
    _check_partition(
        setup.layout,
        macro,
        itertools.chain.from_iterable(f.terms for f in finals),
    )
    segments = _segments(setup, after_steps)
    if len(segments) - 1 > depth_cap:
        msg = f"{len(segments) - 1} projection times exceed the depth cap {depth_cap}"
        raise DimensionBoundError(msg)

    def walk(state: StateVector, index: int) -> Iterator[StateVector]:
        for unitary in reversed(segments[index]):
            state = apply_adjoint(unitary, state)
        if index == 0:
            yield state.normalized()
            return
        for projector in macro:
            piece = apply_projector(projector, state)
            if piece.norm() ** 2 > state.prune_epsilon:
                yield from walk(piece.normalized(), index - 1)

    result: list[StateVector] = []
    for final in finals:
        images = list(walk(final, len(segments) - 1))
        _LOGGER.debug("final state has %d pre-images", len(images))
        result.extend(images)
    return result


def reach_probability(
    setup: MeasurementSetup,
    initial: StateVector,
    final: StateVector,
    macro: Sequence[Projector],
    after_steps: Sequence[int] | None = None,
) -> float:
    """Return the probability to end in `final` under evolution with projections.

    Every branch of the projection tree is enumerated.
    """
    segments = _segments(setup, after_steps)

    def walk(state: StateVector, index: int) -> float:
        for unitary in segments[index]:
            state = apply_unitary(unitary, state)
        if index == len(segments) - 1:
            return abs(inner_product(final, state)) ** 2
        total = 0.0
        for projector in macro:
            piece = apply_projector(projector, state)
            weight = piece.norm() ** 2
            if weight > state.prune_epsilon:
                total += weight * walk(piece.normalized(), index + 1)
        return total

    return walk(initial.normalized(), 0)


def allowed_subspace(
    setup: MeasurementSetup,
    forbidden_initials: Sequence[StateVector],
    bound: int | None = ORACLE_BOUND,
    rank_tol: float = RANK_TOL,
) -> SubspaceReport:
    """Return the forbidden span and the dimension of its complement.

    The span is built over the union of the input supports, so no dense
    vector of the full space is formed. The bound guards the dense oracle
    views; None lifts it. Random states drawn by sample_allowed,
    typical_overlap and the si_witness search still need the bound.

    :param bound: largest total dimension handled; None for no limit
    :raises ~qrecords.types.DimensionBoundError: when the space is too large
    """
    total_dim = setup.layout.total_dim
    if bound is not None and total_dim > bound:
        msg = (
            f"total dimension {total_dim} exceeds the oracle bound {bound}; "
            "pass bound=None to build the span sparsely without the dense check"
        )
        raise DimensionBoundError(msg)
    basis = orthonormalize(forbidden_initials, rank_tol)
    return SubspaceReport(
        layout=setup.layout,
        forbidden_basis=tuple(basis),
        total_dim=total_dim,
        forbidden_dim=len(basis),
        allowed_dim=total_dim - len(basis),
    )


def forbidden_overlap(report: SubspaceReport, state: StateVector) -> float:
    """Return the weight of `state` in the forbidden span."""
    return report.overlap(state)


def forbidden_outcome_probability(
    setup: MeasurementSetup,
    initial: StateVector,
    span_system: bool = False,
) -> float:
    """Run the schedule on `initial` and return its weight on the forbidden finals."""
    final = run_schedule(setup, initial)
    basis = orthonormalize(forbidden_final_states(setup, span_system))
    return math.fsum(abs(inner_product(f, final)) ** 2 for f in basis)


def _random_state(layout: RegisterLayout, rng: np.random.Generator) -> StateVector:
    if layout.total_dim > ORACLE_BOUND:
        msg = f"cannot draw dense random states of dimension {layout.total_dim}"
        raise DimensionBoundError(msg)
    vector = rng.normal(size=layout.total_dim) + 1j * rng.normal(size=layout.total_dim)
    return StateVector.from_dense(layout, vector / np.linalg.norm(vector))


def sample_allowed(
    report: SubspaceReport,
    samples: int,
    seed: int,
) -> list[StateVector]:
    """Return normalized random vectors drawn from the allowed complement."""
    rng = make_rng(seed)
    drawn = []
    while len(drawn) < samples:
        candidate = report.project_out(_random_state(report.layout, rng))
        if candidate.norm() > RANK_TOL:
            drawn.append(candidate.normalized())
    return drawn


def evolve_report(report: SubspaceReport, unitary: UnitarySpec) -> SubspaceReport:
    """Return the report of the span carried forward by `unitary`."""
    moved = orthonormalize([apply_unitary(unitary, f) for f in report.forbidden_basis])
    return SubspaceReport(
        layout=report.layout,
        forbidden_basis=tuple(moved),
        total_dim=report.total_dim,
        forbidden_dim=len(moved),
        allowed_dim=report.total_dim - len(moved),
    )


def typical_overlap(report: SubspaceReport, samples: int, seed: int) -> float:
    """Return the mean forbidden overlap of uniformly random states."""
    rng = make_rng(seed)
    return math.fsum(
        report.overlap(_random_state(report.layout, rng)) for _ in range(samples)
    ) / samples


def si_witness(
    report: SubspaceReport,
    factor_split: Sequence[str],
    threshold: float = WITNESS_THRESHOLD,
    samples: int = WITNESS_SAMPLES,
    seed: int = WITNESS_SEED,
) -> SIWitness | None:
    """Search a product state psi ⊗ epsilon with a forbidden component.

    Computational basis labels are scanned first, in label order, then seeded
    random product states. Labels outside the support of the forbidden basis
    have zero overlap, so the basis scan only visits that support.
    """
    layout = report.layout
    names = tuple(n for n in layout.names if n in set(factor_split))
    if not names or len(names) != len(set(factor_split)) or len(names) == len(
        layout.names,
    ):
        msg = f"{list(factor_split)} is not a proper nonempty subset of {layout.names}"
        raise DomainError(msg)
    if report.forbidden_dim == 0:
        return None
    first_layout, rest_layout = layout.select(names), layout.complement(names)

    def witness(first: StateVector, rest: StateVector) -> SIWitness | None:
        overlap = report.overlap(tensor(first, rest, layout, names))
        if overlap <= threshold:
            return None
        return SIWitness(layout, names, first, rest, overlap)

    support = sorted(set().union(*(f.terms for f in report.forbidden_basis)))
    for label in support:
        first, rest = layout.split(label, names)
        found = witness(
            StateVector.basis(first_layout, first),
            StateVector.basis(rest_layout, rest),
        )
        if found is not None:
            _LOGGER.debug("basis witness at %s with overlap %g", label, found.forbidden_overlap)
            return found
    rng = make_rng(seed)
    for _ in range(samples):
        found = witness(_random_state(first_layout, rng), _random_state(rest_layout, rng))
        if found is not None:
            return found
    return None
