"""Sequential ideal measurements of a finite system by pointer registers."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from qrecords.const import ENV_REGISTER, READY, SYSTEM_REGISTER
from qrecords.helper import (
    ComplexPair,
    pairs_to_vector,
    sample_counts,
    vector_to_pairs,
)
from qrecords.qstate import (
    BasisLabel,
    Projector,
    RegisterLayout,
    StateVector,
    UnitarySpec,
    apply_unitary,
    compose,
    identity_unitary,
    tensor,
)
from qrecords.types import (
    DisturbingPreconditionWarning,
    LayoutMismatchError,
    SetupValidationError,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Sequence

__all__ = [
    "ScheduledMeasurement",
    "MeasurementSetup",
    "OutcomeDistribution",
    "EPR_OUTCOMES",
    "prepare",
    "measurement_unitary",
    "measure_step",
    "schedule_unitaries",
    "schedule_unitary",
    "run_schedule",
    "outcome_distribution",
    "pointer_projectors",
    "macro_projectors",
    "epr_setup",
    "spin_correlation",
    "sample_outcomes",
]

_LOGGER = getLogger(__name__)

ORTHONORMAL_TOL = 1e-12
NORMALIZED_TOL = 1e-10


class ScheduledMeasurement(BaseModel):
    """One entry of a measurement schedule."""

    model_config = ConfigDict(frozen=True)

    time: int = Field(...)
    observable: int = Field(..., ge=0)
    pointer: int = Field(..., ge=0)


class MeasurementSetup(BaseModel):
    """Observed system, observables, pointer registers and schedule."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    n: int = Field(..., ge=1)
    raw_observables: tuple[tuple[tuple[ComplexPair, ...], ...], ...] = Field(
        ...,
        alias="observables",
    )
    eigenvalues: tuple[tuple[float, ...], ...] = Field(())
    raw_pointer_dims: tuple[int, ...] | None = Field(None, alias="pointer_dims")
    env_dim: int = Field(1, ge=1)
    schedule: tuple[ScheduledMeasurement, ...] = Field(())
    raw_initial_system: tuple[ComplexPair, ...] | None = Field(
        None,
        alias="initial_system",
    )
    forbidden_outcomes: tuple[tuple[int, ...], ...] = Field(())

    @model_validator(mode="after")
    def _check_invariants(self) -> MeasurementSetup:
        n = self.n
        for index, basis in enumerate(self.observables):
            if basis.shape != (n, n):
                msg = f"observable {index} needs {n} eigenvectors of {n} components"
                raise SetupValidationError(msg)
            gram = basis.conj().T @ basis
            if np.max(np.abs(gram - np.eye(n))) > ORTHONORMAL_TOL:
                msg = f"eigenbasis of observable {index} is not orthonormal"
                raise SetupValidationError(msg)
        for index, values in enumerate(self.eigenvalues):
            if len(values) != n or len(set(values)) != n:
                msg = f"observable {index} is degenerate or has {len(values)} eigenvalues"
                raise SetupValidationError(msg)
        for index, dim in enumerate(self.pointer_dims):
            if dim != n + 1:
                msg = f"pointer {index} has dimension {dim}, expected {n + 1}"
                raise SetupValidationError(msg)
        used: set[int] = set()
        for entry in self.schedule:
            if entry.observable >= len(self.raw_observables):
                msg = f"schedule refers to unknown observable {entry.observable}"
                raise SetupValidationError(msg)
            if entry.pointer >= len(self.pointer_dims):
                msg = f"schedule refers to unknown pointer {entry.pointer}"
                raise SetupValidationError(msg)
            if entry.pointer in used:
                msg = f"pointer {entry.pointer} is used by more than one measurement"
                raise SetupValidationError(msg)
            used.add(entry.pointer)
        if self.raw_initial_system is not None:
            vector = pairs_to_vector(self.raw_initial_system)
            if vector.shape != (n,):
                msg = f"initial system needs {n} amplitudes"
                raise SetupValidationError(msg)
            if abs(np.linalg.norm(vector) - 1) > NORMALIZED_TOL:
                msg = "initial system is not normalized"
                raise SetupValidationError(msg)
        for outcome in self.forbidden_outcomes:
            if len(outcome) != len(self.schedule) or not all(
                1 <= value <= n for value in outcome
            ):
                msg = f"forbidden outcome {outcome} does not fit the schedule"
                raise SetupValidationError(msg)
        return self

    @classmethod
    def build(
        cls,
        observables: Sequence[np.ndarray],
        schedule: Sequence[tuple[int, int, int]],
        env_dim: int = 1,
        initial_system: Sequence[complex] | np.ndarray | None = None,
        forbidden_outcomes: Sequence[Sequence[int]] = (),
        eigenvalues: Sequence[Sequence[float]] = (),
    ) -> MeasurementSetup:
        """Build a setup from eigenbasis matrices whose columns are eigenvectors.

        One pointer register is created per scheduled measurement.
        """
        matrices = [np.asarray(o, dtype=complex) for o in observables]
        n = matrices[0].shape[0]
        return cls(
            n=n,
            observables=tuple(
                tuple(vector_to_pairs(m[:, j]) for j in range(m.shape[1]))
                for m in matrices
            ),
            eigenvalues=tuple(tuple(v) for v in eigenvalues),
            pointer_dims=tuple(n + 1 for _ in schedule),
            env_dim=env_dim,
            schedule=tuple(
                ScheduledMeasurement(time=t, observable=o, pointer=p)
                for t, o, p in schedule
            ),
            initial_system=(
                None if initial_system is None else vector_to_pairs(initial_system)
            ),
            forbidden_outcomes=tuple(tuple(o) for o in forbidden_outcomes),
        )

    @property
    def observables(self) -> list[np.ndarray]:
        """Return each eigenbasis as a matrix whose column j is eigenvector j."""
        return [
            np.array([pairs_to_vector(v) for v in basis], dtype=complex).T
            if basis
            else np.zeros((0, 0), dtype=complex)
            for basis in self.raw_observables
        ]

    @property
    def pointer_dims(self) -> tuple[int, ...]:
        """Return the pointer dimensions, one pointer per measurement by default."""
        if self.raw_pointer_dims is None:
            return tuple(self.n + 1 for _ in self.schedule)
        return self.raw_pointer_dims

    @property
    def ordered_schedule(self) -> list[ScheduledMeasurement]:
        """Return the schedule sorted by time, stable for equal times."""
        return sorted(self.schedule, key=lambda entry: entry.time)

    @staticmethod
    def pointer_register(index: int) -> str:
        """Return the register name of a pointer."""
        return f"ptr{index}"

    @property
    def layout(self) -> RegisterLayout:
        """Return the system ⊗ pointers ⊗ environment layout."""
        return RegisterLayout.of(
            (SYSTEM_REGISTER, self.n),
            *((self.pointer_register(i), d) for i, d in enumerate(self.pointer_dims)),
            (ENV_REGISTER, self.env_dim),
        )

    @property
    def system_layout(self) -> RegisterLayout:
        """Return the layout of the observed system alone."""
        return self.layout.select([SYSTEM_REGISTER])

    @property
    def initial_system(self) -> StateVector | None:
        """Return the prepared system state, if the setup carries one."""
        if self.raw_initial_system is None:
            return None
        return StateVector.from_dense(
            self.system_layout,
            pairs_to_vector(self.raw_initial_system),
        )

    def eigenstate(self, observable: int, index: int) -> StateVector:
        """Return eigenvector `index` (0-based) of an observable on the system layout."""
        return StateVector.from_dense(
            self.system_layout,
            self.observables[observable][:, index],
        )


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probabilities of pointer-value tuples, in schedule order."""

    probabilities: dict[tuple[int, ...], float]

    def probability(self, *outcome: int) -> float:
        """Return the probability of one outcome tuple."""
        return self.probabilities.get(tuple(outcome), 0.0)

    def total(self) -> float:
        """Return the summed probability."""
        return math.fsum(self.probabilities.values())

    def marginal(self, position: int) -> dict[int, float]:
        """Return the distribution of the measurement at a schedule position."""
        result: dict[int, float] = {}
        for outcome, p in self.probabilities.items():
            result[outcome[position]] = result.get(outcome[position], 0.0) + p
        return dict(sorted(result.items()))

    def as_records(self) -> list[dict[str, object]]:
        """Return a JSON friendly listing."""
        return [
            {"outcome": list(outcome), "probability": p}
            for outcome, p in self.probabilities.items()
        ]


def prepare(
    setup: MeasurementSetup,
    system: StateVector | None = None,
) -> StateVector:
    """Embed a system state with every pointer ready and the environment in 0."""
    if system is None:
        system = setup.initial_system
    if system is None:
        msg = "no system state given and the setup carries none"
        raise SetupValidationError(msg)
    if system.layout != setup.system_layout:
        msg = f"system state lives on {system.layout.names}, expected the system register"
        raise LayoutMismatchError(msg)
    rest_layout = setup.layout.complement([SYSTEM_REGISTER])
    rest = StateVector.basis(rest_layout, tuple(READY for _ in rest_layout.registers))
    return tensor(system, rest, setup.layout, [SYSTEM_REGISTER])


def measurement_unitary(
    setup: MeasurementSetup,
    obs_idx: int,
    ptr_idx: int,
) -> UnitarySpec:
    """Return sum_j |psi_j><psi_j| ⊗ X_j, X_j shifting the pointer by j + 1.

    On a ready pointer this writes outcome j + 1 for eigenvector j.
    """
    layout = setup.layout
    basis = setup.observables[obs_idx]
    n = setup.n
    ptr_pos = layout.index(setup.pointer_register(ptr_idx))
    sys_pos = layout.index(SYSTEM_REGISTER)
    dim = setup.pointer_dims[ptr_idx]
    projectors = [np.outer(basis[:, j], basis[:, j].conj()) for j in range(n)]

    def shifted(
        direction: int,
    ) -> Callable[[BasisLabel], Iterable[tuple[BasisLabel, complex]]]:
        def action(label: BasisLabel) -> Iterable[tuple[BasisLabel, complex]]:
            out = []
            s, p = label[sys_pos], label[ptr_pos]
            for j, projector in enumerate(projectors):
                column = projector[:, s]
                pointer = (p + direction * (j + 1)) % dim
                for target in np.flatnonzero(np.abs(column) > 0):
                    values = list(label)
                    values[sys_pos] = int(target)
                    values[ptr_pos] = pointer
                    out.append((tuple(values), complex(column[target])))
            return out

        return action

    return UnitarySpec(
        layout,
        shifted(1),
        shifted(-1),
        name=f"M[obs{obs_idx}->ptr{ptr_idx}]",
    )


def measure_step(
    setup: MeasurementSetup,
    s: StateVector,
    obs_idx: int,
    ptr_idx: int,
) -> StateVector:
    """Let pointer `ptr_idx` measure observable `obs_idx`.

    A pointer that is not ready on some branch still gets the same unitary,
    a DisturbingPreconditionWarning records the violation.
    """
    ptr_pos = setup.layout.index(setup.pointer_register(ptr_idx))
    busy = [label for label in s.terms if label[ptr_pos] != READY]
    if busy:
        warnings.warn(
            f"pointer {ptr_idx} is not ready on {len(busy)} of {len(s)} terms",
            DisturbingPreconditionWarning,
            stacklevel=2,
        )
    _LOGGER.debug("measuring observable %d with pointer %d", obs_idx, ptr_idx)
    return apply_unitary(measurement_unitary(setup, obs_idx, ptr_idx), s)


def schedule_unitaries(setup: MeasurementSetup) -> list[UnitarySpec]:
    """Return the measurement unitaries in schedule order."""
    return [
        measurement_unitary(setup, entry.observable, entry.pointer)
        for entry in setup.ordered_schedule
    ]


def schedule_unitary(setup: MeasurementSetup) -> UnitarySpec:
    """Return the unitary of the whole schedule."""
    unitaries = schedule_unitaries(setup)
    if not unitaries:
        return identity_unitary(setup.layout)
    return compose(*unitaries)


def run_schedule(setup: MeasurementSetup, initial_system: StateVector) -> StateVector:
    """Run every scheduled measurement in time order.

    A state on the system register alone is first embedded with ready pointers.
    """
    state = (
        prepare(setup, initial_system)
        if initial_system.layout == setup.system_layout
        else initial_system
    )
    if state.layout != setup.layout:
        msg = f"state lives on {state.layout.names}, setup on {setup.layout.names}"
        raise LayoutMismatchError(msg)
    if abs(state.norm() - 1) > NORMALIZED_TOL:
        msg = f"initial state has norm {state.norm()}"
        raise SetupValidationError(msg)
    for entry in setup.ordered_schedule:
        state = measure_step(setup, state, entry.observable, entry.pointer)
    return state


def outcome_distribution(
    final: StateVector,
    setup: MeasurementSetup,
) -> OutcomeDistribution:
    """Return the probability of each tuple of scheduled pointer values."""
    positions = [
        setup.layout.index(setup.pointer_register(entry.pointer))
        for entry in setup.ordered_schedule
    ]
    probabilities = {
        outcome: 0.0
        for outcome in itertools.product(range(1, setup.n + 1), repeat=len(positions))
    }
    total = final.norm() ** 2
    for label, amplitude in final.items():
        outcome = tuple(label[p] for p in positions)
        probabilities[outcome] = probabilities.get(outcome, 0.0) + abs(amplitude) ** 2
    return OutcomeDistribution(
        {k: v / total for k, v in sorted(probabilities.items())},
    )


def pointer_projectors(setup: MeasurementSetup, ptr_idx: int) -> list[Projector]:
    """Return one projector per value of a pointer register."""
    position = setup.layout.index(setup.pointer_register(ptr_idx))

    def keeps(value: int) -> Projector:
        return Projector(
            lambda label: label[position] == value,
            f"ptr{ptr_idx}={value}",
        )

    return [keeps(value) for value in range(setup.pointer_dims[ptr_idx])]


def macro_projectors(setup: MeasurementSetup) -> list[Projector]:
    """Return the macro cells: one projector per tuple of all pointer values."""
    positions = [
        setup.layout.index(setup.pointer_register(i))
        for i in range(len(setup.pointer_dims))
    ]

    def keeps(values: tuple[int, ...]) -> Projector:
        return Projector(
            lambda label: tuple(label[p] for p in positions) == values,
            f"pointers={values}",
        )

    return [
        keeps(values)
        for values in itertools.product(*(range(d) for d in setup.pointer_dims))
    ]


EPR_OUTCOMES: dict[int, tuple[str, str]] = {
    1: ("up", "up"),
    2: ("up", "down"),
    3: ("down", "up"),
    4: ("down", "down"),
}


def _spin_basis(angle: float) -> np.ndarray:
    """Return columns (up, down) of the spin along `angle` in the x-z plane."""
    half = angle / 2
    return np.array(
        [[math.cos(half), -math.sin(half)], [math.sin(half), math.cos(half)]],
        dtype=complex,
    )


def epr_setup(a_angle: float, b_angle: float) -> MeasurementSetup:
    """Return the singlet pair measured by S_a ⊗ S_b as a single observable.

    Outcomes 1..4 are (up, up), (up, down), (down, up), (down, down). The
    eigenvalues only have to be distinct; the correlation depends on the
    eigenbasis alone.
    """
    joint = np.kron(_spin_basis(a_angle), _spin_basis(b_angle))
    singlet = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)
    return MeasurementSetup.build(
        observables=[joint],
        schedule=[(0, 0, 0)],
        initial_system=singlet,
        eigenvalues=[(1.5, 0.5, -0.5, -1.5)],
    )


def spin_correlation(distribution: OutcomeDistribution) -> float:
    """Return the expectation of the product of the two spin signs."""
    sign = {"up": 1, "down": -1}
    return math.fsum(
        sign[EPR_OUTCOMES[outcome[0]][0]]
        * sign[EPR_OUTCOMES[outcome[0]][1]]
        * probability
        for outcome, probability in distribution.probabilities.items()
        if outcome[0] in EPR_OUTCOMES
    )


def sample_outcomes(
    distribution: OutcomeDistribution,
    samples: int,
    seed: int,
) -> dict[tuple[int, ...], int]:
    """Draw seeded Born samples and return the count of every outcome."""
    outcomes = list(distribution.probabilities)
    counts = sample_counts(
        [distribution.probabilities[o] for o in outcomes],
        samples,
        seed,
    )
    return dict(zip(outcomes, counts))
