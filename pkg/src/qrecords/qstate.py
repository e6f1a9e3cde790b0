"""Sparse exact linear algebra over labeled composite bases."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from logging import getLogger
from types import MappingProxyType
from typing import TYPE_CHECKING, Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from qrecords.const import ORACLE_BOUND, PRUNE_EPSILON, RANK_TOL
from qrecords.types import (
    DimensionBoundError,
    DomainError,
    LayoutMismatchError,
    NullProjectionError,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence

__all__ = [
    "BasisLabel",
    "Register",
    "RegisterLayout",
    "StateVector",
    "UnitarySpec",
    "Projector",
    "DeviceReading",
    "MacroLabel",
    "inner_product",
    "apply_unitary",
    "apply_adjoint",
    "apply_projector",
    "project",
    "orthonormalize",
    "compose",
    "identity_unitary",
    "permutation_unitary",
    "local_unitary",
    "unitarity_defect",
    "tensor",
]

BasisLabel = tuple[int, ...]

_LOGGER = getLogger(__name__)


@dataclass(frozen=True)
class Register:
    """A named tensor factor of fixed dimension."""

    name: str
    dim: int

    def __post_init__(self) -> None:
        """Reject empty registers."""
        if self.dim < 1:
            msg = f"register {self.name!r} needs a positive dimension, got {self.dim}"
            raise ValueError(msg)


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered registers whose product basis labels the Hilbert space."""

    registers: tuple[Register, ...]

    def __post_init__(self) -> None:
        """Reject duplicated register names."""
        if len(set(self.names)) != len(self.names):
            msg = f"duplicate register names in {self.names}"
            raise ValueError(msg)

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> RegisterLayout:
        """Build a layout from (name, dimension) pairs."""
        return cls(tuple(Register(name, dim) for name, dim in pairs))

    @property
    def names(self) -> tuple[str, ...]:
        """Return the register names in order."""
        return tuple(r.name for r in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        """Return the register dimensions in order."""
        return tuple(r.dim for r in self.registers)

    @property
    def total_dim(self) -> int:
        """Return the dimension of the full product space."""
        return int(np.prod(self.dims, dtype=object))

    def index(self, name: str) -> int:
        """Return the position of a register."""
        try:
            return self.names.index(name)
        except ValueError as exc:
            msg = f"no register named {name!r}"
            raise DomainError(msg) from exc

    def validate(self, label: BasisLabel) -> None:
        """Raise DomainError unless the label fits this layout."""
        if len(label) != len(self.registers):
            msg = f"label {label} has {len(label)} registers, layout has {len(self.registers)}"
            raise DomainError(msg)
        for value, register in zip(label, self.registers):
            if not 0 <= value < register.dim:
                msg = f"value {value} outside register {register.name!r} of dim {register.dim}"
                raise DomainError(msg)

    def labels(self) -> Iterator[BasisLabel]:
        """Iterate over all basis labels in lexicographic order."""
        return itertools.product(*(range(d) for d in self.dims))

    def dense_index(self, label: BasisLabel) -> int:
        """Return the row-major position of a label."""
        index = 0
        for value, dim in zip(label, self.dims):
            index = index * dim + value
        return index

    def label_at(self, index: int) -> BasisLabel:
        """Inverse of dense_index."""
        values = []
        for dim in reversed(self.dims):
            index, value = divmod(index, dim)
            values.append(value)
        return tuple(reversed(values))

    def select(self, names: Sequence[str]) -> RegisterLayout:
        """Return the sub-layout of the named registers, kept in layout order."""
        wanted = set(names)
        missing = wanted - set(self.names)
        if missing:
            msg = f"unknown registers {sorted(missing)}"
            raise DomainError(msg)
        return RegisterLayout(tuple(r for r in self.registers if r.name in wanted))

    def complement(self, names: Sequence[str]) -> RegisterLayout:
        """Return the sub-layout of every register not named."""
        return self.select([n for n in self.names if n not in set(names)])

    def split(self, label: BasisLabel, names: Sequence[str]) -> tuple[BasisLabel, BasisLabel]:
        """Split a label into the named part and the rest."""
        wanted = set(names)
        first = tuple(v for v, n in zip(label, self.names) if n in wanted)
        rest = tuple(v for v, n in zip(label, self.names) if n not in wanted)
        return first, rest

    def merge(
        self,
        names: Sequence[str],
        first: BasisLabel,
        rest: BasisLabel,
    ) -> BasisLabel:
        """Inverse of split."""
        wanted = set(names)
        first_iter, rest_iter = iter(first), iter(rest)
        return tuple(
            next(first_iter) if n in wanted else next(rest_iter) for n in self.names
        )


def _accumulate(
    pairs: Iterable[tuple[BasisLabel, complex]],
) -> dict[BasisLabel, complex]:
    terms: dict[BasisLabel, complex] = {}
    for label, amplitude in pairs:
        terms[label] = terms.get(label, 0j) + amplitude
    return terms


class StateVector:
    """Immutable sparse vector: basis label to complex amplitude."""

    __slots__ = ("layout", "prune_epsilon", "_terms")

    def __init__(
        self,
        layout: RegisterLayout,
        terms: Mapping[BasisLabel, complex] | Iterable[tuple[BasisLabel, complex]] = (),
        prune_epsilon: float = PRUNE_EPSILON,
    ) -> None:
        """Initialize, validating labels and pruning arithmetic dust."""
        if prune_epsilon < 0:
            msg = "prune_epsilon has to be >= 0"
            raise ValueError(msg)
        pairs = terms.items() if hasattr(terms, "items") else terms
        merged = _accumulate(pairs)  # type: ignore[arg-type]
        kept: dict[BasisLabel, complex] = {}
        for label in sorted(merged):
            amplitude = complex(merged[label])
            if abs(amplitude) <= prune_epsilon:
                continue
            layout.validate(label)
            kept[label] = amplitude
        self.layout = layout
        self.prune_epsilon = prune_epsilon
        self._terms = MappingProxyType(kept)

    @classmethod
    def basis(
        cls,
        layout: RegisterLayout,
        label: BasisLabel,
        amplitude: complex = 1.0,
    ) -> StateVector:
        """Return a single basis state."""
        return cls(layout, {tuple(label): amplitude})

    @classmethod
    def from_dense(
        cls,
        layout: RegisterLayout,
        vector: Sequence[complex] | np.ndarray,
        prune_epsilon: float = PRUNE_EPSILON,
    ) -> StateVector:
        """Build a state from a dense row-major vector."""
        array = np.asarray(vector, dtype=complex)
        if array.shape != (layout.total_dim,):
            msg = f"dense vector of shape {array.shape} does not fit dim {layout.total_dim}"
            raise LayoutMismatchError(msg)
        return cls(
            layout,
            ((layout.label_at(int(i)), array[i]) for i in np.flatnonzero(array)),
            prune_epsilon,
        )

    @property
    def terms(self) -> Mapping[BasisLabel, complex]:
        """Return the read-only term map, sorted by label."""
        return self._terms

    def items(self) -> Iterable[tuple[BasisLabel, complex]]:
        """Iterate (label, amplitude) in label order."""
        return self._terms.items()

    def amplitude(self, label: BasisLabel) -> complex:
        """Return the amplitude of a label, zero when absent."""
        return self._terms.get(tuple(label), 0j)

    def __len__(self) -> int:
        """Return the number of stored terms."""
        return len(self._terms)

    def __repr__(self) -> str:
        """Return a short description."""
        return f"StateVector({len(self)} terms over {self.layout.names})"

    def to_dense(self) -> np.ndarray:
        """Return the dense row-major vector."""
        if self.layout.total_dim > ORACLE_BOUND:
            msg = f"dimension {self.layout.total_dim} exceeds dense bound {ORACLE_BOUND}"
            raise DimensionBoundError(msg)
        vector = np.zeros(self.layout.total_dim, dtype=complex)
        for label, amplitude in self.items():
            vector[self.layout.dense_index(label)] = amplitude
        return vector

    def norm(self) -> float:
        """Return the Euclidean norm."""
        return float(np.linalg.norm(np.fromiter(self._terms.values(), complex)))

    def normalized(self) -> StateVector:
        """Return the state scaled to unit norm."""
        norm = self.norm()
        if norm == 0:
            msg = "cannot normalize the zero vector"
            raise NullProjectionError(msg)
        return self * (1 / norm)

    def restrict(self, predicate: Callable[[BasisLabel], bool]) -> StateVector:
        """Keep only the terms whose label satisfies the predicate."""
        return StateVector(
            self.layout,
            ((label, a) for label, a in self.items() if predicate(label)),
            self.prune_epsilon,
        )

    def max_difference(self, other: StateVector) -> float:
        """Return the largest amplitude difference to another state."""
        _check_layout(self, other)
        labels = set(self._terms) | set(other.terms)
        return max(
            (abs(self.amplitude(label) - other.amplitude(label)) for label in labels),
            default=0.0,
        )

    def __add__(self, other: StateVector) -> StateVector:
        """Return the sum of two states."""
        _check_layout(self, other)
        return StateVector(
            self.layout,
            itertools.chain(self.items(), other.items()),
            min(self.prune_epsilon, other.prune_epsilon),
        )

    def __sub__(self, other: StateVector) -> StateVector:
        """Return the difference of two states."""
        return self + other * -1

    def __mul__(self, scalar: complex) -> StateVector:
        """Return the state scaled by a number."""
        return StateVector(
            self.layout,
            ((label, a * scalar) for label, a in self.items()),
            self.prune_epsilon,
        )

    __rmul__ = __mul__


def _check_layout(a: StateVector, b: StateVector) -> None:
    if a.layout != b.layout:
        msg = f"layout mismatch: {a.layout.names} vs {b.layout.names}"
        raise LayoutMismatchError(msg)


def inner_product(a: StateVector, b: StateVector) -> complex:
    """Return <a|b>, conjugate-linear in the first argument."""
    _check_layout(a, b)
    small, large = (a, b) if len(a) <= len(b) else (b, a)
    total = 0j
    for label, amplitude in small.items():
        other = large.amplitude(label)
        if other:
            total += (
                amplitude.conjugate() * other
                if small is a
                else other.conjugate() * amplitude
            )
    return total


@dataclass(frozen=True)
class UnitarySpec:
    """Column-defined operator: each basis label maps to a finite superposition."""

    layout: RegisterLayout
    action: Callable[[BasisLabel], Iterable[tuple[BasisLabel, complex]]]
    adjoint_action: Callable[[BasisLabel], Iterable[tuple[BasisLabel, complex]]] | None = None
    declared_unitary: bool = True
    name: str = "U"
    _cache: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def column(self, label: BasisLabel) -> StateVector:
        """Return U applied to one basis label."""
        self.layout.validate(label)
        return StateVector(self.layout, self.action(label))

    def adjoint(self) -> UnitarySpec:
        """Return the adjoint operator.

        Operators built without an explicit adjoint action get their rows by
        enumerating the whole layout, which is only allowed below the dense
        oracle bound.
        """
        adjoint_action = self.adjoint_action
        if adjoint_action is None:
            adjoint_action = self._enumerated_adjoint()
        return UnitarySpec(
            self.layout,
            adjoint_action,
            self.action,
            self.declared_unitary,
            f"{self.name}†",
        )

    def _enumerated_adjoint(
        self,
    ) -> Callable[[BasisLabel], Iterable[tuple[BasisLabel, complex]]]:
        if "rows" not in self._cache:
            if self.layout.total_dim > ORACLE_BOUND:
                msg = (
                    f"{self.name} has no adjoint action and dimension "
                    f"{self.layout.total_dim} is too large to enumerate"
                )
                raise DimensionBoundError(msg)
            _LOGGER.debug("enumerating adjoint of %s", self.name)
            rows: dict[BasisLabel, list[tuple[BasisLabel, complex]]] = {}
            for label in self.layout.labels():
                for image, coefficient in self.action(label):
                    rows.setdefault(tuple(image), []).append(
                        (label, complex(coefficient).conjugate()),
                    )
            self._cache["rows"] = rows
        rows = self._cache["rows"]
        return lambda label: rows.get(tuple(label), ())

    def to_matrix(self) -> np.ndarray:
        """Return the dense matrix (oracle use only)."""
        dim = self.layout.total_dim
        if dim > ORACLE_BOUND:
            msg = f"dimension {dim} exceeds dense bound {ORACLE_BOUND}"
            raise DimensionBoundError(msg)
        matrix = np.zeros((dim, dim), dtype=complex)
        for label in self.layout.labels():
            column = self.layout.dense_index(label)
            for image, coefficient in self.action(label):
                matrix[self.layout.dense_index(image), column] += coefficient
        return matrix


def apply_unitary(U: UnitarySpec, s: StateVector) -> StateVector:
    """Return U s, term by term in label order."""
    if U.layout != s.layout:
        msg = f"{U.name} acts on {U.layout.names}, state lives on {s.layout.names}"
        raise LayoutMismatchError(msg)
    pairs: list[tuple[BasisLabel, complex]] = []
    for label, amplitude in s.items():
        pairs.extend((image, amplitude * c) for image, c in U.action(label))
    return StateVector(s.layout, pairs, s.prune_epsilon)


def apply_adjoint(U: UnitarySpec, s: StateVector) -> StateVector:
    """Return U† s."""
    return apply_unitary(U.adjoint(), s)


def compose(*unitaries: UnitarySpec) -> UnitarySpec:
    """Return the operator applying the given ones left to right."""
    if not unitaries:
        msg = "compose needs at least one operator"
        raise ValueError(msg)
    layout = unitaries[0].layout
    if any(u.layout != layout for u in unitaries):
        msg = "cannot compose operators over different layouts"
        raise LayoutMismatchError(msg)

    def chain(
        ops: Sequence[UnitarySpec],
    ) -> Callable[[BasisLabel], Iterable[tuple[BasisLabel, complex]]]:
        def action(label: BasisLabel) -> Iterable[tuple[BasisLabel, complex]]:
            state = StateVector.basis(layout, label)
            for op in ops:
                state = apply_unitary(op, state)
            return state.items()

        return action

    adjoints = [u.adjoint() for u in reversed(unitaries)]
    return UnitarySpec(
        layout,
        chain(unitaries),
        chain(adjoints),
        all(u.declared_unitary for u in unitaries),
        "·".join(u.name for u in reversed(unitaries)),
    )


def identity_unitary(layout: RegisterLayout) -> UnitarySpec:
    """Return the identity operator."""

    def action(label: BasisLabel) -> Iterable[tuple[BasisLabel, complex]]:
        return ((tuple(label), 1.0),)

    return UnitarySpec(layout, action, action, name="I")


def permutation_unitary(
    layout: RegisterLayout,
    mapping: Callable[[BasisLabel], BasisLabel],
    inverse: Callable[[BasisLabel], BasisLabel],
    name: str = "Π",
) -> UnitarySpec:
    """Return the relabeling operator |l> -> |mapping(l)>."""
    return UnitarySpec(
        layout,
        lambda label: ((mapping(label), 1.0),),
        lambda label: ((inverse(label), 1.0),),
        name=name,
    )


def local_unitary(
    layout: RegisterLayout,
    names: Sequence[str],
    matrix: np.ndarray,
    name: str = "L",
) -> UnitarySpec:
    """Return a small dense matrix acting on the named registers, identity elsewhere.

    The matrix is indexed row-major over the named registers in the order given.
    """
    positions = [layout.index(n) for n in names]
    sub = RegisterLayout(tuple(layout.registers[p] for p in positions))
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (sub.total_dim, sub.total_dim):
        msg = f"matrix of shape {matrix.shape} does not act on {sub.names}"
        raise LayoutMismatchError(msg)

    def acting(
        op: np.ndarray,
    ) -> Callable[[BasisLabel], Iterable[tuple[BasisLabel, complex]]]:
        def action(label: BasisLabel) -> Iterable[tuple[BasisLabel, complex]]:
            column = op[:, sub.dense_index(tuple(label[p] for p in positions))]
            out = []
            for row in np.flatnonzero(column):
                values = list(label)
                for p, v in zip(positions, sub.label_at(int(row))):
                    values[p] = v
                out.append((tuple(values), complex(column[row])))
            return out

        return action

    return UnitarySpec(layout, acting(matrix), acting(matrix.conj().T), name=name)


def unitarity_defect(U: UnitarySpec, labels: Iterable[BasisLabel]) -> float:
    """Return max |<U e_l|U e_m> - delta_lm| over the given label set."""
    columns = [U.column(label) for label in labels]
    worst = 0.0
    for i, first in enumerate(columns):
        for j in range(i, len(columns)):
            expected = 1.0 if i == j else 0.0
            worst = max(worst, abs(inner_product(first, columns[j]) - expected))
    return worst


@dataclass(frozen=True)
class Projector:
    """Diagonal projector keeping the labels a predicate accepts."""

    predicate: Callable[[BasisLabel], bool]
    name: str = "P"

    def __call__(self, label: BasisLabel) -> bool:
        """Return whether the label is kept."""
        return bool(self.predicate(label))


def apply_projector(P: Projector, s: StateVector) -> StateVector:
    """Return P s without renormalizing."""
    return s.restrict(P)


def project(P: Projector, s: StateVector) -> tuple[StateVector, float]:
    """Return the normalized projected state and the outcome weight.

    :raises ~qrecords.types.NullProjectionError: when the outcome is impossible
    """
    kept = apply_projector(P, s)
    total = s.norm() ** 2
    weight = kept.norm() ** 2 / total if total else 0.0
    if weight <= s.prune_epsilon**2 or len(kept) == 0:
        msg = f"null projection: {P.name} has weight {weight:.3e}"
        raise NullProjectionError(msg)
    return kept.normalized(), min(weight, 1.0)


def orthonormalize(
    vs: Sequence[StateVector],
    rank_tol: float = RANK_TOL,
) -> list[StateVector]:
    """Return an orthonormal basis of the span, dropping dependent vectors.

    Modified Gram-Schmidt with one re-orthogonalization pass per vector.
    """
    if not vs:
        return []
    layout = vs[0].layout
    for v in vs:
        if v.layout != layout:
            msg = "orthonormalize needs a common layout"
            raise LayoutMismatchError(msg)
    support = sorted(set().union(*(v.terms for v in vs)))
    position = {label: i for i, label in enumerate(support)}
    basis: list[np.ndarray] = []
    for v in vs:
        vector = np.zeros(len(support), dtype=complex)
        for label, amplitude in v.items():
            vector[position[label]] = amplitude
        for _ in range(2):
            for q in basis:
                vector = vector - np.vdot(q, vector) * q
        residual = float(np.linalg.norm(vector))
        if residual < rank_tol:
            continue
        basis.append(vector / residual)
    _LOGGER.debug("orthonormalized %d vectors to rank %d", len(vs), len(basis))
    return [
        StateVector(layout, zip(support, q), vs[0].prune_epsilon) for q in basis
    ]


def tensor(
    first: StateVector,
    rest: StateVector,
    layout: RegisterLayout,
    first_names: Sequence[str],
) -> StateVector:
    """Return first ⊗ rest placed into the full layout."""
    if first.layout != layout.select(first_names) or rest.layout != layout.complement(
        first_names,
    ):
        msg = "factor layouts do not match the requested split"
        raise LayoutMismatchError(msg)
    return StateVector(
        layout,
        (
            (layout.merge(first_names, a, b), x * y)
            for (a, x), (b, y) in itertools.product(first.items(), rest.items())
        ),
        min(first.prune_epsilon, rest.prune_epsilon),
    )


class DeviceReading(BaseModel):
    """Position and pointer value of one measuring device."""

    model_config = ConfigDict(frozen=True)

    device: int = Field(...)
    position: tuple[int, ...] = Field(())
    pointer: int = Field(...)


class MacroLabel(BaseModel):
    """Classical macro-state: readings of every measuring device."""

    model_config = ConfigDict(frozen=True)

    readings: tuple[DeviceReading, ...] = Field(())

    def pointer(self, device: int) -> int:
        """Return the pointer value of a device."""
        for reading in self.readings:
            if reading.device == device:
                return reading.pointer
        msg = f"device {device} is not part of this macro label"
        raise DomainError(msg)

    def sort_key(self) -> tuple[tuple[int, tuple[int, ...], int], ...]:
        """Return a key giving macro labels a total order."""
        return tuple((r.device, r.position, r.pointer) for r in self.readings)

    def __str__(self) -> str:
        """Return a compact description for logs and reports."""
        return ";".join(
            f"{r.device}@{','.join(map(str, r.position))}={r.pointer}"
            if r.position
            else f"{r.device}={r.pointer}"
            for r in self.readings
        )


