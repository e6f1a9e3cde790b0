"""Tests for sparse states and operators."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrecords.qstate import (
    DeviceReading,
    MacroLabel,
    Projector,
    RegisterLayout,
    StateVector,
    apply_adjoint,
    apply_projector,
    apply_unitary,
    compose,
    identity_unitary,
    inner_product,
    local_unitary,
    orthonormalize,
    permutation_unitary,
    project,
    tensor,
    unitarity_defect,
)
from qrecords.types import (
    DimensionBoundError,
    DomainError,
    LayoutMismatchError,
    NullProjectionError,
)

from .const import EXACT, ROUND_TRIP, SQRT_HALF
from .helper import HADAMARD, dense_unitary, random_unitary, random_vector

LAYOUT = RegisterLayout.of(("s", 2), ("p", 3))

amplitudes = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)
states = st.dictionaries(
    st.tuples(st.integers(0, 1), st.integers(0, 2)),
    amplitudes,
    min_size=1,
    max_size=6,
)


def test_layout() -> None:
    """Test label bookkeeping of a layout."""
    assert LAYOUT.total_dim == 6
    assert list(LAYOUT.labels())[:3] == [(0, 0), (0, 1), (0, 2)]
    assert LAYOUT.dense_index((1, 2)) == 5
    assert LAYOUT.label_at(4) == (1, 1)
    assert LAYOUT.split((1, 2), ["p"]) == ((2,), (1,))
    assert LAYOUT.merge(["p"], (2,), (1,)) == (1, 2)
    assert LAYOUT.complement(["s"]).names == ("p",)


@pytest.mark.parametrize(
    "label",
    [(2, 0), (0, 3), (0,), (-1, 0)],
    ids=["Too large", "Pointer too large", "Too short", "Negative"],
)
def test_layout_validate(label: tuple[int, ...]) -> None:
    """Test rejection of labels outside the layout."""
    with pytest.raises(DomainError):
        LAYOUT.validate(label)


def test_unknown_register() -> None:
    """Test looking up a missing register."""
    with pytest.raises(DomainError):
        LAYOUT.index("env")


def test_state_prunes_and_sorts() -> None:
    """Test that tiny amplitudes vanish and labels are kept in order."""
    state = StateVector(LAYOUT, {(1, 0): 0.5, (0, 2): 1e-15, (0, 1): 0.5})
    assert list(state.terms) == [(0, 1), (1, 0)]
    assert state.amplitude((0, 2)) == 0


def test_state_merges_duplicates() -> None:
    """Test that repeated labels add up."""
    state = StateVector(LAYOUT, [((0, 0), 1.0), ((0, 0), -1.0), ((1, 1), 2.0)])
    assert dict(state.terms) == {(1, 1): 2.0}


def test_inner_product_conjugates_first() -> None:
    """Test the inner product convention."""
    a = StateVector.basis(LAYOUT, (0, 0), 1j)
    b = StateVector.basis(LAYOUT, (0, 0), 1.0)
    assert inner_product(a, b) == -1j
    assert inner_product(b, a) == 1j


def test_layout_mismatch() -> None:
    """Test that states over different layouts do not mix."""
    other = RegisterLayout.of(("s", 2))
    with pytest.raises(LayoutMismatchError):
        inner_product(StateVector.basis(LAYOUT, (0, 0)), StateVector.basis(other, (0,)))


def test_normalize_zero() -> None:
    """Test that the zero vector cannot be normalized."""
    with pytest.raises(NullProjectionError):
        StateVector(LAYOUT).normalized()


def test_dense_round_trip() -> None:
    """Test conversion to and from dense vectors."""
    vector = random_vector(6, np.random.default_rng(1))
    state = StateVector.from_dense(LAYOUT, vector)
    assert np.allclose(state.to_dense(), vector)


def test_to_dense_bound() -> None:
    """Test that huge layouts are not densified."""
    layout = RegisterLayout.of(("a", 100), ("b", 100))
    with pytest.raises(DimensionBoundError):
        StateVector.basis(layout, (0, 0)).to_dense()


def test_local_unitary_matches_kron() -> None:
    """Test a local operator against the dense Kronecker product."""
    u = random_unitary(3, np.random.default_rng(2))
    op = local_unitary(LAYOUT, ["p"], u)
    assert np.allclose(op.to_matrix(), np.kron(np.eye(2), u))
    assert unitarity_defect(op, LAYOUT.labels()) < EXACT


def test_local_unitary_shape() -> None:
    """Test rejection of a matrix of the wrong size."""
    with pytest.raises(LayoutMismatchError):
        local_unitary(LAYOUT, ["s"], np.eye(3))


def test_enumerated_adjoint() -> None:
    """Test the adjoint of an operator without an explicit adjoint action."""
    u = np.kron(HADAMARD, random_unitary(3, np.random.default_rng(3)))
    op = dense_unitary(LAYOUT, u)
    state = StateVector.from_dense(LAYOUT, random_vector(6, np.random.default_rng(4)))
    back = apply_adjoint(op, apply_unitary(op, state))
    assert back.max_difference(state) < EXACT
    assert np.allclose(op.adjoint().to_matrix(), u.conj().T)


def test_compose_order() -> None:
    """Test that compose applies its operators left to right."""
    shift = permutation_unitary(
        LAYOUT,
        lambda label: (label[0], (label[1] + 1) % 3),
        lambda label: (label[0], (label[1] - 1) % 3),
    )
    flip = local_unitary(LAYOUT, ["s"], np.array([[0, 1], [1, 0]]))
    both = compose(shift, flip)
    assert np.allclose(both.to_matrix(), flip.to_matrix() @ shift.to_matrix())
    state = StateVector.basis(LAYOUT, (0, 2))
    assert apply_adjoint(both, apply_unitary(both, state)).max_difference(state) == 0


def test_identity() -> None:
    """Test the identity operator."""
    state = StateVector.basis(LAYOUT, (1, 2), 0.5j)
    assert apply_unitary(identity_unitary(LAYOUT), state).terms == state.terms


def test_project() -> None:
    """Test projection weight and renormalization."""
    state = StateVector(LAYOUT, {(0, 0): 0.6, (1, 0): 0.8})
    kept, weight = project(Projector(lambda label: label[0] == 1), state)
    assert weight == pytest.approx(0.64)
    assert kept.amplitude((1, 0)) == pytest.approx(1)
    assert len(apply_projector(Projector(lambda label: label[1] == 2), state)) == 0


def test_project_null() -> None:
    """Test that an impossible outcome is reported."""
    state = StateVector.basis(LAYOUT, (0, 0))
    with pytest.raises(NullProjectionError):
        project(Projector(lambda label: label[0] == 1), state)


QUBIT = RegisterLayout.of(("q", 2))
BIG = RegisterLayout.of(("a", 4), ("b", 8), ("c", 8))


def test_inner_product_example() -> None:
    """Test <(e0 + i e1)/sqrt2 | e1> = -i/sqrt2."""
    a = StateVector(QUBIT, {(0,): SQRT_HALF, (1,): 1j * SQRT_HALF})
    b = StateVector.basis(QUBIT, (1,))
    assert inner_product(a, b) == pytest.approx(-1j * SQRT_HALF, abs=EXACT)


def test_rotation_and_permutation() -> None:
    """Test a quarter-pi rotation and a cyclic relabeling of basis states."""
    c = s = SQRT_HALF
    rotation = local_unitary(QUBIT, ["q"], np.array([[c, -s], [s, c]]))
    rotated = apply_unitary(rotation, StateVector.basis(QUBIT, (0,)))
    expected = StateVector(QUBIT, {(0,): SQRT_HALF, (1,): SQRT_HALF})
    assert rotated.max_difference(expected) < EXACT
    trit = RegisterLayout.of(("q", 3))
    cycle = permutation_unitary(
        trit,
        lambda label: ((label[0] + 1) % 3,),
        lambda label: ((label[0] - 1) % 3,),
    )
    assert dict(apply_unitary(cycle, StateVector.basis(trit, (0,))).terms) == {(1,): 1}


def test_project_half() -> None:
    """Test keeping e0 of an equal superposition."""
    state = StateVector(QUBIT, {(0,): SQRT_HALF, (1,): SQRT_HALF})
    kept, weight = project(Projector(lambda label: label == (0,)), state)
    assert weight == pytest.approx(0.5, abs=EXACT)
    assert kept.max_difference(StateVector.basis(QUBIT, (0,))) < EXACT
    with pytest.raises(NullProjectionError):
        project(Projector(lambda label: label == (1,)), StateVector.basis(QUBIT, (0,)))


def test_orthonormalize_examples() -> None:
    """Test duplicate collapse, a rank two span and the empty input."""
    e0 = StateVector.basis(QUBIT, (0,))
    (only,) = orthonormalize([e0, e0])
    assert abs(abs(only.amplitude((0,))) - 1) < EXACT
    assert len(only) == 1
    plus = StateVector(QUBIT, {(0,): SQRT_HALF, (1,): SQRT_HALF})
    basis = orthonormalize([e0, plus])
    assert len(basis) == 2
    gram = np.array([[inner_product(a, b) for b in basis] for a in basis])
    assert np.allclose(gram, np.eye(2), atol=ROUND_TRIP)
    assert orthonormalize([]) == []


def test_orthonormalize_duplicates() -> None:
    """Test that duplicates and combinations do not raise the rank."""
    a = StateVector(LAYOUT, {(0, 0): 1, (1, 1): 1})
    b = StateVector.basis(LAYOUT, (0, 2))
    basis = orthonormalize([a, b, a, a * 2 + b * 1j])
    assert len(basis) == 2
    assert inner_product(basis[0], basis[1]) == pytest.approx(0)


def test_tensor() -> None:
    """Test placing two factors into the full layout."""
    s = StateVector(LAYOUT.select(["s"]), {(0,): 0.6, (1,): 0.8})
    p = StateVector.basis(LAYOUT.select(["p"]), (2,))
    joint = tensor(s, p, LAYOUT, ["s"])
    assert dict(joint.terms) == {(0, 2): 0.6, (1, 2): 0.8}
    with pytest.raises(LayoutMismatchError):
        tensor(p, s, LAYOUT, ["s"])


def test_macro_label() -> None:
    """Test macro labels as hashable readings."""
    label = MacroLabel(
        readings=(
            DeviceReading(device=1, position=(0, 1, 2), pointer=2),
            DeviceReading(device=3, pointer=0),
        ),
    )
    assert str(label) == "1@0,1,2=2;3=0"
    assert label.pointer(1) == 2
    assert {label: 1}[label.model_copy()] == 1
    with pytest.raises(DomainError):
        label.pointer(2)


@given(states)
def test_norm_is_inner_product(terms: dict[tuple[int, int], complex]) -> None:
    """Test <s|s> = |s|^2."""
    state = StateVector(LAYOUT, terms)
    assert inner_product(state, state).real == pytest.approx(state.norm() ** 2)


@settings(max_examples=50)
@given(st.lists(states, min_size=1, max_size=8))
def test_orthonormalize_is_orthonormal(vectors: list[dict[tuple[int, int], complex]]) -> None:
    """Test that the returned basis is orthonormal and not larger than the input."""
    basis = orthonormalize([StateVector(LAYOUT, v) for v in vectors])
    assert len(basis) <= min(len(vectors), LAYOUT.total_dim)
    for i, first in enumerate(basis):
        for j, second in enumerate(basis):
            expected = 1.0 if i == j else 0.0
            assert abs(inner_product(first, second) - expected) < 1e-10


def test_norm_preservation() -> None:
    """Test |Us| = |s| for random unitaries with orthonormal columns."""
    rng = np.random.default_rng(6)
    for _ in range(100):
        op = dense_unitary(LAYOUT, random_unitary(6, rng))
        assert unitarity_defect(op, LAYOUT.labels()) < EXACT
        state = StateVector.from_dense(LAYOUT, random_vector(6, rng))
        assert abs(apply_unitary(op, state).norm() - state.norm()) < EXACT


@settings(max_examples=50)
@given(
    states,
    states,
    st.sets(st.tuples(st.integers(0, 1), st.integers(0, 2))),
    st.integers(0, 2**32 - 1),
)
def test_matches_dense_oracle(
    first: dict[tuple[int, int], complex],
    second: dict[tuple[int, int], complex],
    kept: set[tuple[int, int]],
    seed: int,
) -> None:
    """Test unitaries, projectors and inner products against dense algebra."""
    a, b = StateVector(LAYOUT, first), StateVector(LAYOUT, second)
    u = random_unitary(6, np.random.default_rng(seed))
    op = dense_unitary(LAYOUT, u)
    assert np.allclose(apply_unitary(op, a).to_dense(), u @ a.to_dense(), atol=ROUND_TRIP)
    assert np.allclose(
        apply_adjoint(op, a).to_dense(),
        u.conj().T @ a.to_dense(),
        atol=ROUND_TRIP,
    )
    mask = np.array([label in kept for label in LAYOUT.labels()])
    projected = apply_projector(Projector(lambda label: label in kept), a)
    assert np.allclose(projected.to_dense(), np.where(mask, a.to_dense(), 0), atol=ROUND_TRIP)
    assert abs(inner_product(a, b) - np.vdot(a.to_dense(), b.to_dense())) < ROUND_TRIP


@pytest.mark.parametrize("name", ["a", "b", "c"])
def test_local_unitary_matches_dense_on_larger_layout(name: str) -> None:
    """Test a local operator on a 256 dimensional layout against Kronecker products."""
    rng = np.random.default_rng(ord(name))
    dims = dict(zip(BIG.names, (4, 8, 8)))
    u = random_unitary(dims[name], rng)
    factors = [u if other == name else np.eye(dims[other]) for other in BIG.names]
    dense = np.kron(np.kron(factors[0], factors[1]), factors[2])
    vector = random_vector(BIG.total_dim, rng)
    state = StateVector.from_dense(BIG, vector)
    result = apply_unitary(local_unitary(BIG, [name], u), state)
    assert np.allclose(result.to_dense(), dense @ vector, atol=ROUND_TRIP)
    assert abs(inner_product(state, result) - np.vdot(vector, dense @ vector)) < ROUND_TRIP
