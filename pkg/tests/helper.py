"""Test helpers and dense oracles."""
from __future__ import annotations

import math

import numpy as np

from qrecords.const import ParticleKind
from qrecords.helper import matrix_to_pairs
from qrecords.lattice import LatticeWorld, Particle
from qrecords.measureframe import MeasurementSetup
from qrecords.qstate import RegisterLayout, StateVector, UnitarySpec


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Return a Haar random unitary."""
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_vector(n: int, rng: np.random.Generator) -> np.ndarray:
    """Return a random unit vector."""
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def dense_unitary(layout: RegisterLayout, matrix: np.ndarray) -> UnitarySpec:
    """Return the column action of a dense matrix over a layout."""
    size = layout.total_dim

    def action(label: tuple[int, ...]) -> list[tuple[tuple[int, ...], complex]]:
        column = matrix[:, layout.dense_index(label)]
        return [(layout.label_at(i), column[i]) for i in range(size)]

    return UnitarySpec(layout, action, name="dense")


def repeated_setup(
    n: int,
    basis: np.ndarray | None = None,
    initial_system: np.ndarray | None = None,
) -> MeasurementSetup:
    """Return the observable with eigenbasis `basis` measured twice."""
    if basis is None:
        basis = np.eye(n, dtype=complex)
    return MeasurementSetup.build(
        observables=[basis],
        schedule=[(0, 0, 0), (1, 0, 1)],
        initial_system=initial_system,
    )


def dense_forbidden_dim(basis: np.ndarray) -> int:
    """Return the forbidden rank of the repeated measurement by brute force."""
    n = basis.shape[0]
    d = n + 1
    eye = np.eye(d)
    projectors = [np.outer(basis[:, j], basis[:, j].conj()) for j in range(n)]
    shifts = [np.roll(eye, j + 1, axis=0) for j in range(n)]
    first = sum(np.kron(np.kron(p, x), eye) for p, x in zip(projectors, shifts))
    second = sum(np.kron(np.kron(p, eye), x) for p, x in zip(projectors, shifts))
    unitary = second @ first
    finals = [
        np.kron(np.kron(basis[:, k - 1], eye[j]), eye[k])
        for j in range(1, n + 1)
        for k in range(1, n + 1)
        if j != k
    ]
    initials = unitary.conj().T @ np.array(finals).T
    return int(np.linalg.matrix_rank(initials, tol=1e-9))


def iterated_partial_swap(m: int, coupling: float, contacts: int, pointer: int) -> float:
    """Return the ready population after `contacts` partial swaps with fresh baths."""
    theta = coupling * math.pi / 2
    swap = np.zeros((m * m, m * m))
    for p in range(m):
        for b in range(m):
            swap[b * m + p, p * m + b] = 1
    unitary = math.cos(theta) * np.eye(m * m) - 1j * math.sin(theta) * swap
    rho = np.zeros((m, m), dtype=complex)
    rho[pointer, pointer] = 1
    fresh = np.zeros((m, m))
    fresh[0, 0] = 1
    for _ in range(contacts):
        joint = unitary @ np.kron(rho, fresh) @ unitary.conj().T
        rho = np.einsum("ibjb->ij", joint.reshape(m, m, m, m))
    return float(rho[0, 0].real)


def pair_world(
    a: int,
    b: int,
    m: int,
    observed_unitary: np.ndarray | None = None,
    extent: int = 4,
) -> LatticeWorld:
    """Return an ordinary particle 0 and a device 1 on the same site."""
    return LatticeWorld(
        extent=extent,
        particles=(
            Particle(
                id=0,
                m=m,
                internal=a,
                velocity=(1, 0, 0),
                internal_unitary=(
                    None if observed_unitary is None else matrix_to_pairs(observed_unitary)
                ),
            ),
            Particle(id=1, kind=ParticleKind.MEASURING, m=m, internal=b, velocity=(0, 1, 0)),
        ),
    )


HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def branching_world() -> LatticeWorld:
    """Return a qubit that is rotated, then met by a device one step later."""
    return LatticeWorld(
        extent=4,
        particles=(
            Particle(
                id=0,
                m=2,
                velocity=(1, 0, 0),
                internal_unitary=matrix_to_pairs(HADAMARD),
            ),
            Particle(id=1, kind=ParticleKind.MEASURING, m=2, position=(1, 0, 0)),
        ),
    )


def thermal_world(contacts: int = 20, extent: int = 32, pointer: int = 2) -> LatticeWorld:
    """Return a resting device met by one fresh bath particle per step from t=1 on."""
    bath = tuple(
        Particle(
            id=i + 1,
            kind=ParticleKind.BATH,
            m=3,
            position=(extent - (i + 1), 0, 0),
            velocity=(1, 0, 0),
        )
        for i in range(contacts)
    )
    device = Particle(id=0, kind=ParticleKind.MEASURING, m=3, internal=pointer)
    return LatticeWorld(extent=extent, particles=(device, *bath))


def with_pointer(world: LatticeWorld, device: int, value: int) -> StateVector:
    """Return the configured start state with one pointer changed."""
    states = {
        p.id: (p.position, p.velocity, value if p.id == device else p.internal)
        for p in world.particles
    }
    return StateVector.basis(world.layout, world.label(states))  # type: ignore[arg-type]
