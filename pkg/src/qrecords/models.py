"""Models for scenario and report documents."""
from __future__ import annotations

import math
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator

from qrecords.const import (
    SYSTEM_REGISTER,
    VERSION,
    Experiment,
    ScenarioMode,
)
from qrecords.helper import ComplexPair, to_complex
from qrecords.lattice import LatticeWorld, ParticleState
from qrecords.measureframe import MeasurementSetup
from qrecords.qstate import StateVector
from qrecords.records import RecordClaim

__all__ = [
    "ABSTRACT_EXPERIMENTS",
    "LATTICE_EXPERIMENTS",
    "InitialTerm",
    "ScenarioParameters",
    "Scenario",
    "Report",
]

ABSTRACT_EXPERIMENTS = frozenset(
    {
        Experiment.RUN,
        Experiment.BORN_STATS,
        Experiment.FORBIDDEN_SUBSPACE,
        Experiment.SI_WITNESS,
        Experiment.EPR,
    },
)
LATTICE_EXPERIMENTS = frozenset(
    {
        Experiment.RUN,
        Experiment.FORGE_AUDIT,
        Experiment.REVERSAL_DEMO,
        Experiment.THERMAL_DEMO,
    },
)


class InitialTerm(BaseModel):
    """One term of a lattice start state: internal values overriding the configured ones."""

    model_config = ConfigDict(frozen=True)

    internals: dict[int, int] = Field({})
    amplitude: ComplexPair = Field((1.0, 0.0))


class ScenarioParameters(BaseModel):
    """Knobs shared by the experiments."""

    model_config = ConfigDict(frozen=True)

    samples: int = Field(10_000, ge=1)
    seed: int = Field(0)
    horizon: int = Field(1, ge=0)
    coupling: float = Field(0.0, ge=0.0, le=1.0)
    a_angle: float = Field(0.0)
    b_angle: float = Field(0.0)
    subsystem: tuple[str, ...] = Field((SYSTEM_REGISTER,))
    claims: tuple[RecordClaim, ...] = Field(())
    projection_after: tuple[int, ...] | None = Field(None)
    span_system: bool = Field(False)


class Scenario(BaseModel):
    """A scenario file: the model, its start state, the experiment and its parameters."""

    model_config = ConfigDict(frozen=True)

    mode: ScenarioMode = Field(...)
    experiment: Experiment = Field(...)
    setup: MeasurementSetup | None = Field(None)
    world: LatticeWorld | None = Field(None)
    initial_terms: tuple[InitialTerm, ...] = Field(())
    parameters: ScenarioParameters = Field(ScenarioParameters())

    @model_validator(mode="after")
    def _check_consistency(self) -> Scenario:
        allowed = (
            ABSTRACT_EXPERIMENTS if self.mode is ScenarioMode.ABSTRACT else LATTICE_EXPERIMENTS
        )
        if self.experiment not in allowed:
            msg = f"experiment {self.experiment.value} is not available in {self.mode.value} mode"
            raise ValueError(msg)
        if self.mode is ScenarioMode.LATTICE:
            if self.world is None:
                msg = "a lattice scenario needs a world"
                raise ValueError(msg)
            self._check_terms(self.world)
        elif self.setup is None and self.experiment is not Experiment.EPR:
            msg = f"experiment {self.experiment.value} needs a measurement setup"
            raise ValueError(msg)
        return self

    def _check_terms(self, world: LatticeWorld) -> None:
        ids = {p.id for p in world.particles}
        for term in self.initial_terms:
            for pid, value in term.internals.items():
                if pid not in ids or not 0 <= value < world.particle(pid).m:
                    msg = f"initial term sets particle {pid} to {value}"
                    raise ValueError(msg)
        norm = math.fsum(abs(to_complex(t.amplitude)) ** 2 for t in self.initial_terms)
        if self.initial_terms and abs(norm - 1) > 1e-10:
            msg = f"initial terms have squared norm {norm}, expected 1"
            raise ValueError(msg)

    def lattice_state(self) -> StateVector:
        """Return the lattice start state, the configured basis state by default."""
        world = self.world
        if world is None:
            msg = "not a lattice scenario"
            raise ValueError(msg)
        if not self.initial_terms:
            return world.initial_state()
        pairs = []
        for term in self.initial_terms:
            states = {
                p.id: ParticleState(p.position, p.velocity, term.internals.get(p.id, p.internal))
                for p in world.particles
            }
            pairs.append((world.label(states), to_complex(term.amplitude)))
        return StateVector(world.layout, pairs)


class Report(BaseModel):
    """The structured report of one scenario run."""

    scenario_hash: str = Field(...)
    seed: int = Field(...)
    experiment: Experiment = Field(...)
    tool_version: str = Field(VERSION)
    results: dict[str, Any] = Field({})
    diagnostics: list[str] = Field([])
