"""Constants and enums for qrecords."""
from enum import Enum

VERSION = "1.0.0"

PRUNE_EPSILON = 1e-14
RANK_TOL = 1e-9
UNITARY_TOL = 1e-12
ORACLE_BOUND = 4096
WITNESS_THRESHOLD = 1e-6
WITNESS_SAMPLES = 10_000
WITNESS_SEED = 0
PROJECTION_DEPTH_CAP = 8
DEFAULT_EXTENT = 16
NORM_DRIFT_LIMIT = 1e-8

READY = 0
"""Pointer value of the ready state, for abstract pointers and lattice devices alike."""

SYSTEM_REGISTER = "system"
ENV_REGISTER = "env"


class ParticleKind(str, Enum):
    """Enum holding the roles a lattice particle can play."""

    ORDINARY = "ordinary"
    MEASURING = "measuring"
    BATH = "bath"


class EventTag(str, Enum):
    """Enum holding the kinds of measurement contact."""

    IDEAL = "ideal"
    DISTURBING = "disturbing"


class RecordStatus(str, Enum):
    """Enum holding the audit outcome of a record claim."""

    VALID = "valid"
    INVALID = "invalid"
    UNVERIFIABLE = "unverifiable"


class ScenarioMode(str, Enum):
    """Enum holding the two model families a scenario can describe."""

    ABSTRACT = "abstract"
    LATTICE = "lattice"


class Experiment(str, Enum):
    """Enum holding the experiments the command line can run."""

    RUN = "run"
    BORN_STATS = "born-stats"
    FORBIDDEN_SUBSPACE = "forbidden-subspace"
    SI_WITNESS = "si-witness"
    FORGE_AUDIT = "forge-audit"
    REVERSAL_DEMO = "reversal-demo"
    THERMAL_DEMO = "thermal-demo"
    EPR = "epr"


class ExitStatus(int, Enum):
    """Enum holding the process exit codes of the command line."""

    OK = 0
    PARSE_ERROR = 2
    VALIDATION_ERROR = 3
    NUMERICAL_VIOLATION = 4
