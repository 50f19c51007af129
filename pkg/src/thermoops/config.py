"""Global numeric tolerances, resource limits, and error taxonomy."""

import os
from dataclasses import dataclass

DEFAULT_MAX_DIM = 2**14
MAX_DIM_ENV = "THERMOOPS_MAX_DIM"


@dataclass
class Tolerances:
    """Validation tolerances; mutate the module-level TOLERANCES to adjust globally."""

    herm: float = 1e-10      # max |M - M^dagger| entry
    trace: float = 1e-10     # |tr M - 1|
    psd: float = 1e-9        # eigenvalues >= -psd
    energy_cons: float = 1e-9   # max |V H_in - H_out V| entry


TOLERANCES = Tolerances()


def max_dim() -> int:
    """Dimension cap for composite constructions; THERMOOPS_MAX_DIM overrides."""
    raw = os.environ.get(MAX_DIM_ENV)
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"{MAX_DIM_ENV} must be an integer, got {raw!r}") from exc
    if value <= 0:
        raise ValueError(f"{MAX_DIM_ENV} must be positive, got {value}")
    return value


class ThermoOpsError(Exception):
    """Base class for domain failures."""


class NumericRangeError(ThermoOpsError):
    """An exponent or weight left the representable range."""


class ResourceLimitError(ThermoOpsError):
    """A construction would exceed the dimension/memory cap."""


class EnergyConservationError(ThermoOpsError):
    """An operator fails the energy-conservation (intertwining) check."""


class UnitaryConstructionError(ThermoOpsError):
    """A constructed operator fails its unitarity/isometry residual check."""


class LatticeWindowError(ThermoOpsError):
    """No admissible lattice point for a classical-target eigenvector.

    Carries which side of the window failed; can only arise from truncation
    or a non-resonant eigenvector support, not from the mathematics.
    """

    def __init__(self, message: str, violated_side: str | None = None):
        super().__init__(message)
        self.violated_side = violated_side


class ClassicalStepError(ThermoOpsError):
    """The classical conversion step failed; names the violated curve point."""

    def __init__(self, message: str, witness: dict | None = None):
        super().__init__(message)
        self.witness = witness or {}


class CatalystExactnessError(ThermoOpsError):
    """Tr_S of the post-step joint state failed to reproduce the catalyst."""
