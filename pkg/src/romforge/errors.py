"""Exception hierarchy.

Every error carries a short ``kind`` string so reports and the HTTP layer can
surface it without string matching, plus the CLI exit code it maps to.
"""


class RomError(Exception):
    kind = "rom-error"
    exit_code = 1

    def __init__(self, message="", **context):
        super().__init__(message)
        self.context = context


class InvalidConfig(RomError, ValueError):
    kind = "invalid-config"
    exit_code = 2


class InvalidResolution(InvalidConfig):
    kind = "invalid-resolution"


class InvalidGeometry(InvalidConfig):
    kind = "invalid-geometry"


class InvalidStabilization(InvalidConfig):
    kind = "invalid-stabilization"


class InvalidBC(InvalidConfig):
    kind = "invalid-bc"


class IncompatibleFields(RomError, ValueError):
    kind = "incompatible-fields"


class IncompatibleMesh(IncompatibleFields):
    kind = "incompatible-mesh"


class DimensionMismatch(IncompatibleFields):
    kind = "dimension-mismatch"


class UndefinedRelativeError(RomError, ZeroDivisionError):
    kind = "undefined-relative-error"


class FOMDiverged(RomError, RuntimeError):
    kind = "fom-diverged"
    exit_code = 3


class SolverFailure(FOMDiverged):
    kind = "solver-failure"


class EmptySnapshots(RomError, ValueError):
    kind = "empty-snapshots"


class DegenerateSnapshots(RomError, ValueError):
    kind = "degenerate-snapshots"


class DegenerateSpectrum(RomError, ValueError):
    kind = "degenerate-spectrum"


class InvalidBasis(RomError, ValueError):
    kind = "invalid-basis"


class NewtonDiverged(RomError, RuntimeError):
    kind = "newton-diverged"
    exit_code = 4


class SingularJacobian(NewtonDiverged):
    kind = "singular-jacobian"


class IllConditionedKernel(RomError, ValueError):
    kind = "ill-conditioned-kernel"


class IncompleteBundle(RomError, FileNotFoundError):
    kind = "incomplete-bundle"
    exit_code = 5
