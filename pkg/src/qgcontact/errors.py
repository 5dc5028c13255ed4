"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and a distinct process
exit status, which the command-line front end reports on failure.
"""


class QGError(Exception):
    code = "error"
    exit_status = 1


class SchemaError(QGError):
    code = "schema_error"
    exit_status = 10


class ValidationError(QGError):
    code = "validation_error"
    exit_status = 11


class UnknownPreset(QGError):
    code = "unknown_preset"
    exit_status = 12


class DimensionMismatch(QGError):
    code = "dimension_mismatch"
    exit_status = 13


class UnsupportedConfiguration(QGError):
    code = "unsupported_configuration"
    exit_status = 14


class NoDiagonal(QGError):
    code = "no_diagonal"
    exit_status = 15


class InvalidH(QGError):
    code = "invalid_h"
    exit_status = 16


class MeshTooFine(QGError):
    code = "mesh_too_fine"
    exit_status = 17


class UnsatisfiableConstraint(QGError):
    code = "unsatisfiable_constraint"
    exit_status = 18


class NotPositiveDefinite(QGError):
    code = "not_positive_definite"
    exit_status = 20


class SingularShift(QGError):
    code = "singular_shift"
    exit_status = 21


class NoConvergence(QGError):
    code = "no_convergence"
    exit_status = 22


class NonSymmetricProblem(QGError):
    code = "non_symmetric_problem"
    exit_status = 23


class OutOfResolvedRange(QGError):
    code = "out_of_resolved_range"
    exit_status = 24


class TooFewEigenvalues(QGError):
    code = "too_few_eigenvalues"
    exit_status = 25


class BadQuantumNumbers(QGError):
    code = "bad_quantum_numbers"
    exit_status = 26
