"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`KnappError`,
so callers (the sweep runner in particular) can tag a failed row without
swallowing unrelated bugs.
"""


class KnappError(Exception):
    """Base class for all package errors."""

    tag = "error"


class GeometryError(KnappError):
    tag = "geometry"


class NotOrthogonal(GeometryError):
    tag = "not_orthogonal"


class ClosureNotReached(GeometryError):
    tag = "closure_not_reached"


class NotFreeAction(GeometryError):
    tag = "not_free_action"


class SingularBasis(GeometryError):
    tag = "singular_basis"


class LatticeNotPreserved(GeometryError):
    tag = "lattice_not_preserved"


class TranslationLatticeMismatch(GeometryError):
    """The basis does not span exactly the translation subgroup of the group."""

    tag = "translation_lattice_mismatch"


class StabilizerNotCyclicRotations(GeometryError):
    tag = "stabilizer_not_cyclic_rotations"


class NoBasePoint(GeometryError):
    tag = "no_base_point"


class SearchExhausted(GeometryError):
    tag = "search_exhausted"


class NoPeriodFound(GeometryError):
    tag = "no_period_found"


class NotAligned(GeometryError):
    tag = "not_aligned"


class NotOnSphere(KnappError):
    tag = "not_on_sphere"


class KNotMultipleOfM(KnappError):
    tag = "k_not_multiple_of_m"


class CertificationFailed(KnappError):
    tag = "certification_failed"


class DegenerateLattice(KnappError):
    tag = "degenerate_lattice"


class WindowViolated(KnappError):
    tag = "window_violated"

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = list(offending)


class NotCertified(KnappError):
    tag = "not_certified"


class DeltaOutOfRange(KnappError):
    tag = "delta_out_of_range"


class SeparationNotReached(KnappError):
    tag = "separation_not_reached"


class NotConverged(KnappError):
    tag = "not_converged"


class ResolutionTooCoarse(KnappError):
    tag = "resolution_too_coarse"


class TubeNotEmbedded(KnappError):
    tag = "tube_not_embedded"


class FrequencyCollisionUnresolved(KnappError):
    tag = "frequency_collision_unresolved"


class QOutOfRange(KnappError):
    tag = "q_out_of_range"


class TooFewPoints(KnappError):
    tag = "too_few_points"


class NonPositiveValue(KnappError):
    tag = "non_positive_value"


class ConfigError(KnappError):
    tag = "config"


class IoFailure(KnappError):
    tag = "io_failure"
