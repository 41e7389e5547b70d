"""Exception hierarchy.

Every error carries a ``tag`` naming the definition or lemma-level invariant it
guards, so that command-line reports can say which property was violated.
"""

from __future__ import annotations


class GfcalcError(Exception):
    """Base class for all library errors."""

    tag = "error"

    def __init__(self, message: str = "", tag: str | None = None):
        super().__init__(message)
        if tag is not None:
            self.tag = tag

    def __str__(self) -> str:
        return f"[{self.tag}] {super().__str__()}"


class InputError(GfcalcError):
    """Malformed input data (bad shapes, bad JSON, bad expressions)."""

    tag = "input"


class InvariantViolation(GfcalcError):
    """A checked mathematical invariant does not hold."""

    tag = "invariant"


# quadform
class DegenerateForm(InvariantViolation):
    tag = "def:quadform.nondegenerate"


# symplin
class NotTransverse(InvariantViolation):
    tag = "def:lagrangian.transverse"


class NotInFiber(InvariantViolation):
    tag = "lemma:fiber.retraction"


class NotGraphical(InvariantViolation):
    tag = "lemma:lifting.graphical"


class StepTooLarge(InvariantViolation):
    tag = "lemma:lifting.near-identity"


class SingularB(InvariantViolation):
    tag = "def:p-action.invertible"


class RankDeficient(InvariantViolation):
    tag = "step:compatibility.injective"


# homalg
class NotAComplex(InvariantViolation):
    tag = "def:chain-complex.d2"


class ThresholdTooClose(InvariantViolation):
    tag = "def:sublevel.regular-value"


class BoxNotCertified(InvariantViolation):
    tag = "def:sublevel.box"


# genfun
class DegenerateCritical(InvariantViolation):
    tag = "def:generating-function.transverse"


class TTooLarge(InvariantViolation):
    tag = "lemma:doubling.compact-generation"


class OddDimension(InputError):
    tag = "def:delta-oplus.even"


class ZeroNotRegular(InvariantViolation):
    tag = "prop:tube-recognition.regular"


class CriticalValueOutOfBand(InvariantViolation):
    tag = "lemma:difference-homology.band"


class BoundViolation(InvariantViolation):
    tag = "lemma:bound.bound"


# qbundle
class NotARefinement(InvariantViolation):
    tag = "def:refinement.monotone"


class OrderObstruction(InvariantViolation):
    tag = "lemma:well-order.disjoint"


class TooCoarse(InvariantViolation):
    tag = "lemma:total-order.stars-refine"


class ExtensionObstruction(InvariantViolation):
    tag = "lemma:reorder.extension"


class OddGap(InvariantViolation):
    tag = "lemma:untwist.even"


class HomotopyNotCocycle(InvariantViolation):
    tag = "lemma:untwist.homotopy-cocycle"


class GluingMismatch(InvariantViolation):
    tag = "def:twisted-gf.gluing"


# simplicial
class NotDirected(InvariantViolation):
    tag = "def:directed-cover.total"


class NotAnAction(InvariantViolation):
    tag = "def:bar.action"


# cli
class FileNotFound(InputError):
    tag = "cli:file"


class SchemaError(InputError):
    tag = "cli:schema"


class StepFailure(InvariantViolation):
    tag = "cli:step"
