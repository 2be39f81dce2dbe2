"""Exception hierarchy shared across the package."""


class IdaError(Exception):
    """Base class for all construction, certification and simulation errors."""


class ModelError(IdaError):
    """A system model violates one of its structural invariants."""


class SingularMassError(IdaError):
    """An inertia matrix is (numerically) singular or not positive definite."""


class MissingIndexError(IdaError):
    """An operation needs the unactuated index k but the model only has a general annihilator."""


class InconsistentSystemError(IdaError):
    """The algebraic matching system is rank deficient and has no exact solution."""


class GammaZeroError(IdaError):
    """gamma^(k) vanishes on the requested ODE domain."""


class PositivityError(IdaError):
    """det M_d^{-1} does not keep its sign on the solution domain."""


class DomainError(IdaError):
    """A requested interval crosses a singularity of the construction."""


class SingularInputError(IdaError):
    """G^T G is singular or badly conditioned."""


class DivergenceError(IdaError):
    """Integration produced a non-finite or runaway state.

    The partial trajectory up to (and excluding) the bad step is kept on
    ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class StageError(IdaError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class ScenarioError(IdaError):
    """A scenario file is malformed or references unknown presets."""


class CertificationError(IdaError):
    """A candidate failed a residual certificate it was required to pass."""
