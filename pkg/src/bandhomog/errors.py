"""Exception and warning types shared across the package."""


class ConfigError(ValueError):
    """Invalid run configuration or coefficient specification."""


class ResolutionError(RuntimeError):
    """Discretization too coarse for the requested quantity (e.g. ground
    state changes sign on the sampling grid)."""


class CertificationError(RuntimeError):
    """The eigenvalue separation condition failed inside a certified
    neighborhood, or no neighborhood could be certified at all."""


class EigensolverError(RuntimeError):
    """Dense eigensolver failed to converge or returned bad residuals."""


class RefinementError(RuntimeError):
    """Grid-refinement consistency check failed (quadrature under-resolved)."""


class InternalConsistencyError(RuntimeError):
    """An algebraic identity that must hold to roundoff was violated,
    indicating an assembly bug rather than bad input."""


class PipelineError(RuntimeError):
    """A convergence-pipeline stage failed; carries the stage identity."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage


class GridEstimateWarning(UserWarning):
    """Sup-norms are estimated by sampling-grid maxima and may slightly
    underestimate the true essential supremum."""


class CertificationWarning(UserWarning):
    """A computation left the certified neighborhood; results are still
    produced but the error bound is not guaranteed."""
