"""Exception hierarchy.

Every error carries a stable machine-readable ``code`` and an optional
``stage`` naming the pipeline step that failed.
"""


class PlrdError(Exception):
    code = "plrd_error"

    def __init__(self, message, *, stage=None, **details):
        super().__init__(message)
        self.message = message
        self.stage = stage
        self.details = details

    def with_stage(self, stage):
        if self.stage is None:
            self.stage = stage
        return self

    def to_dict(self):
        out = {"error": self.code, "message": self.message}
        if self.stage is not None:
            out["stage"] = self.stage
        if self.details:
            out["details"] = {k: _plain(v) for k, v in self.details.items()}
        return out


def _plain(v):
    if hasattr(v, "item"):
        return v.item()
    return v


class DomainError(PlrdError, ValueError):
    code = "domain_error"


class DegenerateInputError(PlrdError, ValueError):
    code = "degenerate_input"


class NumericalError(PlrdError, ArithmeticError):
    code = "numerical_error"


class BandwidthTooSmallError(PlrdError):
    """Local polynomial fit is singular or ill-conditioned at an evaluation point."""

    code = "bandwidth_too_small"


class SparsityError(PlrdError):
    code = "sparsity"


class RankError(PlrdError):
    code = "rank_deficient"


class DegenerateContrastError(PlrdError):
    """The smoother (nearly) reproduces the treatment indicator, so G'G ~ 0."""

    code = "degenerate_treatment_contrast"


class DatasetUnusableError(PlrdError):
    code = "dataset_unusable"


class LeverageDegenerateError(PlrdError):
    code = "leverage_degenerate"


class DeletionInfeasibleError(PlrdError):
    code = "deletion_infeasible"


class EmptyResultError(PlrdError):
    code = "empty_result"


class ConfigError(PlrdError, ValueError):
    code = "config_error"


class DataFormatError(PlrdError, ValueError):
    code = "data_format"
