"""Exception hierarchy. Every error carries a machine-readable ``code``."""


class TubekitError(Exception):
    code = "domain.error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        return {"code": self.code, "message": str(self), **self.details}


class PreconditionError(TubekitError, ValueError):
    code = "domain.precondition"


class RegimeError(PreconditionError):
    code = "domain.regime"


class EstimationError(TubekitError, RuntimeError):
    code = "estimate.not_converged"


class SchemaError(TubekitError, ValueError):
    code = "io.schema"


class InternalError(TubekitError, RuntimeError):
    code = "internal.bound_exceeded"
