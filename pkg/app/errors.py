"""Domain exceptions shared by the services, the CLI and the HTTP layer."""

from typing import Any, Dict, Optional


class ThadmmError(Exception):
    """Base error. ``status_code`` is what the HTTP layer answers with."""

    status_code = 400

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        body: Dict[str, Any] = {"status_code": self.status_code, "detail": self.detail}
        if self.context:
            body["context"] = {k: _jsonable(v) for k, v in self.context.items()}
        return body


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


class InvalidArgumentError(ThadmmError):
    pass


class DomainError(ThadmmError):
    pass


class ShapeMismatchError(ThadmmError):
    pass


class FeasibilityError(ThadmmError):
    pass


class ZeroSignalError(ThadmmError):
    pass


class BinCollisionError(ThadmmError):
    """Two targets landed on one grid bin; the scene has to be redrawn."""


class SingularityError(ThadmmError):
    status_code = 422

    def __init__(self, detail: str, order: Optional[int] = None, **context: Any):
        super().__init__(detail, order=order, **context)
        self.order = order


class ConditioningError(ThadmmError):
    status_code = 422

    def __init__(self, detail: str, condition: float, **context: Any):
        super().__init__(detail, condition=condition, **context)
        self.condition = condition


class NumericalError(ThadmmError):
    status_code = 422

    def __init__(self, detail: str, residual: Optional[float] = None, **context: Any):
        super().__init__(detail, residual=residual, **context)
        self.residual = residual


class NonFiniteError(ThadmmError):
    status_code = 422


class DatasetFormatError(ThadmmError):
    pass


class CheckpointFormatError(ThadmmError):
    pass


class CheckpointMismatchError(ThadmmError):
    status_code = 409


class InvariantViolation(ThadmmError):
    status_code = 500


class ModelUnavailableError(ThadmmError):
    status_code = 503
