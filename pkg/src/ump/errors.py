"""ApiError: the one exception handlers raise; it carries a ProblemDetail."""

from __future__ import annotations

from .protocol import ProblemDetail

_TITLES = {
    400: "Bad Request",
    401: "Unauthorized",
    403: "Forbidden",
    404: "Not Found",
    409: "Conflict",
    410: "Gone",
    422: "Unprocessable Entity",
    429: "Too Many Requests",
    500: "Internal Server Error",
    502: "Bad Gateway",
    504: "Gateway Timeout",
}


class ApiError(Exception):
    def __init__(self, status: int, type_: str, detail: str, violations=None):
        super().__init__(detail)
        self.problem = ProblemDetail(
            type=type_,
            title=_TITLES.get(status, "Error"),
            status=status,
            detail=detail,
            violations=tuple(str(v) for v in violations) if violations else None,
        )

    @property
    def status(self) -> int:
        return self.problem.status


def bad_request(detail: str) -> ApiError:
    return ApiError(400, "bad-request", detail)


def unauthorized(detail: str = "invalid bearer token") -> ApiError:
    return ApiError(401, "unauthorized", detail)


def forbidden(detail: str) -> ApiError:
    return ApiError(403, "forbidden", detail)


def not_found(detail: str) -> ApiError:
    return ApiError(404, "not-found", detail)


def conflict(detail: str) -> ApiError:
    return ApiError(409, "conflict", detail)


def gone(detail: str) -> ApiError:
    return ApiError(410, "result-expired", detail)


def validation_failed(violations) -> ApiError:
    return ApiError(422, "validation-failed", "execute request failed validation", violations)


def quota_exceeded(detail: str) -> ApiError:
    return ApiError(429, "quota-exceeded", detail)


def internal(detail: str) -> ApiError:
    return ApiError(500, "internal-error", detail)


def upstream_unreachable(detail: str) -> ApiError:
    return ApiError(502, "upstream-unreachable", detail)


def upstream_timeout(detail: str) -> ApiError:
    return ApiError(504, "upstream-timeout", detail)
