"""Shared exception hierarchy.

Every error that can cross the HTTP boundary carries a stable machine
``code``; the server maps codes to status lines in one table so clients
never see internal detail.
"""


class LeapError(Exception):
    """Base class for all framework errors."""

    code = "internal_error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


# --- protocol
class InvalidValue(LeapError):
    code = "invalid_value"


class NonFiniteNumber(InvalidValue):
    code = "non_finite_number"


class DepthExceeded(InvalidValue):
    code = "depth_exceeded"


class ParseError(LeapError):
    code = "parse_error"

    def __init__(self, message: str, byte_offset: int = 0):
        super().__init__(f"{message} (byte {byte_offset})")
        self.byte_offset = byte_offset


class PrivateName(LeapError):
    code = "private_name"


# --- lab registry
class MissingFuncsDir(LeapError):
    code = "missing_funcs_dir"


class ManifestParseError(LeapError):
    code = "manifest_parse_error"


class DuplicateLabId(LeapError):
    code = "duplicate_lab_id"


class UnknownLab(LeapError):
    code = "unknown_lab"


class UnknownExperiment(LeapError):
    code = "unknown_experiment"


class IllegalTransition(LeapError):
    code = "illegal_transition"


class NotFound(LeapError):
    code = "not_found"


class PathTraversalRejected(LeapError):
    code = "path_traversal_rejected"


class QuizParseError(LeapError):
    code = "quiz_parse_error"


# --- worker bridge
class SpawnFailure(LeapError):
    code = "spawn_failure"


class StartupTimeout(LeapError):
    code = "startup_timeout"


class DescribeFailure(LeapError):
    code = "describe_failure"


class WorkerCrash(LeapError):
    code = "worker_crash"


class UnknownFunction(LeapError):
    code = "unknown_function"


class QueueFull(LeapError):
    code = "queue_full"


class WorkerUnavailable(LeapError):
    code = "worker_unavailable"


# --- log store
class StorageFailure(LeapError):
    code = "storage_failure"


class InvalidFilter(LeapError):
    code = "invalid_filter"


# --- auth
class DuplicateUser(LeapError):
    code = "duplicate_user"


class WeakPassword(LeapError):
    code = "weak_password"


class InvalidCredentials(LeapError):
    code = "invalid_credentials"


class RateLimited(LeapError):
    code = "rate_limited"


class SessionExpired(LeapError):
    code = "session_expired"


class UnknownToken(LeapError):
    code = "unknown_token"


class Forbidden(LeapError):
    code = "forbidden"


# --- analytics
class InvalidWidth(LeapError):
    code = "invalid_width"


class MetricUnavailable(LeapError):
    code = "metric_unavailable"


class UnknownQuiz(LeapError):
    code = "unknown_quiz"


class NoExperimentStart(LeapError):
    code = "no_experiment_start"


class ExpressionError(LeapError):
    code = "expression_error"


# --- api
class ExperimentNotRunning(LeapError):
    code = "experiment_not_running"


class BadRequest(LeapError):
    code = "bad_request"
