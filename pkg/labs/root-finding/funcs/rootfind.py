"""Root-finding lab: groups race their methods on the same target function."""

_METHODS = ("bisection", "secant", "newton")


def rootfind_f(x):
    """The function whose positive root the class is hunting."""
    x = float(x)
    return x * x - 2.0


def rootfind_report(method, root, iterations):
    """Report a finished run; the leaderboard ranks by squared residual."""
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {_METHODS}")
    root = float(root)
    return {
        "recorded": True,
        "method": method,
        "residual": root * root - 2.0,
        "iterations": float(iterations),
    }
