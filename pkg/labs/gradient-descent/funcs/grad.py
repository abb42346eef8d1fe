"""Gradient-descent lab: students minimize a hidden 2-D objective.

Only gradient() is exposed; the objective itself never leaves the server.
"""


def _f(x, y):  # not exposed for RPC due to leading "_"
    return (((x - 20) ** 2 + 10 * 20**2) * (5 * (x + 20) ** 2 + (y + 20) ** 2)) / 100


def gradient(x, y):
    """Return (df/dx, df/dy) of the hidden objective at (x, y)."""
    x, y = float(x), float(y)
    gx = (2 * (x - 20) * (5 * (x + 20) ** 2 + (y + 20) ** 2)
          + ((x - 20) ** 2 + 10 * 20**2) * 10 * (x + 20)) / 100
    gy = (((x - 20) ** 2 + 10 * 20**2) * 2 * (y + 20)) / 100
    return (float(gx), float(gy))
