"""Monte-Carlo lab: the class crowd-sources samples to estimate pi.

Lab-global counters accumulate across all students, so the manifest pins
parallelism to 1 and the worker executes submissions strictly serially.
"""

_inside = 0
_total = 0


def mc_submit(x, y):
    """Submit one sample from the unit square; returns the running estimate."""
    global _inside, _total
    x, y = float(x), float(y)
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError("sample must lie in the unit square [0,1]x[0,1]")
    inside = x * x + y * y <= 1.0
    _total += 1
    if inside:
        _inside += 1
    return {"inside": inside, "estimate": 4.0 * _inside / _total}


def mc_stats():
    """Current counters without contributing a sample."""
    estimate = 4.0 * _inside / _total if _total else None
    return {"inside": float(_inside), "total": float(_total), "estimate": estimate}


def _reset():
    global _inside, _total
    _inside = 0
    _total = 0
