"""Graph-traversal lab: students drive a search; the UI replays node visits.

The adjacency map is fixed and published in ui/graph.json so the dashboard
and the students agree on the topology. Neighbor lists are sorted to make
tie-breaking deterministic across implementations.
"""

_ADJACENCY = {
    "A": ("B", "C"),
    "B": ("A", "D", "E"),
    "C": ("A", "F", "G"),
    "D": ("B", "H"),
    "E": ("B", "F", "I"),
    "F": ("C", "E", "J"),
    "G": ("C", "K"),
    "H": ("D", "L"),
    "I": ("E", "J"),
    "J": ("F", "I"),
    "K": ("G", "L"),
    "L": ("H", "K"),
}

_visits = {}


def graph_neighbors(node):
    """Neighbors of a node, sorted lexicographically."""
    if node not in _ADJACENCY:
        raise ValueError(f"unknown node {node!r}")
    return list(_ADJACENCY[node])


def graph_visit(node, __student_id="anonymous"):
    """Record one step of the caller's walk; returns their visit counter.

    The server injects __student_id from the session, so walks are tracked
    per student without trusting anything the client sends.
    """
    if node not in _ADJACENCY:
        raise ValueError(f"unknown node {node!r}")
    count = _visits.get(__student_id, 0) + 1
    _visits[__student_id] = count
    return {"node": node, "order_index": float(count)}
