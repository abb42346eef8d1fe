"""Student client for classroom RPC labs.

    import leap_client

    client = leap_client.init(server="http://host:8000", student_id="s001",
                              password="...", lab="gradient-descent")
    gx, gy = client.gradient(10.0, 5.0)

Each exposed function becomes an attribute of the handle. Every call goes
over the wire with your session attached and is logged server-side; the
client never caches or invents results. Handles are single-owner: use one
per script or thread.
"""
from .client import (
    AuthFailure,
    ClientHandle,
    RemoteError,
    TransportError,
    init,
)

__all__ = ["init", "ClientHandle", "RemoteError", "TransportError", "AuthFailure"]
__version__ = "0.1.0"
