"""Fixtures are defined in helpers_client.py; re-exported for pytest."""
from helpers_client import *  # noqa: F401,F403
from helpers_client import gradient_server  # noqa: F401
