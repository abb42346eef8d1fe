"""Shared test setup; helper classes live in helpers_leap.py."""
from helpers_leap import *  # noqa: F401,F403 (worker path setup runs on import)
