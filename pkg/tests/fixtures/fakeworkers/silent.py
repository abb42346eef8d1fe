"""Worker that accepts frames but never answers (startup-timeout fixture)."""
import sys

for _ in sys.stdin:
    pass
