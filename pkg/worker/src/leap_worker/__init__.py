"""Reference lab runtime: exposes a funcs/ directory over framed stdio."""

__version__ = "0.1.0"
