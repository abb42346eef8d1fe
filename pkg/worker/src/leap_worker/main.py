"""Entry point: `leap-worker --funcs <dir>` (or `python -m leap_worker`)."""
from __future__ import annotations

import argparse
import sys

from .serve import Worker


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="leap-worker", description=__doc__)
    parser.add_argument("--funcs", required=True, help="directory of function files")
    args = parser.parse_args(argv)
    return Worker(args.funcs).serve()


if __name__ == "__main__":
    sys.exit(main())
