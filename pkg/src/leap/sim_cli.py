"""`leap-sim`: replay scripted personas against a running server."""
from __future__ import annotations

import argparse
import os
import sys

from .errors import LeapError
from .protocol import canonical_encode
from .sim import load_scenario, run_class


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="leap-sim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario file")
    run_p.add_argument("--scenario", required=True, help="canonical-JSON scenario file")
    run_p.add_argument("--server", default=os.environ.get("LEAP_SERVER"),
                       help="server URL (default: $LEAP_SERVER)")
    run_p.add_argument("--admin-user", default=os.environ.get("LEAP_ADMIN_USER"))
    run_p.add_argument("--admin-password", default=os.environ.get("LEAP_ADMIN_PASSWORD"))
    run_p.add_argument("--no-provision", action="store_true",
                       help="assume persona users already exist")
    run_p.add_argument("--no-start-experiments", action="store_true",
                       help="assume experiments are already running")

    args = parser.parse_args(argv)
    if not args.server:
        print("error: --server or $LEAP_SERVER is required", file=sys.stderr)
        return 2
    try:
        scenario = load_scenario(args.scenario)
        report = run_class(
            scenario, args.server,
            admin_user=args.admin_user, admin_password=args.admin_password,
            provision=not args.no_provision,
            start_experiments=not args.no_start_experiments,
        )
    except LeapError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return 2
    sys.stdout.buffer.write(canonical_encode(report) + b"\n")
    return 0 if report["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
