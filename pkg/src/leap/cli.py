"""Command-line entry point: serve the API, dump logs, provision users."""
from __future__ import annotations

import argparse
import getpass
import sys

from .auth import AuthService, UserStore
from .config import load_config
from .errors import LeapError
from .logstore import LogStore


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="leap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="run the API server")
    serve_p.add_argument("--config", required=True, help="path to leap.toml")
    serve_p.add_argument("--log-level", default="info")

    dump_p = sub.add_parser("dump", help="emit one lab's log as JSON lines")
    dump_p.add_argument("--config", required=True)
    dump_p.add_argument("--lab", required=True)

    prov_p = sub.add_parser("provision", help="create a user directly in storage")
    prov_p.add_argument("--config", required=True)
    prov_p.add_argument("--user-id", required=True)
    prov_p.add_argument("--display-name", default=None)
    prov_p.add_argument("--role", choices=("student", "instructor", "admin"),
                        default="student")
    prov_p.add_argument("--password", default=None,
                        help="prompted for interactively when omitted")
    prov_p.add_argument("--labs", default="",
                        help="comma-separated lab ids to enroll in")

    args = parser.parse_args(argv)
    try:
        if args.command == "serve":
            return _serve(args)
        if args.command == "dump":
            return _dump(args)
        return _provision(args)
    except LeapError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return 1


def _serve(args) -> int:
    import uvicorn

    from .server import create_app

    config = load_config(args.config)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level=args.log_level)
    return 0


def _dump(args) -> int:
    config = load_config(args.config)
    store = LogStore(config.storage_path)
    try:
        for line in store.dump(args.lab):
            sys.stdout.buffer.write(line)
        sys.stdout.buffer.flush()
    finally:
        store.close()
    return 0


def _provision(args) -> int:
    config = load_config(args.config)
    password = args.password or getpass.getpass(f"password for {args.user_id}: ")
    users = UserStore(config.storage_path)
    try:
        auth = AuthService(users)
        labs = [lab for lab in args.labs.split(",") if lab]
        principal = auth.provision_user(
            args.user_id, args.display_name or args.user_id, args.role, password, labs)
    finally:
        users.close()
    print(f"created {principal.role} {principal.user_id!r}"
          + (f" enrolled in {sorted(principal.enrolled_labs)}" if labs else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
