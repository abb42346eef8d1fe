"""Worker exposing one function that wants the server-injected student id."""
import json
import sys


def respond(frame):
    sys.stdout.write(json.dumps(frame) + "\n")
    sys.stdout.flush()


DESCRIPTORS = [
    {"name": "whoami", "params": [{"name": "__student_id", "kind": "keyword", "default": None}],
     "doc": "Echo the injected student id."},
    {"name": "_secret", "params": [], "doc": "must never be exposed"},
]

for line in sys.stdin:
    if not line.strip():
        continue
    frame = json.loads(line)
    rid = frame["id"]
    op = frame["op"]
    if op == "describe":
        respond({"id": rid, "ok": True, "result": DESCRIPTORS})
    elif op == "invoke" and frame.get("function") == "whoami":
        respond({"id": rid, "ok": True, "result": frame.get("kwargs", {}).get("__student_id")})
    elif op == "shutdown":
        respond({"id": rid, "ok": True, "result": "bye"})
        break
    else:
        respond({"id": rid, "ok": False,
                 "error": {"type": "UnknownFunction", "message": str(frame.get("function"))}})
