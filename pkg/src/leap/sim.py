"""Classroom simulator: scripted personas replayed against a live server.

Each persona authenticates as its own student and issues strictly
sequential calls over plain HTTP (no client SDK involved), so a scenario
resembles a room of students running the same scripts. Personas are
deterministic given their seed.
"""
from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import requests

from .errors import BadRequest, LeapError
from .protocol import canonical_decode

BEHAVIORS = ("gd_descend", "gd_ascend", "random_probe", "quiz_taker", "mc_sampler")


class ServerUnreachable(LeapError):
    code = "server_unreachable"


class AuthFailure(LeapError):
    code = "auth_failure"


class PersonaAborted(LeapError):
    code = "persona_aborted"


def default_password(student_id: str) -> str:
    return f"leap-{student_id}-demo"


@dataclass
class PersonaScript:
    student_id: str
    behavior: str
    lab: str
    params: dict = field(default_factory=dict)
    password: Optional[str] = None

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise BadRequest(f"unknown behavior {self.behavior!r}")
        if not self.student_id or not self.lab:
            raise BadRequest("personas need student_id and lab")
        if self.password is None:
            self.password = default_password(self.student_id)

    @classmethod
    def from_wire(cls, raw: dict) -> "PersonaScript":
        if not isinstance(raw, dict):
            raise BadRequest("persona entries must be objects")
        return cls(
            student_id=raw.get("student_id", ""),
            behavior=raw.get("behavior", ""),
            lab=raw.get("lab", ""),
            params=dict(raw.get("params", {})),
            password=raw.get("password"),
        )


class SimClient:
    """Tiny authenticated HTTP client used by personas and the runner."""

    def __init__(self, server_url: str, timeout_s: float = 30.0):
        self.server_url = server_url.rstrip("/")
        self.timeout_s = timeout_s
        self._session = requests.Session()
        self._headers: dict[str, str] = {}

    def login(self, user_id: str, password: str):
        body = self._post("/admin/login", {"user_id": user_id, "password": password},
                          expect=(200, 401, 429))
        if "token" not in body:
            raise AuthFailure(f"login failed for {user_id!r}: {body.get('message')}")
        self._headers = {"X-LEAP-Session": body["token"]}

    def call(self, lab: str, function: str, args: list, kwargs: Optional[dict] = None) -> dict:
        body = self._post("/call", {"lab": lab, "function": function,
                                    "args": args, "kwargs": kwargs or {}})
        return body["outcome"]

    def get(self, path: str, expect=(200,)) -> dict:
        try:
            r = self._session.get(self.server_url + path, headers=self._headers,
                                  timeout=self.timeout_s)
        except requests.RequestException as e:
            raise ServerUnreachable(str(e)) from None
        return self._parse(r, expect)

    def post(self, path: str, body: dict, expect=(200,)) -> dict:
        return self._post(path, body, expect)

    def _post(self, path: str, body: dict, expect=(200,)) -> dict:
        try:
            r = self._session.post(
                self.server_url + path, data=json.dumps(body),
                headers={**self._headers, "Content-Type": "application/json"},
                timeout=self.timeout_s)
        except requests.RequestException as e:
            raise ServerUnreachable(str(e)) from None
        return self._parse(r, expect)

    @staticmethod
    def _parse(r, expect) -> dict:
        body = canonical_decode(r.content)
        if r.status_code not in expect:
            raise PersonaAborted(
                f"server said {r.status_code}: {body.get('code')} {body.get('message')}")
        return body


# --- persona behaviors ---------------------------------------------------------

def _gd_loop(script: PersonaScript, client: SimClient, ascend: bool) -> dict:
    params = script.params
    x, y = params.get("start_point", [10.0, 5.0])
    lr = params.get("lr", 1e-3)
    iters = int(params.get("iters", 300))
    pause = 1.0 / params["rate_limit"] if params.get("rate_limit") else 0.0
    calls = errors = crashes_in_a_row = 0
    for _ in range(iters):
        outcome = client.call(script.lab, "gradient", [x, y])
        calls += 1
        if outcome["status"] == "worker_crash":
            crashes_in_a_row += 1
            errors += 1
            if crashes_in_a_row >= 3:
                raise PersonaAborted(f"{script.student_id}: 3 consecutive worker crashes")
            continue
        crashes_in_a_row = 0
        if outcome["status"] != "ok":
            errors += 1
            continue
        gx, gy = outcome["result"]
        step_x, step_y = lr * gx, lr * gy
        if ascend:
            x, y = x + step_x, y + step_y
        else:
            x, y = x - step_x, y - step_y
        if pause:
            time.sleep(pause)
    return {"calls_made": calls, "errors": errors, "final_state": {"x": x, "y": y}}


def _random_probe(script: PersonaScript, client: SimClient) -> dict:
    params = script.params
    rng = random.Random(params.get("seed", 0))
    span = float(params.get("span", 50.0))
    iters = int(params.get("iters", 50))
    function = params.get("function", "gradient")
    calls = errors = 0
    last = None
    for _ in range(iters):
        point = [rng.uniform(-span, span), rng.uniform(-span, span)]
        outcome = client.call(script.lab, function, point)
        calls += 1
        if outcome["status"] != "ok":
            errors += 1
        last = point
    return {"calls_made": calls, "errors": errors, "final_state": {"last_point": last}}


def _quiz_taker(script: PersonaScript, client: SimClient) -> dict:
    params = script.params
    rng = random.Random(params.get("seed", 0))
    quiz_id = params.get("quiz_id", "q1")
    definition = client.get(f"/analytics/{script.lab}/quiz/{quiz_id}")["data"]["definition"]
    questions = definition.get("questions", [])
    calls = 0

    def answer_for(question):
        options = question.get("options") or []
        if question["type"] == "single":
            return rng.choice(options)
        if question["type"] == "multi":
            k = rng.randint(1, len(options))
            return sorted(rng.sample(options, k))
        return f"free answer {rng.randint(0, 999)}"

    answered = []
    for q in questions:
        client.call(script.lab, "quiz.submit", [quiz_id, q["question_id"], answer_for(q)])
        calls += 1
        answered.append(q["question_id"])
    if questions:
        # change the first answer so the latest-wins rule is demonstrable
        q = questions[0]
        client.call(script.lab, "quiz.submit", [quiz_id, q["question_id"], answer_for(q)])
        calls += 1
    return {"calls_made": calls, "errors": 0,
            "final_state": {"quiz_id": quiz_id, "questions_answered": answered}}


def _mc_sampler(script: PersonaScript, client: SimClient) -> dict:
    params = script.params
    rng = random.Random(params.get("seed", 0))
    iters = int(params.get("iters", 100))
    calls = errors = 0
    estimate = None
    for _ in range(iters):
        outcome = client.call(script.lab, "mc_submit",
                              [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)])
        calls += 1
        if outcome["status"] != "ok":
            errors += 1
            continue
        estimate = outcome["result"]["estimate"]
    return {"calls_made": calls, "errors": errors, "final_state": {"estimate": estimate}}


_BEHAVIOR_IMPL = {
    "gd_descend": lambda s, c: _gd_loop(s, c, ascend=False),
    "gd_ascend": lambda s, c: _gd_loop(s, c, ascend=True),
    "random_probe": _random_probe,
    "quiz_taker": _quiz_taker,
    "mc_sampler": _mc_sampler,
}


def run_persona(script: PersonaScript, server_url: Optional[str] = None,
                client: Optional[SimClient] = None) -> dict:
    """Run one persona to completion; result carries calls_made/final_state."""
    if client is None:
        if server_url is None:
            raise BadRequest("run_persona needs a server url or a client")
        client = SimClient(server_url)
        client.login(script.student_id, script.password)
    return _BEHAVIOR_IMPL[script.behavior](script, client)


# --- scenarios ------------------------------------------------------------------

def load_scenario(path: str | Path) -> dict:
    raw = canonical_decode(Path(path).read_bytes())
    if not isinstance(raw, dict) or not isinstance(raw.get("personas"), list) \
            or not raw["personas"]:
        raise BadRequest("scenario must contain a non-empty 'personas' list")
    return raw


def run_class(scenario: dict, server_url: str,
              admin_user: Optional[str] = None, admin_password: Optional[str] = None,
              provision: bool = True, start_experiments: bool = True) -> dict:
    """Run every persona concurrently; report per-persona summaries."""
    personas = [PersonaScript.from_wire(p) for p in scenario["personas"]]
    if len({p.student_id for p in personas}) != len(personas):
        raise BadRequest("scenario reuses a student_id")

    if (provision or start_experiments) and admin_user and admin_password:
        _prepare(personas, server_url, admin_user, admin_password,
                 provision, start_experiments)

    summaries: dict[str, dict] = {}
    failures: dict[str, str] = {}
    lock = threading.Lock()

    def runner(script: PersonaScript):
        try:
            summary = run_persona(script, server_url)
            with lock:
                summaries[script.student_id] = summary
        except LeapError as e:
            with lock:
                failures[script.student_id] = e.message

    threads = [threading.Thread(target=runner, args=(p,), name=f"persona-{p.student_id}")
               for p in personas]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return {"personas": summaries, "failures": failures, "ok": not failures}


def _prepare(personas, server_url, admin_user, admin_password,
             provision, start_experiments):
    admin = SimClient(server_url)
    admin.login(admin_user, admin_password)
    if provision:
        for p in personas:
            admin.post("/admin/users", {
                "user_id": p.student_id, "display_name": p.student_id.title(),
                "role": "student", "password": p.password, "enrolled_labs": [p.lab],
            }, expect=(200, 409))  # 409: already provisioned from an earlier run
    if start_experiments:
        labs = admin.get("/labs")
        by_id = {lab["lab_id"]: lab for lab in labs}
        for lab_id in sorted({p.lab for p in personas}):
            lab = by_id.get(lab_id)
            if lab is None:
                raise PersonaAborted(f"scenario uses unknown lab {lab_id!r}")
            experiments = lab["experiments"]
            if not any(e["state"] == "running" for e in experiments):
                exp = experiments[0]["experiment_id"]
                admin.post(f"/labs/{lab_id}/experiments/{exp}/state",
                           {"state": "running"})
