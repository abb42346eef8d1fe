"""The HTTP surface: five endpoint families plus /ui and /analytics.

Every route except POST /admin/login, GET /ui/_app/* and GET / demands a
live session header before any other module is touched. All bodies are
canonical JSON; errors carry {code, message} with stable machine codes.
"""
from __future__ import annotations

import logging
import os
import time
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import RedirectResponse
from starlette.concurrency import run_in_threadpool

from . import analytics
from .auth import AuthService, UserStore
from .bridge import WorkerSupervisor
from .config import ServerConfig
from .errors import (
    BadRequest,
    ExperimentNotRunning,
    Forbidden,
    LeapError,
    NotFound,
    UnknownFunction,
    UnknownLab,
)
from .labs import LabRegistry, read_asset
from .logstore import LogFilter, LogStore
from .protocol import (
    CallOutcome,
    FunctionDescriptor,
    ParamDescriptor,
    canonical_decode,
    canonical_encode,
    iso_to_ms,
)

logger = logging.getLogger(__name__)

SESSION_HEADER = "x-leap-session"
ADMIN_USER_ENV = "LEAP_ADMIN_USER"
ADMIN_PASSWORD_ENV = "LEAP_ADMIN_PASSWORD"

# paths reachable without a session: login, the SPA shell, and the root redirect
_OPEN_PATHS = {("POST", "/admin/login"), ("GET", "/")}
_OPEN_PREFIXES = ("/ui/_app/",)

STATUS_BY_CODE = {
    "bad_request": 400, "invalid_value": 400, "non_finite_number": 400,
    "depth_exceeded": 400, "parse_error": 400, "invalid_filter": 400,
    "invalid_width": 400, "weak_password": 400, "expression_error": 400,
    "metric_unavailable": 400, "private_name": 400,
    "unknown_token": 401, "session_expired": 401, "invalid_credentials": 401,
    "forbidden": 403, "path_traversal_rejected": 403,
    "unknown_lab": 404, "unknown_experiment": 404, "unknown_function": 404,
    "not_found": 404, "unknown_quiz": 404,
    "illegal_transition": 409, "experiment_not_running": 409,
    "duplicate_user": 409, "duplicate_lab_id": 409, "no_experiment_start": 409,
    "unsupported_media_type": 415,
    "rate_limited": 429, "queue_full": 429,
    "storage_failure": 500, "internal_error": 500,
    "manifest_parse_error": 500, "missing_funcs_dir": 500, "quiz_parse_error": 500,
    "spawn_failure": 503, "startup_timeout": 503, "describe_failure": 503,
    "worker_crash": 503, "worker_unavailable": 503,
}

QUIZ_SUBMIT_DOC = "Submit one quiz answer: quiz.submit(quiz_id, question_id, answer)."


def _json(data, status_code: int = 200) -> Response:
    return Response(content=canonical_encode(data), status_code=status_code,
                    media_type="application/json")


def _error(exc: LeapError) -> Response:
    status = STATUS_BY_CODE.get(exc.code, 500)
    return _json({"code": exc.code, "message": exc.message}, status_code=status)


def _quiz_submit_descriptor(lab_id: str) -> FunctionDescriptor:
    return FunctionDescriptor(
        name="quiz.submit",
        params=(ParamDescriptor("quiz_id"), ParamDescriptor("question_id"),
                ParamDescriptor("answer")),
        doc=QUIZ_SUBMIT_DOC,
        lab_id=lab_id,
    )


class LeapServer:
    """Wires auth, registry, bridge, store, and analytics together."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.store = LogStore(config.storage_path)
        self.users = UserStore(config.storage_path)
        self.registry = LabRegistry(state_log=self._log_state_change)
        self.auth = AuthService(
            self.users,
            logs_visibility=self.registry.logs_visibility,
            idle_timeout_s=config.session_idle_s,
            absolute_timeout_s=config.session_absolute_s,
        )
        self.supervisor = WorkerSupervisor(
            runtimes=config.runtimes,
            call_timeout_ms=config.call_timeout_ms,
            startup_timeout_ms=config.worker_startup_ms,
            backlog_limit=config.backlog_limit,
        )
        self.registry.load_dir(config.labs_dir)
        self._restore_experiment_states()
        self._bootstrap_admin()

    def _bootstrap_admin(self):
        if self.users.count() > 0:
            return
        user = os.environ.get(ADMIN_USER_ENV)
        password = os.environ.get(ADMIN_PASSWORD_ENV)
        if user and password:
            self.auth.provision_user(user, user, "admin", password)
            logger.info("bootstrapped admin user %r from environment", user)
        else:
            logger.warning(
                "no users exist and %s/%s are unset; use `leap provision` "
                "to create the first admin", ADMIN_USER_ENV, ADMIN_PASSWORD_ENV)

    def _restore_experiment_states(self):
        """Experiments survive a restart by replaying their logged transitions."""
        for lab_id in self.registry.lab_ids():
            after_seq = 0
            while True:
                records, after_seq = self.store.query(LogFilter(
                    lab_id=lab_id, function=analytics.EXPERIMENT_STATE_FUNCTION,
                    after_seq=after_seq, limit=1000))
                if not records:
                    break
                for r in records:
                    if len(r.args) >= 2 and isinstance(r.args[0], str) \
                            and isinstance(r.args[1], str):
                        self.registry.restore_experiment_state(lab_id, r.args[0], r.args[1])

    def _log_state_change(self, lab_id: str, experiment_id: str, state: str, caller: str):
        self.store.append(
            lab_id, caller or "system", analytics.EXPERIMENT_STATE_FUNCTION,
            [experiment_id, state], {}, CallOutcome.ok(state), experiment_id=experiment_id,
        )

    def close(self):
        self.supervisor.shutdown_all()
        self.store.close()
        self.users.close()

    # ---- blocking endpoint bodies (run in the threadpool) ----------------

    def discover(self, token: str, lab_id: str) -> list[dict]:
        self.auth.authorize(token, lab_id, "call")
        lab = self.registry.get(lab_id)
        handle = self.supervisor.handle_for(lab.manifest, lab.layout)
        descriptors = handle.describe() + [_quiz_submit_descriptor(lab_id)]
        return [d.to_wire() for d in sorted(descriptors, key=lambda d: d.name)]

    def call(self, token: str, body: dict) -> dict:
        lab_id = body.get("lab")
        function = body.get("function")
        if not isinstance(lab_id, str) or not isinstance(function, str):
            raise BadRequest("call body needs string fields 'lab' and 'function'")
        args = body.get("args", [])
        kwargs = body.get("kwargs", {})
        if not isinstance(args, list) or not isinstance(kwargs, dict):
            raise BadRequest("'args' must be a list and 'kwargs' a map")
        # reserved namespace: identity is injected server-side, never client-sent
        kwargs = {k: v for k, v in kwargs.items() if not k.startswith("__")}

        principal = self.auth.authorize(token, lab_id, "call")
        lab = self.registry.get(lab_id)
        experiment_id = self.registry.running_experiment(lab_id)

        if function == "quiz.submit":
            outcome = self._quiz_submit(args, kwargs)
        else:
            handle = self.supervisor.handle_for(lab.manifest, lab.layout)
            if not handle.has_function(function):
                raise UnknownFunction(
                    f"lab {lab_id!r} exposes no function {function!r}")
            if experiment_id is None:
                raise ExperimentNotRunning(f"no experiment of lab {lab_id!r} is running")
            outcome = handle.invoke(function, args, kwargs,
                                    student_id=principal.user_id)
        record = self.store.append(
            lab_id, principal.user_id, function, args, kwargs, outcome,
            experiment_id=experiment_id,
        )
        return {"seq": record.seq, "outcome": record.outcome.to_wire()}

    @staticmethod
    def _quiz_submit(args: list, kwargs: dict) -> CallOutcome:
        quiz_id = kwargs.get("quiz_id", args[0] if len(args) > 0 else None)
        question_id = kwargs.get("question_id", args[1] if len(args) > 1 else None)
        has_answer = "answer" in kwargs or len(args) > 2
        if not isinstance(quiz_id, str) or not quiz_id \
                or not isinstance(question_id, str) or not question_id or not has_answer:
            raise BadRequest("quiz.submit needs (quiz_id, question_id, answer)")
        return CallOutcome.ok({"accepted": True}, duration_ms=0.0)

    def logs(self, token: str, params: dict) -> dict:
        lab_id = params.get("lab")
        if not lab_id:
            raise BadRequest("query parameter 'lab' is required")
        try:
            principal = self.auth.authorize(token, lab_id, "read_logs")
            student_filter = params.get("student", params.get("student_id"))
        except Forbidden:
            principal = self.auth.authorize(token, lab_id, "read_own_logs")
            student_filter = principal.user_id  # own records only
        limit = _parse_int(params.get("limit"), "limit")
        flt = LogFilter(
            lab_id=lab_id,
            student_id=student_filter,
            function=params.get("function"),
            status=params.get("status"),
            since_ms=_parse_instant(params.get("since"), "since"),
            until_ms=_parse_instant(params.get("until"), "until"),
            after_seq=_parse_int(params.get("after_seq"), "after_seq"),
            limit=100 if limit is None else limit,
        )
        records, cursor = self.store.query(flt)
        return {"records": [r.to_wire() for r in records], "next_after_seq": cursor}

    def list_labs(self, token: str) -> list[dict]:
        principal = self.auth.authenticate(token)
        labs = self.registry.list_labs()
        if principal.role == "admin":
            return labs
        return [lab for lab in labs if lab["lab_id"] in principal.enrolled_labs]

    def set_experiment_state(self, token: str, lab_id: str, experiment_id: str,
                             body: dict) -> dict:
        target = body.get("state")
        if not isinstance(target, str):
            raise BadRequest("body needs a 'state' field")
        principal = self.auth.authorize(token, lab_id, "admin_lab")
        exp = self.registry.set_experiment_state(lab_id, experiment_id, target,
                                                 caller=principal.user_id)
        return {"experiment_id": exp.experiment_id, "title": exp.title, "state": exp.state}

    def admin_reload(self, token: str) -> dict:
        self.auth.authorize(token, "*", "admin_global")
        report = self.registry.reload_dir(self.config.labs_dir)
        for lab_id in report["removed"]:
            self.supervisor.drop(lab_id)
        return report

    def admin_users(self, token: str, body: dict) -> dict:
        self.auth.authorize(token, "*", "admin_global")
        for field_name in ("user_id", "password", "role"):
            if not isinstance(body.get(field_name), str):
                raise BadRequest(f"user body needs string field {field_name!r}")
        enrolled = body.get("enrolled_labs", [])
        if not isinstance(enrolled, list) or not all(isinstance(x, str) for x in enrolled):
            raise BadRequest("'enrolled_labs' must be a list of lab ids")
        principal = self.auth.provision_user(
            body["user_id"], body.get("display_name", body["user_id"]),
            body["role"], body["password"], enrolled,
        )
        return {"user_id": principal.user_id, "role": principal.role,
                "enrolled_labs": sorted(principal.enrolled_labs)}

    def admin_login(self, body: dict) -> dict:
        user_id = body.get("user_id")
        password = body.get("password")
        if not isinstance(user_id, str) or not isinstance(password, str):
            raise BadRequest("login body needs 'user_id' and 'password'")
        token = self.auth.login(user_id, password)
        principal = self.auth.authenticate(token)
        return {"token": token, "user_id": principal.user_id, "role": principal.role,
                "display_name": principal.display_name}

    def lab_asset(self, token: str, lab_id: str, path: str) -> tuple[bytes, str]:
        self.auth.authorize(token, lab_id, "call")
        return self.registry.resolve_asset(lab_id, path)

    # ---- analytics -------------------------------------------------------

    def analytics_response(self, token: str, lab_id: str, op: str, params: dict) -> dict:
        self.auth.authorize(token, lab_id, "read_logs")
        if not self.registry.has_lab(lab_id) and self.store.count(lab_id) == 0:
            raise UnknownLab(lab_id)
        records = self.store.all_records(lab_id)
        manifest = self.registry.manifest(lab_id) if self.registry.has_lab(lab_id) else None

        if op == "trajectories":
            function = params.get("function")
            if not function:
                if manifest is not None and manifest.objective is not None:
                    function = manifest.objective.function
                else:
                    raise BadRequest("query parameter 'function' is required")
            gap = _parse_float(params.get("gap"), "gap") or analytics.DEFAULT_GAP_THRESHOLD_S
            data = analytics.trajectories(records, function, gap_threshold_s=gap)
        elif op == "participation":
            width = _parse_float(params.get("width"), "width") or 60.0
            data = analytics.participation(records, width)
        elif op == "leaderboard":
            metric = params.get("metric", "call_count")
            data = analytics.leaderboard(
                records, metric,
                objective=manifest.objective if manifest else None,
                completion=manifest.completion if manifest else None,
                groups=manifest.groups if manifest else (),
            )
        elif op == "load":
            window = _parse_float(params.get("window"), "window") or 60.0
            data = analytics.load_metrics(records, window,
                                          now_ms=int(time.time_ns() // 1_000_000))
        else:
            raise NotFound(f"no analytics op {op!r}")
        as_of = records[-1].seq if records else 0
        return {"as_of_seq": as_of, "data": data}

    def quiz_analytics(self, token: str, lab_id: str, quiz_id: str) -> dict:
        principal = self.auth.authorize(token, lab_id, "read_logs")
        quizzes = {q.quiz_id: q for q in self.registry.list_quizzes(lab_id)}
        records = self.store.all_records(lab_id)
        stats = analytics.quiz_stats(records, quiz_id, known_quizzes=quizzes)
        include_correct = principal.role in ("instructor", "admin")
        definition = quizzes[quiz_id].to_wire(include_correct=include_correct)
        as_of = records[-1].seq if records else 0
        return {"as_of_seq": as_of, "data": {"definition": definition, "stats": stats}}


def _parse_int(value, name: str) -> Optional[int]:
    """Accept both 7 and 7.0 — canonical JSON renders integers as floats."""
    if value is None:
        return None
    try:
        f = float(value)
        i = int(f)
        if i != f:
            raise ValueError
        return i
    except (TypeError, ValueError, OverflowError):
        raise BadRequest(f"query parameter {name!r} must be an integer") from None


def _parse_float(value, name: str) -> Optional[float]:
    if value is None:
        return None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise BadRequest(f"query parameter {name!r} must be a number") from None


def _parse_instant(value, name: str) -> Optional[int]:
    """Accept ISO-8601 (the log format) or raw epoch milliseconds."""
    if value is None:
        return None
    try:
        return iso_to_ms(value)
    except ValueError:
        pass
    try:
        return int(value)
    except (TypeError, ValueError):
        raise BadRequest(
            f"query parameter {name!r} must be ISO-8601 UTC or epoch ms") from None


async def _read_json_body(request: Request) -> dict:
    content_type = request.headers.get("content-type", "")
    if not content_type.lower().startswith("application/json"):
        err = BadRequest("requests must be application/json")
        err.code = "unsupported_media_type"
        raise err
    body = canonical_decode(await request.body())
    if not isinstance(body, dict):
        raise BadRequest("request body must be a JSON object")
    return body


def create_app(config: ServerConfig) -> FastAPI:
    server = LeapServer(config)

    @asynccontextmanager
    async def lifespan(_app):
        yield
        server.close()

    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None, lifespan=lifespan)
    app.state.leap = server

    @app.exception_handler(LeapError)
    async def leap_error_handler(request: Request, exc: LeapError):
        return _error(exc)

    @app.middleware("http")
    async def session_gate(request: Request, call_next):
        method, path = request.method, request.url.path
        open_path = (method, path) in _OPEN_PATHS or (
            method == "GET" and path.startswith(_OPEN_PREFIXES))
        if not open_path:
            token = request.headers.get(SESSION_HEADER)
            try:
                await run_in_threadpool(server.auth.authenticate, token)
            except LeapError as e:
                return _error(e)
            request.state.token = token
        return await call_next(request)

    def token_of(request: Request) -> str:
        return request.headers.get(SESSION_HEADER)

    @app.get("/")
    async def root():
        return RedirectResponse("/ui/_app/index.html")

    @app.get("/discover")
    async def discover(request: Request, lab: str = ""):
        if not lab:
            raise BadRequest("query parameter 'lab' is required")
        data = await run_in_threadpool(server.discover, token_of(request), lab)
        return _json(data)

    @app.post("/call")
    async def call(request: Request):
        body = await _read_json_body(request)
        data = await run_in_threadpool(server.call, token_of(request), body)
        return _json(data)

    @app.get("/logs")
    async def logs(request: Request):
        params = dict(request.query_params)
        data = await run_in_threadpool(server.logs, token_of(request), params)
        return _json(data)

    @app.get("/labs")
    async def labs(request: Request):
        data = await run_in_threadpool(server.list_labs, token_of(request))
        return _json(data)

    @app.post("/labs/{lab_id}/experiments/{experiment_id}/state")
    async def experiment_state(request: Request, lab_id: str, experiment_id: str):
        body = await _read_json_body(request)
        data = await run_in_threadpool(
            server.set_experiment_state, token_of(request), lab_id, experiment_id, body)
        return _json(data)

    @app.post("/admin/login")
    async def admin_login(request: Request):
        body = await _read_json_body(request)
        data = await run_in_threadpool(server.admin_login, body)
        return _json(data)

    @app.post("/admin/reload")
    async def admin_reload(request: Request):
        data = await run_in_threadpool(server.admin_reload, token_of(request))
        return _json(data)

    @app.post("/admin/users")
    async def admin_users(request: Request):
        body = await _read_json_body(request)
        data = await run_in_threadpool(server.admin_users, token_of(request), body)
        return _json(data)

    @app.get("/analytics/{lab_id}/quiz/{quiz_id}")
    async def analytics_quiz(request: Request, lab_id: str, quiz_id: str):
        data = await run_in_threadpool(
            server.quiz_analytics, token_of(request), lab_id, quiz_id)
        return _json(data)

    @app.get("/analytics/{lab_id}/{op}")
    async def analytics_op(request: Request, lab_id: str, op: str):
        params = dict(request.query_params)
        data = await run_in_threadpool(
            server.analytics_response, token_of(request), lab_id, op, params)
        return _json(data)

    # /ui/_app/* must be registered before the per-lab asset route
    @app.get("/ui/_app/{path:path}")
    async def app_asset(path: str):
        if server.config.app_dir is None:
            raise NotFound("no web app bundle is configured (app_dir)")
        body, media_type = await run_in_threadpool(
            read_asset, server.config.app_dir, path or "index.html")
        return Response(content=body, media_type=media_type)

    @app.get("/ui/{lab_id}/{path:path}")
    async def lab_asset(request: Request, lab_id: str, path: str):
        body, media_type = await run_in_threadpool(
            server.lab_asset, token_of(request), lab_id, path or "index.html")
        return Response(content=body, media_type=media_type)

    return app
