"""HTTP plumbing and the attribute-proxy handle."""
from __future__ import annotations

import json
import os
import re
from typing import Any, Optional

import requests

SERVER_ENV = "LEAP_SERVER"
SESSION_HEADER = "X-LEAP-Session"

_IDENTIFIER = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


class TransportError(Exception):
    """The server could not be reached or answered garbage."""


class RemoteError(Exception):
    """The server (or the remote function) rejected the call."""

    def __init__(self, error_type: str, message: str, detail: Optional[str] = None):
        super().__init__(f"{error_type}: {message}")
        self.type = error_type
        self.message = message
        self.detail = detail


class AuthFailure(RemoteError):
    pass


def init(server: Optional[str] = None, student_id: str = "", password: str = "",
         lab: str = "", token: Optional[str] = None) -> "ClientHandle":
    """Log in, discover the lab's functions, and return a ready handle.

    `server` falls back to $LEAP_SERVER. Pass `token` instead of a password
    to reuse an existing session.
    """
    server = (server or os.environ.get(SERVER_ENV, "")).rstrip("/")
    if not server:
        raise TransportError(f"no server given and {SERVER_ENV} is unset")
    if not lab:
        raise ValueError("init needs the lab id")
    handle = ClientHandle(server, student_id, lab)
    if token is not None:
        handle._token = token
    else:
        handle._login(password)
    handle.discover()
    return handle


class ClientHandle:
    def __init__(self, server: str, student_id: str, lab: str):
        self.server = server
        self.student_id = student_id
        self.lab = lab
        self._token: Optional[str] = None
        self._http = requests.Session()
        self._descriptors: list[dict] = []
        self._functions: set[str] = set()

    # -- wire helpers --------------------------------------------------

    def _request(self, method: str, path: str, body: Optional[dict] = None,
                 params: Optional[dict] = None) -> Any:
        headers = {}
        if self._token:
            headers[SESSION_HEADER] = self._token
        try:
            if method == "GET":
                r = self._http.get(self.server + path, headers=headers,
                                   params=params, timeout=60)
            else:
                headers["Content-Type"] = "application/json"
                r = self._http.post(self.server + path, headers=headers,
                                    data=json.dumps(body or {}), timeout=60)
        except requests.RequestException as e:
            raise TransportError(f"cannot reach {self.server}: {e}") from None
        try:
            payload = r.json()
        except ValueError:
            raise TransportError(f"non-JSON answer (HTTP {r.status_code})") from None
        if r.status_code >= 400:
            code = payload.get("code", f"http_{r.status_code}")
            message = payload.get("message", "")
            if r.status_code == 401:
                raise AuthFailure(code, message)
            raise RemoteError(code, message)
        return payload

    def _login(self, password: str):
        payload = self._request("POST", "/admin/login",
                                {"user_id": self.student_id, "password": password})
        self._token = payload["token"]

    # -- public surface ---------------------------------------------------

    def discover(self) -> list[dict]:
        """Re-fetch the lab's function descriptors and rebuild the proxies."""
        self._descriptors = self._request("GET", "/discover", params={"lab": self.lab})
        self._functions = {d["name"] for d in self._descriptors}
        return self._descriptors

    def call(self, function: str, *args, **kwargs) -> Any:
        """Invoke any exposed function by name (covers dotted built-ins)."""
        payload = self._request("POST", "/call", {
            "lab": self.lab, "function": function,
            "args": list(args), "kwargs": kwargs,
        })
        outcome = payload["outcome"]
        if outcome["status"] == "ok":
            return outcome["result"]
        error = outcome.get("error", {})
        raise RemoteError(error.get("type", outcome["status"]),
                          error.get("message", ""), error.get("detail"))

    def logs(self, **filters) -> list[dict]:
        """Query this lab's call log (subject to the lab's visibility rules)."""
        params = {"lab": self.lab, **{k: v for k, v in filters.items() if v is not None}}
        return self._request("GET", "/logs", params=params)["records"]

    def functions(self) -> list[str]:
        return sorted(self._functions)

    def __getattr__(self, name: str):
        # only called for attributes that do not exist on the instance
        if not name.startswith("_") and name in self._functions:
            def proxy(*args, **kwargs):
                return self.call(name, *args, **kwargs)

            proxy.__name__ = name
            return proxy
        available = ", ".join(sorted(self._functions)) or "none"
        raise AttributeError(
            f"{self.lab!r} exposes no function {name!r} (available: {available})")

    def __dir__(self):
        return sorted(set(super().__dir__())
                      | {n for n in self._functions if _IDENTIFIER.match(n)})
