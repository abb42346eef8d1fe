"""Load instructor function files and build the exposed-function table.

Every *.py in the funcs directory is imported in sorted filename order.
A top-level callable is exposed when its name does not start with "_",
it is not a class or module, and it was actually defined in that file
(names merely imported into the module stay private). The same exposed
name in two files is an authoring error.
"""
from __future__ import annotations

import importlib.util
import inspect
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path


class LoadError(Exception):
    def __init__(self, kind: str, message: str, detail: str = ""):
        super().__init__(message)
        self.kind = kind
        self.message = message
        self.detail = detail


@dataclass
class ExposedFunction:
    name: str
    func: object
    params: list[dict] = field(default_factory=list)
    doc: str = ""
    source_file: str = ""

    def descriptor(self) -> dict:
        return {"name": self.name, "params": self.params, "doc": self.doc}


_module_counter = itertools.count()


def _jsonable(value) -> bool:
    try:
        json.dumps(value, allow_nan=False)
        return True
    except (TypeError, ValueError):
        return False


def _params_of(func) -> list[dict]:
    try:
        signature = inspect.signature(func)
    except (TypeError, ValueError):
        return []
    params = []
    for p in signature.parameters.values():
        if p.kind in (p.VAR_POSITIONAL, p.VAR_KEYWORD):
            continue
        kind = "keyword" if p.kind == p.KEYWORD_ONLY else "positional"
        entry: dict = {"name": p.name, "kind": kind}
        if p.default is not p.empty and _jsonable(p.default):
            entry["default"] = p.default
        if p.annotation is not p.empty:
            entry["annotation"] = (p.annotation.__name__
                                   if isinstance(p.annotation, type) else str(p.annotation))
        params.append(entry)
    return params


def load_funcs(funcs_dir: str | Path) -> dict[str, ExposedFunction]:
    """Import every function file; returns the table of exposed callables.

    Raises LoadError("ImportError", ...) when any file fails to import and
    LoadError("NameCollision", ...) when two files expose the same name.
    """
    funcs_dir = Path(funcs_dir)
    if not funcs_dir.is_dir():
        raise LoadError("MissingFuncsDir", f"{funcs_dir} is not a directory")
    table: dict[str, ExposedFunction] = {}
    for path in sorted(funcs_dir.glob("*.py")):
        module_name = f"leap_lab_funcs_{next(_module_counter)}_{path.stem}"
        spec = importlib.util.spec_from_file_location(module_name, path)
        module = importlib.util.module_from_spec(spec)
        try:
            spec.loader.exec_module(module)
        except BaseException as e:  # instructor code may raise anything
            import traceback

            raise LoadError("ImportError", f"{path.name}: {e}",
                            detail=traceback.format_exc()) from None
        for name in sorted(vars(module)):
            if name.startswith("_"):
                continue
            obj = getattr(module, name)
            if not callable(obj) or inspect.isclass(obj) or inspect.ismodule(obj):
                continue
            if getattr(obj, "__module__", module_name) != module_name:
                continue  # imported, not defined here
            if name in table:
                raise LoadError(
                    "NameCollision",
                    f"function {name!r} defined in both {table[name].source_file}"
                    f" and {path.name}")
            table[name] = ExposedFunction(
                name=name, func=obj, params=_params_of(obj),
                doc=inspect.getdoc(obj) or "", source_file=path.name)
    return table
