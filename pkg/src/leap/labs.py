"""Lab folders on disk: manifests, experiment lifecycle, UI assets, quizzes.

A lab is a self-contained folder:

    <lab>/lab.json          optional manifest; defaults are synthesized
    <lab>/funcs/*.py        functions served by the lab's worker (required)
    <lab>/ui/**             static assets (optional)
    <lab>/ui/quizzes/*.md   quizzes; each question is a ```quiz fenced
                            block whose body is JSON. *.html is served
                            verbatim and submits through the same endpoint.
"""
from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

from .errors import (
    DuplicateLabId,
    IllegalTransition,
    ManifestParseError,
    MissingFuncsDir,
    NotFound,
    PathTraversalRejected,
    QuizParseError,
    UnknownExperiment,
    UnknownLab,
)
from .expr import compile_expression
from .protocol import IDENT_RE, LAB_ID_RE

logger = logging.getLogger(__name__)

EXPERIMENT_STATES = ("created", "running", "stopped")
_LEGAL_TRANSITIONS = {("created", "running"), ("running", "stopped"), ("stopped", "running")}

MEDIA_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".md": "text/markdown; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".json": "application/json",
}

QUIZ_TYPES = ("single", "multi", "free")
_QUIZ_BLOCK_RE = re.compile(r"```quiz\s*\n(.*?)```", re.DOTALL)


@dataclass
class ExperimentConfig:
    experiment_id: str
    title: str = ""
    state: str = "created"


@dataclass(frozen=True)
class GroupConfig:
    group_id: str
    members: tuple[str, ...] = ()


@dataclass(frozen=True)
class ObjectiveConfig:
    """Leaderboard objective: expression over one function's argument names."""

    function: str
    expression: str
    variables: tuple[str, ...] = ()


@dataclass(frozen=True)
class CompletionConfig:
    """First record per student matching all present conditions completes."""

    function: str
    result_min: Optional[float] = None
    result_max: Optional[float] = None
    objective_max: Optional[float] = None
    question_id: Optional[str] = None


@dataclass
class LabManifest:
    lab_id: str
    title: str = ""
    description: str = ""
    runtime: str = "python-worker"
    parallelism: int = 1
    experiments: list[ExperimentConfig] = field(default_factory=list)
    groups: tuple[GroupConfig, ...] = ()
    logs_visibility: str = "class"
    objective: Optional[ObjectiveConfig] = None
    completion: Optional[CompletionConfig] = None
    call_timeout_ms: Optional[int] = None


@dataclass(frozen=True)
class LabLayout:
    root: Path
    ui_dir: Path
    funcs_dir: Path
    quizzes_dir: Path


@dataclass(frozen=True)
class QuizQuestion:
    question_id: str
    prompt: str
    type: str
    options: tuple[str, ...] = ()
    correct: object = None

    def to_wire(self, include_correct: bool = False) -> dict:
        w: dict = {"question_id": self.question_id, "prompt": self.prompt, "type": self.type}
        if self.options:
            w["options"] = list(self.options)
        if include_correct and self.correct is not None:
            w["correct"] = self.correct
        return w


@dataclass(frozen=True)
class QuizDefinition:
    quiz_id: str
    questions: tuple[QuizQuestion, ...] = ()
    kind: str = "markdown"  # markdown | html

    def to_wire(self, include_correct: bool = False) -> dict:
        return {
            "quiz_id": self.quiz_id,
            "kind": self.kind,
            "questions": [q.to_wire(include_correct) for q in self.questions],
        }


def lab_layout(root: Path) -> LabLayout:
    return LabLayout(
        root=root, ui_dir=root / "ui", funcs_dir=root / "funcs",
        quizzes_dir=root / "ui" / "quizzes",
    )


def _require(cond: bool, message: str):
    if not cond:
        raise ManifestParseError(message)


def _parse_manifest(raw: dict, folder_name: str) -> LabManifest:
    _require(isinstance(raw, dict), "lab.json must contain a JSON object")
    lab_id = raw.get("lab_id", folder_name)
    _require(isinstance(lab_id, str) and bool(LAB_ID_RE.match(lab_id)),
             f"lab_id {lab_id!r} is not a valid identifier")

    parallelism = raw.get("parallelism", 1)
    _require(isinstance(parallelism, int) and not isinstance(parallelism, bool)
             and parallelism >= 1, "parallelism must be a positive integer")

    visibility = raw.get("logs_visibility", "class")
    _require(visibility in ("class", "private"),
             f"logs_visibility {visibility!r} must be 'class' or 'private'")

    experiments = []
    seen_exp = set()
    for entry in raw.get("experiments", [{"experiment_id": "default"}]):
        if isinstance(entry, str):
            entry = {"experiment_id": entry}
        _require(isinstance(entry, dict), "experiments entries must be objects or strings")
        exp_id = entry.get("experiment_id")
        _require(isinstance(exp_id, str) and bool(IDENT_RE.match(exp_id)),
                 f"experiment_id {exp_id!r} is not a valid identifier")
        _require(exp_id not in seen_exp, f"duplicate experiment_id {exp_id!r}")
        seen_exp.add(exp_id)
        experiments.append(ExperimentConfig(experiment_id=exp_id, title=entry.get("title", exp_id)))
    _require(len(experiments) > 0, "a lab needs at least one experiment")

    groups = []
    seen_members: set[str] = set()
    for entry in raw.get("groups", []):
        _require(isinstance(entry, dict) and isinstance(entry.get("group_id"), str),
                 "group entries need a group_id")
        members = entry.get("members", [])
        _require(isinstance(members, list) and all(isinstance(m, str) for m in members),
                 f"group {entry['group_id']!r} members must be strings")
        overlap = seen_members.intersection(members)
        _require(not overlap, f"students {sorted(overlap)} appear in more than one group")
        seen_members.update(members)
        groups.append(GroupConfig(group_id=entry["group_id"], members=tuple(members)))

    objective = None
    if "objective" in raw:
        o = raw["objective"]
        _require(isinstance(o, dict) and isinstance(o.get("function"), str)
                 and isinstance(o.get("expression"), str),
                 "objective needs 'function' and 'expression'")
        variables = tuple(o.get("variables", []))
        _require(all(isinstance(v, str) and IDENT_RE.match(v) for v in variables),
                 "objective variables must be identifiers")
        try:
            compiled = compile_expression(o["expression"])
        except Exception as e:
            raise ManifestParseError(f"objective expression: {e}") from None
        unknown = compiled.variables - set(variables)
        _require(not unknown, f"objective expression uses undeclared variables {sorted(unknown)}")
        objective = ObjectiveConfig(function=o["function"], expression=o["expression"],
                                    variables=variables)

    completion = None
    if "completion" in raw:
        c = raw["completion"]
        _require(isinstance(c, dict) and isinstance(c.get("function"), str),
                 "completion needs 'function'")
        completion = CompletionConfig(
            function=c["function"],
            result_min=c.get("result_min"),
            result_max=c.get("result_max"),
            objective_max=c.get("objective_max"),
            question_id=c.get("question_id"),
        )

    timeout = raw.get("call_timeout_ms")
    if timeout is not None:
        _require(isinstance(timeout, int) and timeout > 0, "call_timeout_ms must be positive")

    return LabManifest(
        lab_id=lab_id,
        title=raw.get("title", lab_id),
        description=raw.get("description", ""),
        runtime=raw.get("runtime", "python-worker"),
        parallelism=parallelism,
        experiments=experiments,
        groups=tuple(groups),
        logs_visibility=visibility,
        objective=objective,
        completion=completion,
        call_timeout_ms=timeout,
    )


def load_lab(path: str | Path) -> tuple[LabManifest, LabLayout]:
    """Parse one lab folder; missing lab.json synthesizes defaults."""
    root = Path(path)
    if not root.is_dir():
        raise NotFound(f"lab folder {root} does not exist")
    layout = lab_layout(root)
    if not layout.funcs_dir.is_dir():
        raise MissingFuncsDir(f"lab {root.name!r} has no funcs/ directory")
    manifest_path = root / "lab.json"
    if manifest_path.exists():
        try:
            raw = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ManifestParseError(f"{manifest_path}: {e}") from None
        manifest = _parse_manifest(raw, root.name)
    else:
        manifest = _parse_manifest({}, root.name)
    return manifest, layout


def parse_quiz_markdown(text: str, quiz_id: str) -> QuizDefinition:
    questions = []
    seen = set()
    for block in _QUIZ_BLOCK_RE.findall(text):
        try:
            raw = json.loads(block)
        except json.JSONDecodeError as e:
            raise QuizParseError(f"quiz {quiz_id!r}: bad JSON in quiz block: {e.msg}") from None
        if not isinstance(raw, dict):
            raise QuizParseError(f"quiz {quiz_id!r}: quiz block must be a JSON object")
        qid = raw.get("question_id")
        qtype = raw.get("type")
        if not isinstance(qid, str) or not qid:
            raise QuizParseError(f"quiz {quiz_id!r}: question_id missing")
        if qid in seen:
            raise QuizParseError(f"quiz {quiz_id!r}: duplicate question_id {qid!r}")
        if qtype not in QUIZ_TYPES:
            raise QuizParseError(f"quiz {quiz_id!r}: type must be one of {QUIZ_TYPES}")
        options = raw.get("options", [])
        if qtype in ("single", "multi") and not options:
            raise QuizParseError(f"quiz {quiz_id!r}: {qtype} question {qid!r} needs options")
        seen.add(qid)
        questions.append(QuizQuestion(
            question_id=qid, prompt=str(raw.get("prompt", "")), type=qtype,
            options=tuple(str(o) for o in options), correct=raw.get("correct"),
        ))
    if not questions:
        raise QuizParseError(f"quiz {quiz_id!r}: no ```quiz blocks found")
    return QuizDefinition(quiz_id=quiz_id, questions=tuple(questions))


@dataclass
class LoadedLab:
    manifest: LabManifest
    layout: LabLayout
    quizzes: dict[str, QuizDefinition] = field(default_factory=dict)
    quiz_errors: list[str] = field(default_factory=list)


class LabRegistry:
    """All labs the server currently serves.

    Read-mostly: loading happens at startup and on explicit admin reload;
    experiment transitions are compare-and-set under one lock.
    """

    def __init__(self, state_log: Optional[Callable[[str, str, str, str], None]] = None):
        # state_log(lab_id, experiment_id, new_state, caller) appends the
        # synthetic "experiment.state" record; wired up by the server
        self._state_log = state_log
        self._labs: dict[str, LoadedLab] = {}
        self._lock = threading.Lock()

    # -- loading ----------------------------------------------------------

    def register(self, path: str | Path) -> LabManifest:
        manifest, layout = load_lab(path)
        with self._lock:
            if manifest.lab_id in self._labs:
                raise DuplicateLabId(manifest.lab_id)
            lab = LoadedLab(manifest=manifest, layout=layout)
            self._load_quizzes(lab)
            self._labs[manifest.lab_id] = lab
        return manifest

    def load_dir(self, labs_dir: str | Path) -> list[str]:
        """Register every lab folder under labs_dir; returns loaded ids."""
        loaded = []
        root = Path(labs_dir)
        if not root.is_dir():
            return loaded
        for child in sorted(root.iterdir()):
            if not child.is_dir() or child.name.startswith((".", "_")):
                continue
            try:
                manifest = self.register(child)
                loaded.append(manifest.lab_id)
            except (MissingFuncsDir, ManifestParseError, DuplicateLabId) as e:
                logger.warning("skipping lab folder %s: %s", child, e)
        return loaded

    def reload_dir(self, labs_dir: str | Path) -> dict:
        """Re-scan: add new labs, refresh manifests, drop removed folders.

        Experiment states are carried over by experiment_id; function code
        is NOT hot-reloaded (workers keep running until server restart).
        """
        root = Path(labs_dir)
        with self._lock:
            old = self._labs
            self._labs = {}
        added, kept, removed = [], [], []
        if root.is_dir():
            for child in sorted(root.iterdir()):
                if not child.is_dir() or child.name.startswith((".", "_")):
                    continue
                try:
                    manifest, layout = load_lab(child)
                except (MissingFuncsDir, ManifestParseError) as e:
                    logger.warning("skipping lab folder %s: %s", child, e)
                    continue
                with self._lock:
                    if manifest.lab_id in self._labs:
                        logger.warning("duplicate lab id %r on reload", manifest.lab_id)
                        continue
                    previous = old.get(manifest.lab_id)
                    if previous is not None:
                        states = {e.experiment_id: e.state for e in previous.manifest.experiments}
                        for exp in manifest.experiments:
                            if exp.experiment_id in states:
                                exp.state = states[exp.experiment_id]
                        kept.append(manifest.lab_id)
                    else:
                        added.append(manifest.lab_id)
                    lab = LoadedLab(manifest=manifest, layout=layout)
                    self._load_quizzes(lab)
                    self._labs[manifest.lab_id] = lab
        removed = sorted(set(old) - set(self._labs))
        return {"added": sorted(added), "kept": sorted(kept), "removed": removed}

    def _load_quizzes(self, lab: LoadedLab):
        lab.quizzes.clear()
        lab.quiz_errors.clear()
        qdir = lab.layout.quizzes_dir
        if not qdir.is_dir():
            return
        for path in sorted(qdir.iterdir()):
            if path.suffix == ".md":
                try:
                    quiz = parse_quiz_markdown(path.read_text(encoding="utf-8"), path.stem)
                except QuizParseError as e:
                    lab.quiz_errors.append(str(e))
                    logger.warning("lab %s: %s", lab.manifest.lab_id, e)
                    continue
                lab.quizzes[quiz.quiz_id] = quiz
            elif path.suffix == ".html":
                lab.quizzes[path.stem] = QuizDefinition(quiz_id=path.stem, kind="html")

    # -- queries ----------------------------------------------------------

    def lab_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._labs)

    def has_lab(self, lab_id: str) -> bool:
        with self._lock:
            return lab_id in self._labs

    def get(self, lab_id: str) -> LoadedLab:
        with self._lock:
            lab = self._labs.get(lab_id)
        if lab is None:
            raise UnknownLab(lab_id)
        return lab

    def manifest(self, lab_id: str) -> LabManifest:
        return self.get(lab_id).manifest

    def logs_visibility(self, lab_id: str) -> str:
        try:
            return self.get(lab_id).manifest.logs_visibility
        except UnknownLab:
            return "class"

    def list_labs(self) -> list[dict]:
        """Sorted summaries for the /labs endpoint."""
        out = []
        for lab_id in self.lab_ids():
            lab = self.get(lab_id)
            m = lab.manifest
            entry = {
                "lab_id": m.lab_id,
                "title": m.title,
                "description": m.description,
                "parallelism": m.parallelism,
                "logs_visibility": m.logs_visibility,
                "experiments": [
                    {"experiment_id": e.experiment_id, "title": e.title, "state": e.state}
                    for e in m.experiments
                ],
                "quizzes": [
                    {"quiz_id": q.quiz_id, "kind": q.kind, "questions": len(q.questions)}
                    for _, q in sorted(lab.quizzes.items())
                ],
                "groups": [
                    {"group_id": g.group_id, "members": list(g.members)} for g in m.groups
                ],
                "metrics": self._metrics_for(m),
            }
            if m.objective is not None:
                entry["objective"] = {
                    "function": m.objective.function,
                    "expression": m.objective.expression,
                    "variables": list(m.objective.variables),
                }
            out.append(entry)
        return out

    @staticmethod
    def _metrics_for(m: LabManifest) -> list[str]:
        metrics = ["call_count"]
        if m.objective is not None:
            metrics.append("min_f_value")
        if m.completion is not None:
            metrics.append("first_completion")
        return metrics

    # -- experiments -------------------------------------------------------

    def running_experiment(self, lab_id: str) -> Optional[str]:
        """First running experiment in manifest order, if any."""
        for exp in self.get(lab_id).manifest.experiments:
            if exp.state == "running":
                return exp.experiment_id
        return None

    def set_experiment_state(self, lab_id: str, experiment_id: str, target: str,
                             caller: str = "") -> ExperimentConfig:
        if target not in EXPERIMENT_STATES:
            raise IllegalTransition(f"unknown state {target!r}")
        with self._lock:
            lab = self._labs.get(lab_id)
            if lab is None:
                raise UnknownLab(lab_id)
            exp = next((e for e in lab.manifest.experiments
                        if e.experiment_id == experiment_id), None)
            if exp is None:
                raise UnknownExperiment(f"{lab_id}/{experiment_id}")
            if (exp.state, target) not in _LEGAL_TRANSITIONS:
                raise IllegalTransition(f"{exp.state} -> {target}")
            exp.state = target
            snapshot = ExperimentConfig(exp.experiment_id, exp.title, exp.state)
        if self._state_log is not None:
            self._state_log(lab_id, experiment_id, target, caller)
        return snapshot

    def restore_experiment_state(self, lab_id: str, experiment_id: str, state: str):
        """Recovery path: replay a logged state without re-logging it."""
        if state not in EXPERIMENT_STATES:
            return
        with self._lock:
            lab = self._labs.get(lab_id)
            if lab is None:
                return
            for exp in lab.manifest.experiments:
                if exp.experiment_id == experiment_id:
                    exp.state = state
                    return

    # -- assets -------------------------------------------------------------

    def resolve_asset(self, lab_id: str, relative_path: str) -> tuple[bytes, str]:
        lab = self.get(lab_id)
        return read_asset(lab.layout.ui_dir, relative_path)

    def list_quizzes(self, lab_id: str) -> list[QuizDefinition]:
        lab = self.get(lab_id)
        return [lab.quizzes[k] for k in sorted(lab.quizzes)]


def read_asset(base_dir: Path, relative_path: str) -> tuple[bytes, str]:
    """Read a file strictly inside base_dir; traversal attempts are rejected."""
    if relative_path.startswith(("/", "\\")) or re.match(r"^[A-Za-z]:", relative_path):
        raise PathTraversalRejected(relative_path)
    parts = [p for p in relative_path.replace("\\", "/").split("/") if p not in ("", ".")]
    if any(p == ".." for p in parts):
        raise PathTraversalRejected(relative_path)
    if not parts:
        raise NotFound(relative_path)
    base = base_dir.resolve()
    target = base_dir.joinpath(*parts).resolve()
    if base not in target.parents and target != base:
        raise PathTraversalRejected(relative_path)
    if not target.is_file():
        raise NotFound(relative_path)
    media_type = MEDIA_TYPES.get(target.suffix.lower(), "application/octet-stream")
    return target.read_bytes(), media_type
