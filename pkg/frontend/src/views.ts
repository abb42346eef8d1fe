/**
 * The five screens: login, lab list, and the per-lab dashboard with its
 * functions / trajectories / participation / leaderboard / quiz panels
 * (plus the instructor panel for non-students). Each dashboard panel
 * owns one poller; switching panels stops the old one.
 */
import {
  Api,
  ApiError,
  FunctionDescriptor,
  LabInfo,
  LogRecord,
  Trajectory,
} from "./api.js";
import {
  barLayout,
  boundsOf,
  colorFor,
  contourGrid,
  makeProjector,
  polylinePath,
} from "./charts.js";
import { banner, clear, el, svgEl } from "./dom.js";
import { Expression } from "./expr.js";
import { argsArePlanar, buildCall, fieldSpecs } from "./forms.js";
import { renderMarkdown } from "./markdown.js";
import { makePoller, Poller } from "./poll.js";

export const POLL_INTERVAL_MS = 2000;

function describeError(e: unknown): string {
  if (e instanceof ApiError) {
    if (e.code === "experiment_not_running") return "Experiment is not running.";
    if (e.status === 401) return "Session expired; please log in again.";
    if (e.status === 403) return "You are not allowed to do that.";
    return `${e.code}: ${e.message}`;
  }
  return String(e);
}

// ---- login ------------------------------------------------------------

export function loginView(api: Api, onLogin: () => void): HTMLElement {
  const message = el("div");
  const user = el("input", { name: "user_id", autocomplete: "username" });
  const password = el("input", { type: "password", name: "password" });
  const form = el(
    "form",
    {
      class: "login",
      onsubmit: (event: Event) => {
        event.preventDefault();
        clear(message);
        api.login(user.value, password.value).then(onLogin, (e) => {
          message.append(banner("error", describeError(e)));
        });
      },
    },
    el("h1", {}, "LEAP"),
    el("label", {}, "Student or instructor id", user),
    el("label", {}, "Password", password),
    el("button", { type: "submit" }, "Log in"),
    message,
  );
  return form;
}

// ---- lab list -----------------------------------------------------------

export function labsView(api: Api, labs: LabInfo[], onOpen: (lab: LabInfo) => void): HTMLElement {
  const who = api.session!;
  const cards = labs.map((lab) =>
    el(
      "div",
      { class: "card", "data-lab": lab.lab_id },
      el("h2", {}, lab.title),
      el("p", {}, lab.description),
      el(
        "p",
        { class: "muted" },
        lab.experiments
          .map((e) => `${e.title || e.experiment_id}: ${e.state}`)
          .join(" · "),
      ),
      el("button", { onclick: () => onOpen(lab) }, "Open lab"),
    ),
  );
  return el(
    "div",
    { class: "labs" },
    el("h1", {}, "Labs"),
    el("p", { class: "muted" }, `Signed in as ${who.display_name} (${who.role})`),
    ...(cards.length ? cards : [el("p", {}, "No labs are available to you yet.")]),
  );
}

// ---- lab dashboard shell ---------------------------------------------------

export interface LabScreen {
  root: HTMLElement;
  stop(): void;
}

type PanelName =
  | "functions"
  | "trajectories"
  | "participation"
  | "leaderboard"
  | "quiz"
  | "instructor";

export function labView(api: Api, lab: LabInfo, onBack: () => void): LabScreen {
  const content = el("div", { class: "panel" });
  let activePoller: Poller | null = null;

  const panels: [PanelName, string][] = [
    ["functions", "Functions"],
    ["trajectories", "Trajectories"],
    ["participation", "Participation"],
    ["leaderboard", "Leaderboard"],
    ["quiz", "Quiz"],
  ];
  if (api.session!.role !== "student") panels.push(["instructor", "Instructor"]);

  const tabs = el("nav", { class: "tabs" });
  const buttons = new Map<PanelName, HTMLButtonElement>();

  function activate(name: PanelName): void {
    activePoller?.stop();
    activePoller = null;
    for (const [key, button] of buttons) {
      button.classList.toggle("active", key === name);
    }
    clear(content);
    const mounted = mountPanel(api, lab, name, content);
    activePoller = mounted;
  }

  for (const [name, label] of panels) {
    const button = el(
      "button",
      { class: "tab", "data-panel": name, onclick: () => activate(name) },
      label,
    );
    buttons.set(name, button);
    tabs.append(button);
  }

  const root = el(
    "div",
    { class: "lab-screen", "data-lab": lab.lab_id },
    el(
      "header",
      {},
      el("button", { class: "back", onclick: onBack }, "← Labs"),
      el("h1", {}, lab.title),
    ),
    tabs,
    content,
  );
  activate("functions");
  return {
    root,
    stop() {
      activePoller?.stop();
    },
  };
}

function mountPanel(api: Api, lab: LabInfo, name: PanelName, host: HTMLElement): Poller | null {
  switch (name) {
    case "functions":
      return functionsPanel(api, lab, host);
    case "trajectories":
      return trajectoriesPanel(api, lab, host);
    case "participation":
      return participationPanel(api, lab, host);
    case "leaderboard":
      return leaderboardPanel(api, lab, host);
    case "quiz":
      return quizPanel(api, lab, host);
    case "instructor":
      return instructorPanel(api, lab, host);
  }
}

// ---- functions panel -------------------------------------------------------

function functionsPanel(api: Api, lab: LabInfo, host: HTMLElement): Poller | null {
  const forms = el("div", { class: "function-forms" }, "Loading functions…");
  const history = el("div", { class: "history" });
  host.append(forms, el("h3", {}, "Your recent calls"), history);

  api.discover(lab.lab_id).then(
    (descriptors) => {
      clear(forms);
      for (const d of descriptors) {
        if (d.name.includes(".")) continue; // built-ins surface via the quiz panel
        forms.append(functionForm(api, lab, d, history));
      }
      if (!forms.hasChildNodes()) forms.append(el("p", {}, "This lab exposes no functions."));
    },
    (e) => {
      clear(forms).append(banner("error", describeError(e)));
    },
  );

  const poller = makePoller(
    async () => {
      const me = api.session!.user_id;
      const page = await api.logs({ lab: lab.lab_id, student: me, limit: 20 });
      const top = page.records.length ? page.records[page.records.length - 1].seq : 0;
      return { as_of_seq: top, records: page.records };
    },
    (payload) => {
      const records = payload.records;
      clear(history);
      for (const r of [...records].reverse().slice(0, 12)) {
        const outcome =
          r.outcome.status === "ok"
            ? JSON.stringify(r.outcome.result)
            : `${r.outcome.status}: ${r.outcome.error?.type ?? ""}`;
        history.append(
          el(
            "div",
            { class: `call call-${r.outcome.status}` },
            `#${r.seq} ${r.function}(${r.args.map((a) => JSON.stringify(a)).join(", ")}) → ${outcome}`,
          ),
        );
      }
    },
    POLL_INTERVAL_MS,
  );
  poller.start();
  return poller;
}

function functionForm(
  api: Api,
  lab: LabInfo,
  descriptor: FunctionDescriptor,
  history: HTMLElement,
): HTMLElement {
  const specs = fieldSpecs(descriptor);
  const inputs = new Map<string, HTMLInputElement>();
  const output = el("div", { class: "call-output" });
  const fields = specs.map((spec) => {
    const input = el("input", {
      name: spec.name,
      placeholder: spec.placeholder,
      value: spec.initial,
    });
    inputs.set(spec.name, input);
    return el("label", {}, spec.name, input);
  });
  return el(
    "form",
    {
      class: "function-form",
      "data-function": descriptor.name,
      onsubmit: (event: Event) => {
        event.preventDefault();
        clear(output);
        let shape;
        try {
          const values: Record<string, string> = {};
          for (const [name, input] of inputs) values[name] = input.value;
          shape = buildCall(specs, values);
        } catch (e) {
          output.append(banner("error", String(e)));
          return;
        }
        api.call(lab.lab_id, descriptor.name, shape.args, shape.kwargs).then(
          ({ outcome }) => {
            if (outcome.status === "ok") {
              output.append(
                banner("ok", `→ ${JSON.stringify(outcome.result)} (${outcome.duration_ms.toFixed(1)} ms)`),
              );
            } else {
              output.append(
                banner(
                  "error",
                  `${outcome.status}: ${outcome.error?.type ?? ""} ${outcome.error?.message ?? ""}`,
                ),
              );
            }
          },
          (e) => output.append(banner("error", describeError(e))),
        );
      },
    },
    el("h3", {}, `${descriptor.name}(${descriptor.params.map((p) => p.name).join(", ")})`),
    descriptor.doc ? el("p", { class: "muted" }, descriptor.doc) : null,
    ...fields,
    el("button", { type: "submit" }, "Call"),
    output,
  );
}

// ---- trajectories panel -------------------------------------------------------

const PLOT_W = 640;
const PLOT_H = 480;

function trajectoriesPanel(api: Api, lab: LabInfo, host: HTMLElement): Poller {
  const functionName = lab.objective?.function ?? "gradient";
  const plot = el("div", { class: "plot" }, "Waiting for data…");
  host.append(
    el("p", { class: "muted" }, `Visited points per student for ${functionName}; one line per run.`),
    plot,
  );

  const expression = lab.objective ? new Expression(lab.objective.expression) : null;
  const variables = lab.objective?.variables ?? [];

  const poller = makePoller(
    () => api.trajectories(lab.lab_id, functionName),
    (payload) => {
      const trajectories = payload.data;
      clear(plot);
      if (trajectories.length === 0) {
        plot.append(el("p", {}, "No calls yet — trajectories appear as students work."));
        return;
      }
      if (!trajectories.every((t) => argsArePlanar(t.points))) {
        plot.append(trajectoryTable(trajectories));
        return;
      }
      plot.append(trajectorySvg(trajectories, expression, variables));
      plot.append(legend(trajectories));
    },
    POLL_INTERVAL_MS,
  );
  poller.start();
  return poller;
}

function trajectorySvg(
  trajectories: Trajectory[],
  expression: Expression | null,
  variables: string[],
): SVGElement {
  const all: [number, number][] = [];
  for (const t of trajectories) {
    for (const p of t.points) all.push([p.args[0] as number, p.args[1] as number]);
  }
  const bounds = boundsOf(all);
  const projector = makeProjector(bounds, PLOT_W, PLOT_H);
  const svg = svgEl("svg", {
    viewBox: `0 0 ${PLOT_W} ${PLOT_H}`,
    width: String(PLOT_W),
    height: String(PLOT_H),
    class: "trajectory-plot",
  });
  if (expression !== null && variables.length === 2) {
    const cellPx = PLOT_W / 40;
    const cellPy = PLOT_H / 40;
    for (const cell of contourGrid(expression, [variables[0], variables[1]], bounds, 40)) {
      svg.append(
        svgEl("rect", {
          x: (cell.px * PLOT_W).toFixed(1),
          y: (cell.py * PLOT_H).toFixed(1),
          width: cellPx.toFixed(1),
          height: cellPy.toFixed(1),
          fill: `hsl(215, 60%, ${95 - cell.level * 45}%)`,
          class: "contour-cell",
        }),
      );
    }
  }
  for (const t of trajectories) {
    const pts = t.points.map((p) => [p.args[0], p.args[1]] as [number, number]);
    svg.append(
      svgEl("path", {
        d: polylinePath(pts, projector),
        fill: "none",
        stroke: colorFor(t.student_id),
        "stroke-width": "2",
        class: "trajectory-line",
        "data-student": t.student_id,
        "data-segment": String(t.segment_index),
      }),
    );
    const [sx, sy] = projector.toPixel(pts[0][0], pts[0][1]);
    svg.append(
      svgEl("circle", {
        cx: sx.toFixed(1),
        cy: sy.toFixed(1),
        r: "4",
        fill: colorFor(t.student_id),
        class: "trajectory-start",
      }),
    );
  }
  return svg;
}

function legend(trajectories: Trajectory[]): HTMLElement {
  const students = [...new Set(trajectories.map((t) => t.student_id))].sort();
  return el(
    "div",
    { class: "legend" },
    ...students.map((s) =>
      el(
        "span",
        { class: "legend-entry", style: `--swatch: ${colorFor(s)}` },
        el("span", { class: "swatch" }),
        s,
      ),
    ),
  );
}

function trajectoryTable(trajectories: Trajectory[]): HTMLElement {
  const rows = trajectories.flatMap((t) =>
    t.points.slice(-5).map((p) =>
      el(
        "tr",
        {},
        el("td", {}, t.student_id),
        el("td", {}, String(p.seq)),
        el("td", {}, JSON.stringify(p.args)),
        el("td", {}, JSON.stringify(p.result)),
      ),
    ),
  );
  return el(
    "table",
    { class: "trajectory-table" },
    el(
      "thead",
      {},
      el("tr", {}, el("th", {}, "student"), el("th", {}, "seq"), el("th", {}, "args"), el("th", {}, "result")),
    ),
    el("tbody", {}, ...rows),
  );
}

// ---- participation panel -----------------------------------------------------

function participationPanel(api: Api, lab: LabInfo, host: HTMLElement): Poller {
  const chart = el("div", { class: "bars" }, "Waiting for data…");
  host.append(el("p", { class: "muted" }, "Calls per student (whole log, 60 s buckets)."), chart);
  const poller = makePoller(
    () => api.participation(lab.lab_id, 60),
    (payload) => {
      const buckets = payload.data;
      const totals: Record<string, number> = {};
      for (const bucket of buckets) {
        for (const [student, count] of Object.entries(bucket.per_student)) {
          totals[student] = (totals[student] ?? 0) + count;
        }
      }
      clear(chart);
      const bars = barLayout(totals);
      if (!bars.length) {
        chart.append(el("p", {}, "No activity yet."));
        return;
      }
      for (const bar of bars) {
        chart.append(
          el(
            "div",
            { class: "bar-row", title: bar.title, "data-student": bar.label },
            el("span", { class: "bar-label" }, bar.label),
            el("div", { class: "bar", style: `width: ${(bar.ratio * 100).toFixed(1)}%` }),
            el("span", { class: "bar-value" }, String(bar.value)),
          ),
        );
      }
    },
    POLL_INTERVAL_MS,
  );
  poller.start();
  return poller;
}

// ---- leaderboard panel ----------------------------------------------------------

function leaderboardPanel(api: Api, lab: LabInfo, host: HTMLElement): Poller {
  const metricSelect = el("select", { name: "metric" });
  for (const metric of lab.metrics) metricSelect.append(el("option", { value: metric }, metric));
  const table = el("div", { class: "leaderboard" }, "Waiting for data…");
  host.append(el("label", {}, "Metric ", metricSelect), table);

  const poller = makePoller(
    () => api.leaderboard(lab.lab_id, metricSelect.value || lab.metrics[0]),
    (payload) => {
      const entries = payload.data;
      clear(table);
      if (!entries.length) {
        table.append(el("p", {}, "Nobody on the board yet."));
        return;
      }
      table.append(
        el(
          "table",
          {},
          el(
            "thead",
            {},
            el("tr", {}, el("th", {}, "#"), el("th", {}, "student"), el("th", {}, "value"), el("th", {}, "group")),
          ),
          el(
            "tbody",
            {},
            ...entries.map((entry) =>
              el(
                "tr",
                { "data-student": entry.student_id },
                el("td", {}, String(entry.rank)),
                el("td", {}, entry.student_id),
                el("td", {}, String(entry.value)),
                el("td", {}, entry.group_id ?? ""),
              ),
            ),
          ),
        ),
      );
    },
    POLL_INTERVAL_MS,
  );
  metricSelect.addEventListener("change", () => void poller.tick());
  poller.start();
  return poller;
}

// ---- quiz panel --------------------------------------------------------------------

function quizPanel(api: Api, lab: LabInfo, host: HTMLElement): Poller | null {
  const quizzes = lab.quizzes.filter((q) => q.kind === "markdown");
  if (!quizzes.length) {
    host.append(el("p", {}, "This lab ships no quizzes."));
    return null;
  }
  const quizId = quizzes[0].quiz_id;
  const prose = el("div", { class: "quiz-prose" });
  const questions = el("div", { class: "quiz-questions" }, "Loading quiz…");
  const statsBox = el("div", { class: "quiz-stats" });
  host.append(prose, questions, statsBox);

  void api.labAsset(lab.lab_id, `quizzes/${quizId}.md`).then((source) => {
    if (source) prose.innerHTML = renderMarkdown(source);
  });

  const isInstructor = api.session!.role !== "student";
  let rendered = false;

  const poller = makePoller(
    () => api.quiz(lab.lab_id, quizId),
    (payload) => {
      const quiz = payload.data;
      if (!rendered) {
        rendered = true;
        clear(questions);
        for (const q of quiz.definition.questions) {
          questions.append(questionForm(api, lab, quizId, q));
        }
      }
      if (isInstructor) {
        clear(statsBox);
        statsBox.append(el("h3", {}, `Live answers (${quiz.stats.respondents} respondents)`));
        for (const [questionId, counts] of Object.entries(quiz.stats.per_question)) {
          statsBox.append(el("h4", {}, questionId));
          for (const bar of barLayout(counts)) {
            statsBox.append(
              el(
                "div",
                { class: "bar-row", title: bar.title },
                el("span", { class: "bar-label" }, bar.label),
                el("div", { class: "bar", style: `width: ${(bar.ratio * 100).toFixed(1)}%` }),
                el("span", { class: "bar-value" }, String(bar.value)),
              ),
            );
          }
        }
      }
    },
    POLL_INTERVAL_MS,
  );
  poller.start();
  return poller;
}

function questionForm(
  api: Api,
  lab: LabInfo,
  quizId: string,
  question: import("./api.js").QuizQuestion,
): HTMLElement {
  const output = el("div");
  const name = `quiz-${quizId}-${question.question_id}`;
  let readAnswer: () => unknown;
  const controls: HTMLElement[] = [];
  if (question.type === "free") {
    const input = el("input", { name, placeholder: "your answer" });
    controls.push(el("label", {}, input));
    readAnswer = () => input.value;
  } else {
    const inputType = question.type === "single" ? "radio" : "checkbox";
    const boxes: HTMLInputElement[] = [];
    for (const option of question.options ?? []) {
      const box = el("input", { type: inputType, name, value: option });
      boxes.push(box);
      controls.push(el("label", { class: "option" }, box, option));
    }
    readAnswer = () => {
      const chosen = boxes.filter((b) => b.checked).map((b) => b.value);
      return question.type === "single" ? chosen[0] : chosen;
    };
  }
  return el(
    "form",
    {
      class: "quiz-question",
      "data-question": question.question_id,
      onsubmit: (event: Event) => {
        event.preventDefault();
        clear(output);
        const answer = readAnswer();
        if (answer === undefined || answer === "") {
          output.append(banner("error", "Choose an answer first."));
          return;
        }
        api.call(lab.lab_id, "quiz.submit", [quizId, question.question_id, answer]).then(
          () => output.append(banner("ok", "Answer recorded (latest one counts).")),
          (e) => output.append(banner("error", describeError(e))),
        );
      },
    },
    el("h4", {}, question.prompt),
    ...controls,
    el("button", { type: "submit" }, "Submit answer"),
    output,
  );
}

// ---- instructor panel -----------------------------------------------------------------

function instructorPanel(api: Api, lab: LabInfo, host: HTMLElement): Poller | null {
  const message = el("div");
  const experimentBox = el("div", { class: "experiments" });

  function renderExperiments(): void {
    clear(experimentBox);
    for (const experiment of lab.experiments) {
      const flip = experiment.state === "running" ? "stopped" : "running";
      experimentBox.append(
        el(
          "div",
          { class: "experiment-row", "data-experiment": experiment.experiment_id },
          el("strong", {}, experiment.title || experiment.experiment_id),
          el("span", { class: `state state-${experiment.state}` }, ` ${experiment.state} `),
          el(
            "button",
            {
              onclick: () => {
                clear(message);
                api.setExperimentState(lab.lab_id, experiment.experiment_id, flip).then(
                  (updated) => {
                    experiment.state = updated.state;
                    renderExperiments();
                  },
                  (e) => message.append(banner("error", describeError(e))),
                );
              },
            },
            flip === "running" ? "Start" : "Stop",
          ),
        ),
      );
    }
  }
  renderExperiments();

  const download = el(
    "button",
    {
      onclick: () => {
        void api.logs({ lab: lab.lab_id, limit: 1000 }).then((page) => {
          const blob = new Blob([JSON.stringify(page.records, null, 1)], {
            type: "application/json",
          });
          const link = el("a", {
            href: URL.createObjectURL(blob),
            download: `${lab.lab_id}-log.json`,
          });
          link.click();
        });
      },
    },
    "Download log JSON",
  );
  const reload = el(
    "button",
    {
      onclick: () => {
        clear(message);
        api.reloadLabs().then(
          (report) =>
            message.append(
              banner(
                "info",
                `Reloaded: +${report.added.length} labs, ${report.removed.length} removed.`,
              ),
            ),
          (e) => message.append(banner("error", describeError(e))),
        );
      },
    },
    "Reload labs from disk",
  );

  host.append(
    el("h3", {}, "Experiments"),
    experimentBox,
    el("h3", {}, "Administration"),
    el("div", { class: "admin-actions" }, reload, download),
    message,
  );
  return null;
}
