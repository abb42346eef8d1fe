/** Typed client for the server's HTTP surface. One instance per session. */

export interface ParamDescriptor {
  name: string;
  kind: "positional" | "keyword";
  default?: unknown;
  annotation?: string;
}

export interface FunctionDescriptor {
  name: string;
  params: ParamDescriptor[];
  doc: string;
  lab_id: string;
}

export interface CallOutcome {
  status: "ok" | "user_error" | "timeout" | "worker_crash";
  duration_ms: number;
  result?: unknown;
  error?: { type: string; message: string; detail?: string };
}

export interface ExperimentInfo {
  experiment_id: string;
  title: string;
  state: "created" | "running" | "stopped";
}

export interface LabInfo {
  lab_id: string;
  title: string;
  description: string;
  experiments: ExperimentInfo[];
  quizzes: { quiz_id: string; kind: string; questions: number }[];
  groups: { group_id: string; members: string[] }[];
  metrics: string[];
  objective?: { function: string; expression: string; variables: string[] };
  logs_visibility: string;
}

export interface LogRecord {
  seq: number;
  timestamp: string;
  lab_id: string;
  student_id: string;
  function: string;
  args: unknown[];
  kwargs: Record<string, unknown>;
  outcome: CallOutcome;
}

export interface QuizQuestion {
  question_id: string;
  prompt: string;
  type: "single" | "multi" | "free";
  options?: string[];
  correct?: unknown;
}

export interface QuizPayload {
  definition: { quiz_id: string; kind: string; questions: QuizQuestion[] };
  stats: {
    quiz_id: string;
    respondents: number;
    per_question: Record<string, Record<string, number>>;
  };
}

export interface Analytics<T> {
  as_of_seq: number;
  data: T;
}

export interface Trajectory {
  student_id: string;
  function: string;
  segment_index: number;
  points: { seq: number; timestamp: string; args: unknown[]; result: unknown }[];
}

export interface ParticipationBucket {
  bucket_start: string;
  width_s: number;
  per_student: Record<string, number>;
}

export interface LeaderboardEntry {
  student_id: string;
  metric_name: string;
  value: number;
  rank: number;
  group_id: string | null;
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

export interface SessionInfo {
  token: string;
  user_id: string;
  role: "student" | "instructor" | "admin";
  display_name: string;
}

export class Api {
  session: SessionInfo | null = null;

  constructor(private base: string = "") {}

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const headers: Record<string, string> = {};
    if (this.session) headers["X-LEAP-Session"] = this.session.token;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await fetch(this.base + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      throw new ApiError(
        response.status,
        String(payload.code ?? "error"),
        String(payload.message ?? response.statusText),
      );
    }
    return payload;
  }

  async login(userId: string, password: string): Promise<SessionInfo> {
    const payload = (await this.request("POST", "/admin/login", {
      user_id: userId,
      password,
    })) as unknown as SessionInfo;
    this.session = payload;
    return payload;
  }

  logout(): void {
    this.session = null;
  }

  labs(): Promise<LabInfo[]> {
    return this.request("GET", "/labs") as Promise<LabInfo[]>;
  }

  discover(lab: string): Promise<FunctionDescriptor[]> {
    return this.request("GET", `/discover?lab=${encodeURIComponent(lab)}`) as Promise<
      FunctionDescriptor[]
    >;
  }

  async call(
    lab: string,
    functionName: string,
    args: unknown[],
    kwargs: Record<string, unknown> = {},
  ): Promise<{ seq: number; outcome: CallOutcome }> {
    return (await this.request("POST", "/call", {
      lab,
      function: functionName,
      args,
      kwargs,
    })) as { seq: number; outcome: CallOutcome };
  }

  async logs(params: Record<string, string | number>): Promise<{
    records: LogRecord[];
    next_after_seq: number;
  }> {
    const query = new URLSearchParams(
      Object.entries(params).map(([k, v]) => [k, String(v)]),
    );
    return (await this.request("GET", `/logs?${query}`)) as {
      records: LogRecord[];
      next_after_seq: number;
    };
  }

  trajectories(lab: string, functionName: string): Promise<Analytics<Trajectory[]>> {
    return this.request(
      "GET",
      `/analytics/${encodeURIComponent(lab)}/trajectories?function=${encodeURIComponent(functionName)}`,
    ) as Promise<Analytics<Trajectory[]>>;
  }

  participation(lab: string, widthS: number): Promise<Analytics<ParticipationBucket[]>> {
    return this.request(
      "GET",
      `/analytics/${encodeURIComponent(lab)}/participation?width=${widthS}`,
    ) as Promise<Analytics<ParticipationBucket[]>>;
  }

  leaderboard(lab: string, metric: string): Promise<Analytics<LeaderboardEntry[]>> {
    return this.request(
      "GET",
      `/analytics/${encodeURIComponent(lab)}/leaderboard?metric=${encodeURIComponent(metric)}`,
    ) as Promise<Analytics<LeaderboardEntry[]>>;
  }

  quiz(lab: string, quizId: string): Promise<Analytics<QuizPayload>> {
    return this.request(
      "GET",
      `/analytics/${encodeURIComponent(lab)}/quiz/${encodeURIComponent(quizId)}`,
    ) as Promise<Analytics<QuizPayload>>;
  }

  setExperimentState(lab: string, experiment: string, state: string): Promise<ExperimentInfo> {
    return this.request(
      "POST",
      `/labs/${encodeURIComponent(lab)}/experiments/${encodeURIComponent(experiment)}/state`,
      { state },
    ) as Promise<ExperimentInfo>;
  }

  reloadLabs(): Promise<{ added: string[]; kept: string[]; removed: string[] }> {
    return this.request("POST", "/admin/reload") as Promise<{
      added: string[];
      kept: string[];
      removed: string[];
    }>;
  }

  async labAsset(lab: string, path: string): Promise<string | null> {
    const headers: Record<string, string> = {};
    if (this.session) headers["X-LEAP-Session"] = this.session.token;
    const response = await fetch(
      `${this.base}/ui/${encodeURIComponent(lab)}/${path}`,
      { headers },
    );
    if (!response.ok) return null;
    return response.text();
  }
}
