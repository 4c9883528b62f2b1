// Typed client for the device API. Every request goes through one gate that
// checks the endpoint against the documented allowlist and records the call,
// so tests can assert the UI never talks to anything undocumented.

export interface Session {
  token: string;
  user: string;
  role: string;
  expiry: number;
}

export interface CardJson {
  serial: number;
  version: number;
  blood_group: string;
  rh: string;
  hiv_positive: boolean;
  transmittable_disease: boolean;
  chronic_disease: boolean;
  language: string;
  server_uri: string;
  allergies: string[];
  conditions: string[];
  last_modified: number;
  modifier_id: string;
  tag_uid?: number;
}

export interface SampleJson {
  device_id: string;
  kind: string;
  value: number;
  timestamp: number;
}

export interface AlarmJson {
  alarm_id: number;
  serial: number;
  sample: SampleJson;
  classification: string;
  acknowledged: boolean;
  acknowledged_by: string | null;
}

export interface ResultJson {
  serial: number;
  kind: string;
  window_start: number;
  window_end: number;
  count: number;
  min: number;
  max: number;
  mean: number;
}

export interface EhrObservation {
  kind: string;
  min: number;
  max: number;
  mean: number;
  window_start: number;
  window_end: number;
  received_at: number;
  source: string;
}

export interface EhrRecordJson {
  serial: number;
  display_name: string;
  birth_year: number;
  language: string;
  labels: Record<string, string>;
  observations: EhrObservation[];
}

export interface CipPatchJson {
  blood_group?: string;
  rh?: string;
  hiv_positive?: boolean;
  transmittable_disease?: boolean;
  chronic_disease?: boolean;
  language?: string;
  server_uri?: string;
  allergies?: string[];
  conditions?: string[];
}

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, detail?: string) {
    super(detail ? `${code}: ${detail}` : code);
    this.status = status;
    this.code = code;
  }
}

export interface EndpointCall {
  method: string;
  pattern: string;
}

// The documented device API surface; the UI may use nothing else.
export const ALLOWED_ENDPOINTS: EndpointCall[] = [
  { method: "POST", pattern: "/login" },
  { method: "GET", pattern: "/health" },
  { method: "GET", pattern: "/patient" },
  { method: "PUT", pattern: "/cip" },
  { method: "GET", pattern: "/vitals" },
  { method: "GET", pattern: "/results" },
  { method: "GET", pattern: "/alarms" },
  { method: "POST", pattern: "/alarms/{id}/ack" },
  { method: "POST", pattern: "/supplementary" },
  { method: "GET", pattern: "/events" },
  { method: "GET", pattern: "/diag" },
];

function allowed(method: string, pattern: string): boolean {
  return ALLOWED_ENDPOINTS.some(
    (e) => e.method === method && e.pattern === pattern,
  );
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  readonly baseUrl: string;
  readonly calls: EndpointCall[] = [];
  session: Session | null = null;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(
    method: string,
    pattern: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    if (!allowed(method, pattern)) {
      throw new Error(`endpoint not in the documented surface: ${method} ${pattern}`);
    }
    this.calls.push({ method, pattern });
    const headers: Record<string, string> = {};
    if (this.session) headers["Authorization"] = `Bearer ${this.session.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const err = (payload ?? {}) as { error?: string; detail?: string };
      throw new ApiError(response.status, err.error ?? `Http${response.status}`, err.detail);
    }
    return payload as T;
  }

  async login(user: string, password: string): Promise<Session> {
    this.session = await this.request<Session>("POST", "/login", "/login", {
      user,
      password,
    });
    return this.session;
  }

  logout(): void {
    this.session = null;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/health", "/health");
  }

  getPatient(): Promise<CardJson> {
    return this.request("GET", "/patient", "/patient");
  }

  async getVitals(kind?: string, limit = 120): Promise<SampleJson[]> {
    const query = kind ? `?kind=${kind}&limit=${limit}` : `?limit=${limit}`;
    const body = await this.request<{ samples: SampleJson[] }>(
      "GET",
      "/vitals",
      `/vitals${query}`,
    );
    return body.samples;
  }

  async getResults(): Promise<ResultJson[]> {
    const body = await this.request<{ results: ResultJson[] }>(
      "GET",
      "/results",
      "/results",
    );
    return body.results;
  }

  async getAlarms(): Promise<AlarmJson[]> {
    const body = await this.request<{ alarms: AlarmJson[] }>(
      "GET",
      "/alarms",
      "/alarms",
    );
    return body.alarms;
  }

  ackAlarm(id: number): Promise<AlarmJson> {
    return this.request("POST", "/alarms/{id}/ack", `/alarms/${id}/ack`);
  }

  putCip(patch: CipPatchJson): Promise<CardJson> {
    return this.request("PUT", "/cip", "/cip", patch);
  }

  postSupplementary(): Promise<{ serial: number; ok: boolean; record: EhrRecordJson }> {
    return this.request("POST", "/supplementary", "/supplementary");
  }

  getDiag(): Promise<{ counters: Record<string, number> }> {
    return this.request("GET", "/diag", "/diag");
  }

  /**
   * Live updates over GET /events. EventSource cannot carry an
   * Authorization header, so the session token rides as a query parameter;
   * when the environment has no EventSource the caller's polling loop is
   * the (always-active) fallback.
   */
  openEvents(onEvent: (event: string, data: unknown) => void): () => void {
    const EventSourceCtor = (globalThis as { EventSource?: typeof EventSource })
      .EventSource;
    if (!EventSourceCtor || !this.session) {
      return () => {};
    }
    this.calls.push({ method: "GET", pattern: "/events" });
    const source = new EventSourceCtor(
      `${this.baseUrl}/events?token=${encodeURIComponent(this.session.token)}`,
    );
    for (const name of ["alarm", "patient", "result", "card"]) {
      source.addEventListener(name, (msg) => {
        try {
          onEvent(name, JSON.parse((msg as MessageEvent).data));
        } catch {
          /* malformed event payloads are ignored */
        }
      });
    }
    return () => source.close();
  }
}
