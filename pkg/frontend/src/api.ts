import type {
  ClassesPayload,
  DiffPayload,
  EvaluatePayload,
  HealthPayload,
  RulesPayload,
  SavePayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

// The slice of the client the view model needs; test doubles implement this.
export interface WorkbenchApi {
  classes(): Promise<ClassesPayload>;
  rules(variant: string): Promise<RulesPayload>;
  patchCustom(classId: number, part: string, weight: number): Promise<{ revision: number }>;
  evaluate(variant: string, setting?: string, revision?: number): Promise<EvaluatePayload>;
  diff(a: string, b: string, setting?: string): Promise<DiffPayload>;
  saveCustom(path?: string): Promise<SavePayload>;
}

export class WorkbenchClient implements WorkbenchApi {
  private readonly fetchImpl: FetchLike;

  constructor(
    private readonly baseUrl: string = "",
    fetchImpl?: FetchLike,
  ) {
    // wrap the global so browser fetch keeps its required `this`
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      body = null;
    }
    if (!response.ok) {
      const detail =
        body !== null && typeof body === "object" && "error" in body
          ? String((body as { error: unknown }).error)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown, method = "POST"): Promise<T> {
    return this.request<T>(path, {
      method,
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  health(): Promise<HealthPayload> {
    return this.request("/api/health");
  }

  classes(): Promise<ClassesPayload> {
    return this.request("/api/classes");
  }

  rules(variant: string): Promise<RulesPayload> {
    return this.request(`/api/rules/${variant}`);
  }

  patchCustom(classId: number, part: string, weight: number): Promise<{ revision: number }> {
    return this.post(`/api/rules/custom/${classId}`, { part, weight }, "PATCH");
  }

  evaluate(variant: string, setting = "default", revision?: number): Promise<EvaluatePayload> {
    const payload: Record<string, unknown> = { variant, setting };
    if (revision !== undefined) payload.revision = revision;
    return this.post("/api/evaluate", payload);
  }

  diff(a: string, b: string, setting = "default"): Promise<DiffPayload> {
    const query = new URLSearchParams({ a, b, setting });
    return this.request(`/api/diff?${query.toString()}`);
  }

  saveCustom(path?: string): Promise<SavePayload> {
    return this.post("/api/rules/custom/save", path === undefined ? {} : { path });
  }
}
