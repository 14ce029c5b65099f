/** Typed client for the tone-mapping service (see the server's JSON API). */

export interface HealthInfo {
  status: string;
  model: boolean;
  d_z: number;
  backend: string;
}

export interface SessionInfo {
  session_id: string;
  d_z: number;
  preview_url: string;
}

export interface RenderParams {
  z: number[];
  gamma_base?: number | null;
  gamma_post?: number | null;
}

export interface RenderResult {
  preview_url: string;
  q: number;
  s: number;
  n: number;
  gamma_base: number;
  gamma_post: number;
}

export interface Candidate {
  z: number[];
  q: number;
  s: number;
  n: number;
  preview_url: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText || "request failed";
    try {
      const body = (await res.json()) as { error?: unknown };
      if (body && typeof body.error === "string") detail = body.error;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class ApiClient {
  private readonly f: FetchLike;

  constructor(private readonly root = "", f?: FetchLike) {
    // fetch must not be called with the client as receiver.
    this.f = f ?? ((url, init) => fetch(url, init));
  }

  health(): Promise<HealthInfo> {
    return this.f(this.root + "/healthz").then((r) => asJson<HealthInfo>(r));
  }

  createSession(hdr: Blob, name = "upload.hdr"): Promise<SessionInfo> {
    const form = new FormData();
    form.append("hdr", hdr, name);
    return this.f(this.root + "/session", { method: "POST", body: form })
      .then((r) => asJson<SessionInfo>(r));
  }

  render(sessionId: string, params: RenderParams): Promise<RenderResult> {
    return this.f(`${this.root}/session/${sessionId}/render`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(params),
    }).then((r) => asJson<RenderResult>(r));
  }

  optimize(sessionId: string, starts: number,
           iters: number): Promise<Candidate[]> {
    return this.f(`${this.root}/session/${sessionId}/optimize`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ starts, iters }),
    }).then((r) => asJson<{ candidates: Candidate[] }>(r))
      .then((body) => body.candidates);
  }

  /** Absolute URL for a preview path returned by the API. */
  previewUrl(path: string): string {
    return this.root + path;
  }
}
