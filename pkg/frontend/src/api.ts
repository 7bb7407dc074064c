/** Typed HTTP client for the pmdepth session service.
 *
 * Every method maps one endpoint; error statuses become typed errors so
 * the view layer can distinguish "session gone" (show the expired
 * screen) from "busy solving" (disable controls, offer retry) from
 * "request rejected" (bad rectangle and the like).
 */

import type {
  CreateResponse,
  CreateSessionBody,
  ModeResponse,
  NextBody,
  NextResponse,
  SelectResponse,
  SessionInfo,
  VarianceResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

/** 404: the session id is unknown (restarted server with a different
 * state dir, mistyped link, or garbage-collected session). */
export class SessionExpiredError extends ApiError {
  constructor(message: string) {
    super(message, 404);
    this.name = "SessionExpiredError";
  }
}

/** 409: a solve is in flight; the mutation was not accepted. */
export class ServiceBusyError extends ApiError {
  constructor(message: string) {
    super(message, 409);
    this.name = "ServiceBusyError";
  }
}

/** 422: the request body was rejected (malformed rectangle, bad mode
 * index, invalid session recipe). */
export class RequestRejectedError extends ApiError {
  constructor(message: string) {
    super(message, 422);
    this.name = "RequestRejectedError";
  }
}

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

async function errorDetail(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    if (body.detail !== undefined) return JSON.stringify(body.detail);
  } catch {
    /* non-JSON error body */
  }
  return `${res.status} ${res.statusText}`;
}

export class ApiClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, init);
    if (!res.ok) {
      const detail = await errorDetail(res);
      if (res.status === 404) throw new SessionExpiredError(detail);
      if (res.status === 409) throw new ServiceBusyError(detail);
      if (res.status === 422) throw new RequestRejectedError(detail);
      throw new ApiError(detail, res.status);
    }
    return (await res.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(body: CreateSessionBody): Promise<CreateResponse> {
    return this.post("/sessions", body);
  }

  getSession(id: string): Promise<SessionInfo> {
    return this.request(`/sessions/${encodeURIComponent(id)}`);
  }

  getMode(id: string, index: number): Promise<ModeResponse> {
    return this.request(`/sessions/${encodeURIComponent(id)}/modes/${index}`);
  }

  requestNext(id: string, body: NextBody): Promise<NextResponse> {
    const payload: Record<string, unknown> = { annotations: body.annotations };
    if (body.lambda !== undefined) payload["lambda"] = body.lambda;
    return this.post(`/sessions/${encodeURIComponent(id)}/next`, payload);
  }

  select(id: string, mode: number): Promise<SelectResponse> {
    return this.post(`/sessions/${encodeURIComponent(id)}/select`, { mode });
  }

  getVariance(id: string): Promise<VarianceResponse> {
    return this.request(`/sessions/${encodeURIComponent(id)}/variance`);
  }
}
