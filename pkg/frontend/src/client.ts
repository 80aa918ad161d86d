/**
 * HTTP client for the study service.
 *
 * Thin typed wrapper over fetch. Every request/response pair is appended to
 * `requestLog`, which is how tests (and audits) prove protocol properties
 * like "no suggestion request before the phase-1 acknowledgment".
 */

import type {
  Assignment,
  AssignmentState,
  LabelMap,
  ServiceErrorPayload,
  SessionInfo,
  SubmissionAck,
  Suggestion,
} from "./types.js";

/** One completed round trip, in completion order. */
export interface RequestLogEntry {
  method: string;
  path: string;
  status: number;
}

/** A non-2xx service response, carrying the typed error name. */
export class ServiceError extends Error {
  readonly status: number;
  /** The service's error class name, e.g. "PhaseOrderViolation". */
  override readonly name: string;
  readonly detail: string;

  constructor(status: number, payload: ServiceErrorPayload) {
    super(`${payload.error}: ${payload.detail}`);
    this.status = status;
    this.name = payload.error;
    this.detail = payload.detail;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class StudyClient {
  readonly baseUrl: string;
  readonly requestLog: RequestLogEntry[] = [];
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    // Bind so the default works when fetch is a window method.
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  openSession(raterId: string): Promise<SessionInfo> {
    return this.request("POST", "/sessions", { rater_id: raterId });
  }

  nextAssignment(token: string): Promise<Assignment> {
    return this.request("GET", `/sessions/${token}/next`);
  }

  submitPhase1(assignmentId: string, labels: LabelMap): Promise<SubmissionAck> {
    return this.request("POST", `/assignments/${assignmentId}/phase1`, { labels });
  }

  getSuggestion(assignmentId: string): Promise<Suggestion> {
    return this.request("GET", `/assignments/${assignmentId}/suggestion`);
  }

  submitPhase2(assignmentId: string, labels: LabelMap): Promise<SubmissionAck> {
    return this.request("POST", `/assignments/${assignmentId}/phase2`, { labels });
  }

  assignmentState(assignmentId: string): Promise<AssignmentState> {
    return this.request("GET", `/assignments/${assignmentId}`);
  }

  /** Absolute URL of an image payload (for <img src>). */
  imageUrl(imagePath: string): string {
    return this.baseUrl + imagePath;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    this.requestLog.push({ method, path, status: response.status });
    if (!response.ok) {
      throw new ServiceError(response.status, (await response.json()) as ServiceErrorPayload);
    }
    return (await response.json()) as T;
  }
}
