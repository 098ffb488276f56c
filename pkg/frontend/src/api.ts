import type {
  GatewayEventPayload,
  GatewayReplyPayload,
  JobPayload,
  ReportPayload,
} from "./types.js";

// Minimal WebSocket surface the client needs; satisfied by the browser
// WebSocket and by the node "ws" package.
export interface WebSocketLike {
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: ((event: unknown) => void) | null;
  onerror: ((event: unknown) => void) | null;
  close(): void;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export interface StreamHandle {
  close(): void;
}

export class TransportError extends Error {}

// Public surface the console consumes; tests substitute fakes.
export interface GatewayApi {
  createSession(): Promise<string>;
  sendEvent(sessionId: string, event: GatewayEventPayload): Promise<GatewayReplyPayload[]>;
  getJob(jobId: string): Promise<JobPayload>;
  listModels(): Promise<string[]>;
  buildReport(models: string[], criteria: string[]): Promise<ReportPayload>;
  openStream(
    sessionId: string,
    onReply: (reply: GatewayReplyPayload) => void,
    onError?: (err: unknown) => void,
  ): StreamHandle;
}

export class GatewayClient implements GatewayApi {
  private readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;
  private readonly wsFactory: WebSocketFactory;

  constructor(
    baseUrl: string,
    opts: { fetchFn?: typeof fetch; wsFactory?: WebSocketFactory } = {},
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = opts.fetchFn ?? fetch.bind(globalThis);
    this.wsFactory =
      opts.wsFactory ??
      ((url: string) => new WebSocket(url) as unknown as WebSocketLike);
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new TransportError(`request to ${path} failed: ${err}`);
    }
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body && body.detail) detail = `${response.status}: ${body.detail}`;
      } catch {
        // non-JSON error body; status alone is enough
      }
      throw new TransportError(`request to ${path} failed (${detail})`);
    }
    return response.json();
  }

  async createSession(): Promise<string> {
    const body = (await this.request("/sessions", { method: "POST" })) as {
      session_id: string;
    };
    return body.session_id;
  }

  async sendEvent(
    sessionId: string,
    event: GatewayEventPayload,
  ): Promise<GatewayReplyPayload[]> {
    return (await this.request(`/sessions/${encodeURIComponent(sessionId)}/events`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(event),
    })) as GatewayReplyPayload[];
  }

  async getJob(jobId: string): Promise<JobPayload> {
    return (await this.request(`/jobs/${encodeURIComponent(jobId)}`)) as JobPayload;
  }

  async listModels(): Promise<string[]> {
    return (await this.request("/models")) as string[];
  }

  async buildReport(models: string[], criteria: string[]): Promise<ReportPayload> {
    return (await this.request("/reports", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ models, criteria }),
    })) as ReportPayload;
  }

  streamUrl(sessionId: string): string {
    const ws = this.baseUrl.replace(/^http/, "ws");
    return `${ws}/sessions/${encodeURIComponent(sessionId)}/stream`;
  }

  openStream(
    sessionId: string,
    onReply: (reply: GatewayReplyPayload) => void,
    onError?: (err: unknown) => void,
  ): StreamHandle {
    const socket = this.wsFactory(this.streamUrl(sessionId));
    socket.onmessage = (event) => {
      try {
        onReply(JSON.parse(String(event.data)) as GatewayReplyPayload);
      } catch (err) {
        if (onError) onError(err);
      }
    };
    socket.onerror = (event) => {
      if (onError) onError(event);
    };
    return { close: () => socket.close() };
  }
}
