import { GatewayApi, StreamHandle, TransportError } from "./api.js";
import { TranscriptView } from "./transcript.js";
import type { GatewayEventPayload, GatewayReplyPayload } from "./types.js";

const QUICK_ACTIONS = ["Request!", "Report!"];
const DEFAULT_POLL_MS = 5000;

// One chat console bound to one gateway session. All state beyond the
// transcript lives server-side; the client only renders replies.
export class ConsoleApp {
  readonly badges = new Map<string, string>();
  sessionId: string | null = null;

  private transcript!: TranscriptView;
  private input!: HTMLInputElement;
  private badgeStrip!: HTMLElement;
  private stream: StreamHandle | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private readonly pollMs: number;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: GatewayApi,
    opts: { pollIntervalMs?: number } = {},
  ) {
    this.pollMs = opts.pollIntervalMs ?? DEFAULT_POLL_MS;
  }

  async start(): Promise<void> {
    this.renderShell();
    this.sessionId = await this.client.createSession();
    this.stream = this.client.openStream(this.sessionId, (reply) =>
      this.onStreamReply(reply),
    );
    this.pollTimer = setInterval(() => {
      void this.refreshBadges();
    }, this.pollMs);
  }

  stop(): void {
    if (this.stream) this.stream.close();
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    this.stream = null;
    this.pollTimer = null;
  }

  private renderShell(): void {
    this.root.innerHTML = "";

    const actions = document.createElement("div");
    actions.className = "quick-actions";
    for (const trigger of QUICK_ACTIONS) {
      const button = document.createElement("button");
      button.className = "quick-action";
      button.dataset.trigger = trigger;
      button.textContent = trigger;
      // clicked and typed triggers send the identical text event
      button.addEventListener("click", () => void this.sendText(trigger));
      actions.appendChild(button);
    }
    this.root.appendChild(actions);

    this.badgeStrip = document.createElement("div");
    this.badgeStrip.className = "badges";
    this.root.appendChild(this.badgeStrip);

    const transcriptEl = document.createElement("div");
    transcriptEl.className = "transcript";
    this.root.appendChild(transcriptEl);
    this.transcript = new TranscriptView(transcriptEl);

    const composer = document.createElement("div");
    composer.className = "composer";
    this.input = document.createElement("input");
    this.input.className = "message-input";
    this.input.placeholder = 'Type a message ("Request!" or "Report!")';
    this.input.addEventListener("keydown", (event) => {
      if (event.key === "Enter") void this.sendFromInput();
    });
    const send = document.createElement("button");
    send.className = "send";
    send.textContent = "Send";
    send.addEventListener("click", () => void this.sendFromInput());
    const confirm = document.createElement("button");
    confirm.className = "confirm";
    confirm.textContent = "Confirm";
    confirm.addEventListener("click", () => void this.sendConfirm());
    const deny = document.createElement("button");
    deny.className = "deny";
    deny.textContent = "Deny";
    deny.addEventListener("click", () => void this.sendDeny());
    composer.append(this.input, send, confirm, deny);
    this.root.appendChild(composer);
  }

  private async sendFromInput(): Promise<void> {
    const text = this.input.value;
    this.input.value = "";
    await this.sendText(text);
  }

  async sendText(text: string): Promise<void> {
    await this.dispatch({ kind: "text", text });
  }

  async sendSelect(options: string[]): Promise<void> {
    await this.dispatch({ kind: "select", options });
  }

  async sendConfirm(): Promise<void> {
    await this.dispatch({ kind: "confirm" });
  }

  async sendDeny(): Promise<void> {
    await this.dispatch({ kind: "deny" });
  }

  private handlers() {
    return {
      onSelect: (options: string[]) => void this.sendSelect(options),
      onConfirm: () => void this.sendConfirm(),
      onDeny: () => void this.sendDeny(),
    };
  }

  private async dispatch(event: GatewayEventPayload): Promise<void> {
    if (this.sessionId === null) throw new Error("console not started");
    this.transcript.appendEvent(event);
    let replies: GatewayReplyPayload[];
    try {
      replies = await this.client.sendEvent(this.sessionId, event);
    } catch (err) {
      const text =
        err instanceof TransportError ? err.message : `transport failure: ${err}`;
      this.transcript.appendError(text);
      return;
    }
    for (const reply of replies) {
      this.transcript.appendReply(reply, this.handlers());
      await this.trackJob(reply);
    }
  }

  private onStreamReply(reply: GatewayReplyPayload): void {
    this.transcript.appendReply(reply, this.handlers());
    void this.trackJob(reply);
  }

  private async trackJob(reply: GatewayReplyPayload): Promise<void> {
    if (!reply.job_id) return;
    if (reply.kind === "job_launched") {
      this.badges.set(reply.job_id, "pending");
      this.renderBadges();
      await this.refreshBadges();
    } else if (reply.kind === "job_finished") {
      this.badges.set(reply.job_id, "completed");
      this.renderBadges();
    }
  }

  async refreshBadges(): Promise<void> {
    for (const jobId of [...this.badges.keys()]) {
      try {
        const job = await this.client.getJob(jobId);
        this.badges.set(jobId, job.state);
      } catch {
        // transient poll failure; the next cycle retries
      }
    }
    this.renderBadges();
  }

  private renderBadges(): void {
    this.badgeStrip.innerHTML = "";
    for (const [jobId, state] of this.badges) {
      const badge = document.createElement("span");
      badge.className = "badge";
      badge.dataset.job = jobId;
      badge.dataset.state = state;
      badge.textContent = `${jobId}: ${state}`;
      this.badgeStrip.appendChild(badge);
    }
  }
}
