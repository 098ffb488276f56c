import type { GatewayEventPayload, GatewayReplyPayload } from "./types.js";
import { renderReportView } from "./report_view.js";

export interface BubbleHandlers {
  onSelect(options: string[]): void;
  onConfirm(): void;
  onDeny(): void;
}

// Append-only transcript of sent events and received replies.
export class TranscriptView {
  constructor(private readonly container: HTMLElement) {}

  get bubbleCount(): number {
    return this.container.querySelectorAll(".bubble").length;
  }

  private bubble(direction: "sent" | "received", kind: string): HTMLElement {
    const el = document.createElement("div");
    el.className = `bubble ${direction}`;
    el.dataset.kind = kind;
    this.container.appendChild(el);
    return el;
  }

  appendEvent(event: GatewayEventPayload): void {
    const el = this.bubble("sent", event.kind);
    if (event.kind === "text") {
      el.textContent = event.text ?? "";
    } else if (event.kind === "select") {
      el.textContent = `selected: ${(event.options ?? []).join(", ")}`;
    } else {
      el.textContent = event.kind;
    }
  }

  appendError(text: string): void {
    const el = this.bubble("received", "error");
    el.classList.add("error");
    el.textContent = text;
  }

  appendReply(reply: GatewayReplyPayload, handlers: BubbleHandlers): void {
    switch (reply.kind) {
      case "prompt": {
        this.bubble("received", "prompt").textContent = reply.text ?? "";
        break;
      }
      case "error": {
        this.appendError(reply.text ?? "error");
        break;
      }
      case "job_launched": {
        this.bubble("received", "job_launched").textContent =
          `Evaluation job launched: ${reply.job_id}`;
        break;
      }
      case "job_finished": {
        this.bubble("received", "job_finished").textContent =
          `Evaluation job finished: ${reply.job_id}`;
        break;
      }
      case "choices": {
        const el = this.bubble("received", "choices");
        const text = document.createElement("div");
        text.textContent = reply.text ?? "";
        el.appendChild(text);
        el.appendChild(this.renderChoices(reply.options ?? [], handlers));
        break;
      }
      case "report": {
        const el = this.bubble("received", "report");
        el.appendChild(renderReportView(reply.report));
        break;
      }
    }
  }

  appendConfirmControls(handlers: BubbleHandlers): void {
    const el = this.bubble("received", "confirm_controls");
    const confirm = document.createElement("button");
    confirm.className = "confirm";
    confirm.textContent = "Confirm";
    confirm.addEventListener("click", () => handlers.onConfirm());
    const deny = document.createElement("button");
    deny.className = "deny";
    deny.textContent = "Deny";
    deny.addEventListener("click", () => handlers.onDeny());
    el.appendChild(confirm);
    el.appendChild(deny);
  }

  private renderChoices(options: string[], handlers: BubbleHandlers): HTMLElement {
    const wrap = document.createElement("div");
    wrap.className = "choices";
    const chosen = new Set<string>();
    for (const option of options) {
      const button = document.createElement("button");
      button.className = "option";
      button.dataset.option = option;
      button.textContent = option;
      button.addEventListener("click", () => {
        if (chosen.has(option)) {
          chosen.delete(option);
          button.classList.remove("chosen");
        } else {
          chosen.add(option);
          button.classList.add("chosen");
        }
      });
      wrap.appendChild(button);
    }
    const send = document.createElement("button");
    send.className = "send-selection";
    send.textContent = "Send selection";
    send.addEventListener("click", () => {
      if (chosen.size > 0) handlers.onSelect(options.filter((o) => chosen.has(o)));
    });
    wrap.appendChild(send);
    return wrap;
  }
}
