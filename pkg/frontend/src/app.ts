// Chat client: message timeline with route badges, per-message debug
// panel, session reset, and an in-flight lock so a session never has two
// concurrent turns from this client.

import { ApiError, ChatApi } from "./api.js";
import type { SessionTurn, TraceSummary, UiMessage } from "./types.js";

const FRAGMENT_KEY = "#s=";

export function sessionIdFromFragment(win: Window): string {
  const hash = win.location.hash;
  if (hash.startsWith(FRAGMENT_KEY) && hash.length > FRAGMENT_KEY.length) {
    return decodeURIComponent(hash.slice(FRAGMENT_KEY.length));
  }
  const token = randomToken();
  win.location.hash = `${FRAGMENT_KEY}${token}`;
  return token;
}

function randomToken(): string {
  const bytes = new Uint8Array(12);
  crypto.getRandomValues(bytes);
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export class ChatApp {
  readonly sessionId: string;
  private inFlight = false;
  private pendingRetry: string | null = null;
  private readonly messages: UiMessage[] = [];

  private timeline!: HTMLUListElement;
  private input!: HTMLInputElement;
  private sendButton!: HTMLButtonElement;
  private errorBox!: HTMLDivElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ChatApi,
    sessionId: string,
  ) {
    this.sessionId = sessionId;
  }

  async start(): Promise<void> {
    this.render();
    await this.reload();
  }

  /** Rebuild the timeline from the server history (used at startup). */
  async reload(): Promise<void> {
    this.messages.length = 0;
    const history = await this.api.loadSession(this.sessionId);
    if (history) {
      const ordered = [...history.turns].sort((a, b) => a.turn_no - b.turn_no);
      for (const turn of ordered) {
        this.messages.push(userMessage(turn.turn_no, turn.user));
        this.messages.push(botMessage(turn.turn_no, turn.response, turn.route, turn.trace));
      }
    }
    this.renderTimeline();
  }

  private render(): void {
    this.root.innerHTML = `
      <header class="top">
        <span class="title">chatpipe</span>
        <code class="session" data-testid="session-id">${this.sessionId}</code>
        <button type="button" data-testid="reset">reset</button>
      </header>
      <ul class="timeline" data-testid="timeline"></ul>
      <div class="error" data-testid="error" hidden></div>
      <form class="composer" data-testid="composer">
        <input type="text" data-testid="input" placeholder="say something" autocomplete="off" />
        <button type="submit" data-testid="send" disabled>send</button>
      </form>
    `;
    this.timeline = this.root.querySelector(".timeline")!;
    this.input = this.root.querySelector("input")!;
    this.sendButton = this.root.querySelector('[data-testid="send"]')!;
    this.errorBox = this.root.querySelector('[data-testid="error"]')!;

    this.input.addEventListener("input", () => this.syncControls());
    this.root.querySelector("form")!.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.send(this.input.value);
    });
    this.root
      .querySelector('[data-testid="reset"]')!
      .addEventListener("click", () => void this.reset());
  }

  private syncControls(): void {
    const empty = this.input.value.trim().length === 0;
    this.sendButton.disabled = this.inFlight || empty;
    this.input.disabled = this.inFlight;
  }

  async send(text: string): Promise<void> {
    const utterance = text.trim();
    if (!utterance || this.inFlight) {
      return;
    }
    this.inFlight = true;
    this.hideError();
    const optimisticTurn = this.nextTurnNo();
    this.messages.push(userMessage(optimisticTurn, utterance));
    this.input.value = "";
    this.syncControls();
    this.renderTimeline();
    try {
      const body = await this.api.sendTurn(this.sessionId, utterance);
      this.messages.push(botMessage(body.turn_no, body.response, body.route, body.trace));
    } catch (err) {
      // never drop the turn silently: keep the user bubble, offer a retry
      this.pendingRetry = utterance;
      this.messages.pop();
      this.showError(err instanceof ApiError ? `request failed (${err.status})` : "network error");
    } finally {
      this.inFlight = false;
      this.syncControls();
      this.renderTimeline();
    }
  }

  async retry(): Promise<void> {
    const utterance = this.pendingRetry;
    if (!utterance) {
      return;
    }
    this.pendingRetry = null;
    await this.send(utterance);
  }

  async reset(): Promise<void> {
    await this.api.deleteSession(this.sessionId);
    this.messages.length = 0;
    this.pendingRetry = null;
    this.hideError();
    this.renderTimeline();
  }

  bubbles(): HTMLLIElement[] {
    return Array.from(this.timeline.querySelectorAll("li"));
  }

  private nextTurnNo(): number {
    const turns = this.messages.filter((m) => m.author === "user").length;
    return turns + 1;
  }

  private showError(message: string): void {
    this.errorBox.hidden = false;
    this.errorBox.innerHTML = "";
    const label = document.createElement("span");
    label.textContent = `${message} — `;
    const retry = document.createElement("button");
    retry.type = "button";
    retry.dataset.testid = "retry";
    retry.textContent = "retry";
    retry.addEventListener("click", () => void this.retry());
    this.errorBox.append(label, retry);
  }

  private hideError(): void {
    this.errorBox.hidden = true;
    this.errorBox.innerHTML = "";
  }

  private renderTimeline(): void {
    this.timeline.innerHTML = "";
    for (const message of this.messages) {
      this.timeline.appendChild(renderBubble(message));
    }
  }
}

function userMessage(turnNo: number, text: string): UiMessage {
  return { author: "user", text, turnNo };
}

function botMessage(
  turnNo: number,
  text: string,
  route: string,
  trace: TraceSummary | null | undefined,
): UiMessage {
  return { author: "bot", text, turnNo, route, trace: trace ?? null };
}

function renderBubble(message: UiMessage): HTMLLIElement {
  const li = document.createElement("li");
  li.className = `bubble ${message.author}`;
  li.dataset.turn = String(message.turnNo);

  const text = document.createElement("p");
  text.className = "text";
  text.textContent = message.text;
  li.appendChild(text);

  if (message.author === "bot") {
    const badge = document.createElement("span");
    badge.className = "badge";
    badge.dataset.testid = "route-badge";
    // badge text comes from the server's route field, never inferred here
    badge.textContent = message.route ?? "";
    li.appendChild(badge);

    if (message.trace) {
      const toggle = document.createElement("button");
      toggle.type = "button";
      toggle.className = "trace-toggle";
      toggle.textContent = "trace";
      const panel = document.createElement("pre");
      panel.className = "trace";
      panel.hidden = true;
      panel.textContent = JSON.stringify(message.trace, null, 2);
      toggle.addEventListener("click", () => {
        panel.hidden = !panel.hidden;
      });
      li.append(toggle, panel);
    }
  }
  return li;
}

export async function mount(root: HTMLElement, win: Window, baseUrl = ""): Promise<ChatApp> {
  const app = new ChatApp(root, new ChatApi(baseUrl), sessionIdFromFragment(win));
  await app.start();
  return app;
}

export type { SessionTurn, TraceSummary, UiMessage };
