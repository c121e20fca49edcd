// Thin typed client for the chat service endpoints.

import type { ChatResponse, SessionHistory } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ChatApi {
  constructor(private readonly base: string = "") {}

  async sendTurn(sessionId: string, utterance: string): Promise<ChatResponse> {
    const resp = await fetch(`${this.base}/v1/chat`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, utterance }),
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, `chat failed with status ${resp.status}`);
    }
    return (await resp.json()) as ChatResponse;
  }

  async loadSession(sessionId: string): Promise<SessionHistory | null> {
    const resp = await fetch(`${this.base}/v1/session/${encodeURIComponent(sessionId)}`);
    if (resp.status === 404) {
      return null;
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, `session load failed with status ${resp.status}`);
    }
    return (await resp.json()) as SessionHistory;
  }

  async deleteSession(sessionId: string): Promise<void> {
    const resp = await fetch(`${this.base}/v1/session/${encodeURIComponent(sessionId)}`, {
      method: "DELETE",
    });
    if (!resp.ok && resp.status !== 404) {
      throw new ApiError(resp.status, `session delete failed with status ${resp.status}`);
    }
  }
}
