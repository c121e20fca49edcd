// Wire types mirroring the chat service's JSON bodies.

export interface ChatRequest {
  session_id: string;
  utterance: string;
}

export interface TraceSummary {
  turn_no: number;
  user_text: string;
  rewritten_text: string;
  factual_score: number;
  route: string;
  verdicts: string[];
  response: string;
  fallback_used: boolean;
  no_answer_fallthrough: boolean;
  [key: string]: unknown;
}

export interface ChatResponse {
  session_id: string;
  turn_no: number;
  response: string;
  route: string;
  rewritten: string;
  trace: TraceSummary;
}

export interface SessionTurn {
  turn_no: number;
  user: string;
  rewritten: string;
  route: string;
  response: string;
  trace: TraceSummary | null;
}

export interface SessionHistory {
  session_id: string;
  turns: SessionTurn[];
}

export interface UiMessage {
  author: "user" | "bot";
  text: string;
  turnNo: number;
  route?: string;
  trace?: TraceSummary | null;
}
