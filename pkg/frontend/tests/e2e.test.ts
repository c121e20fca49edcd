// @vitest-environment jsdom
// End-to-end round trip against a real running service: two turns render
// four bubbles with the server's route badges, and a reload reconstructs
// the identical timeline from the session endpoint.
import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ChatApp } from "../src/app.js";
import { ChatApi } from "../src/api.js";

const PORT = 8199;
const BASE = `http://127.0.0.1:${PORT}`;
const REPO = resolve(__dirname, "..", "..");
const FIXTURES = join(REPO, "src", "chatpipe", "fixtures");

let server: ChildProcess;

async function waitForHealth(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/v1/health`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("service did not become healthy in time");
}

beforeAll(async () => {
  const work = mkdtempSync(join(tmpdir(), "chatpipe-e2e-"));
  const model = join(work, "router.bin");
  execFileSync(
    "python3",
    ["-m", "chatpipe.cli", "train-router",
     "--data", join(FIXTURES, "router_train.jsonl"),
     "--out", model, "--epochs", "30", "--lr", "1.0", "--seed", "0"],
    { stdio: "inherit" },
  );
  const config = join(work, "config.yaml");
  writeFileSync(
    config,
    [
      "version: 1",
      "resources:",
      `  corpus: ${join(FIXTURES, "corpus.jsonl")}`,
      `  gazetteer: ${join(FIXTURES, "gazetteer.tsv")}`,
      `  blocklist: ${join(FIXTURES, "blocklist.txt")}`,
      `  bank: ${join(FIXTURES, "bank.jsonl")}`,
      `  router_model: ${model}`,
      "",
    ].join("\n"),
  );
  server = spawn(
    "python3",
    ["-m", "chatpipe.cli", "serve", "--config", config, "--port", String(PORT)],
    { stdio: "ignore" },
  );
  await waitForHealth(30_000);
}, 60_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("UI round trip against the live service", () => {
  it("renders four bubbles for two turns and reconstructs them on reload", async () => {
    window.location.hash = "#s=e2e-round-trip";
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app")!;

    const app = new ChatApp(root, new ChatApi(BASE), "e2e-round-trip");
    await app.start();
    await app.send("Who sang Skyfall?");
    await app.send("Do you like it?");

    const bubbles = app.bubbles();
    expect(bubbles).toHaveLength(4);
    const kinds = bubbles.map((b) => (b.className.includes("user") ? "user" : "bot"));
    expect(kinds).toEqual(["user", "bot", "user", "bot"]);
    const badges = bubbles
      .filter((b) => b.className.includes("bot"))
      .map((b) => b.querySelector('[data-testid="route-badge"]')!.textContent);
    expect(badges).toEqual(["factual", "subjective"]);
    const texts = bubbles.map((b) => b.querySelector(".text")!.textContent);

    // fresh mount, same session: the timeline must rebuild identically
    document.body.innerHTML = '<div id="app"></div>';
    const root2 = document.getElementById("app")!;
    const reloaded = new ChatApp(root2, new ChatApi(BASE), "e2e-round-trip");
    await reloaded.start();
    const rebuilt = reloaded.bubbles();
    expect(rebuilt).toHaveLength(4);
    expect(rebuilt.map((b) => b.querySelector(".text")!.textContent)).toEqual(texts);
    expect(
      rebuilt
        .filter((b) => b.className.includes("bot"))
        .map((b) => b.querySelector('[data-testid="route-badge"]')!.textContent),
    ).toEqual(badges);
  }, 60_000);
});
