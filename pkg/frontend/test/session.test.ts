import assert from "node:assert/strict";
import { test } from "node:test";

import { DialogueState, FetchLike, HubClient, NUANCE_KINDS } from "../src/api.js";
import { SessionController } from "../src/session.js";

function initialState(): DialogueState {
  return {
    version: 1,
    current_topic: "everyday_life",
    coverage: {},
    prefs: {},
    memory: [],
    nuance_values: {
      diversity: ["Italian", "good mental health", "good physical health"],
      time: ["evening", "winter", "almost Easter"],
      place: ["house", "Genoa", "Italy"],
      tone: ["humorous", "kind", "dramatic", "controversial",
             "aggressive", "teasing", "alarmist", "worried"],
      speech_act: ["assertive", "commissive", "expressive", "directive"],
    },
    nuance_flags: { diversity: 3, time: 3, place: 3, tone: 8, speech_act: 4 },
    last_sentence_type: null,
    turn_counter: 0,
    pinned: [],
    pending: null,
  };
}

interface Captured {
  url: string;
  body: any;
}

/** Scripted hub double: returns canned responses, captures request bodies. */
function stubHub(options: { failFirst?: boolean; failContinuation?: boolean } = {}) {
  const captured: Captured[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    captured.push({ url, body });
    const json = (payload: unknown, status = 200) =>
      new Response(JSON.stringify(payload), {
        status,
        headers: { "Content-Type": "application/json" },
      });
    if (url.endsWith("/v1/health")) {
      return json({ status: "healthy", backend: "mock", topics: 3,
                    initial_state: initialState() });
    }
    if (url.endsWith("/v1/dialogue/first")) {
      if (options.failFirst) return json({ detail: "backend scripted to time out" }, 504);
      const state = body.dialogue_state as DialogueState;
      const next = { ...state, pending: { marker: true } };
      return json({
        filler_sentence: "Let me think...",
        reply_sentence: "How nice to hear that.",
        dialogue_state: next,
        telemetry: {
          latencies_ms: { topic: 300, reply: 900 },
          tokens: { reply: { prompt: 120, completion: 12 } },
          detected_tone: "humorous",
          detected_topic: null,
          detected_sentiment: null,
          diversity_cost: {
            diversity: { tokens: 22, fraction: 0.06 },
            tone_detection: { tokens: 105, fraction: 0.3 },
            total_prompt_tokens: 325,
          },
        },
      });
    }
    if (url.endsWith("/v1/dialogue/continuation")) {
      if (options.failContinuation) return json({ detail: "boom" }, 502);
      const state = body.dialogue_state as DialogueState;
      const next: DialogueState = {
        ...state,
        pending: null,
        turn_counter: state.turn_counter + 1,
        nuance_flags: { ...state.nuance_flags, tone: 0 }, // humorous override visible
      };
      return json({
        continuation_sentence: "Shall we talk gardens?",
        dialogue_state: next,
        telemetry: { latency_ms: 700, sentence_type: "open_question",
                     diversity_cost: {}, record: {} },
      });
    }
    return json({ detail: "not found" }, 404);
  };
  return { fetchImpl, captured };
}

function controllerWith(options: Parameters<typeof stubHub>[0] = {}) {
  const { fetchImpl, captured } = stubHub(options);
  const controller = new SessionController(new HubClient("http://hub.test", fetchImpl), "s-test");
  return { controller, captured };
}

test("happy path renders filler, reply, continuation in order", async () => {
  const { controller } = controllerWith();
  await controller.init();
  await controller.sendTurn("Hello out there!");
  const phases = controller.transcript
    .filter((b) => b.phase !== undefined)
    .map((b) => b.phase);
  assert.deepEqual(phases, ["filler", "reply", "continuation"]);
  assert.equal(controller.transcript[0]?.speaker, "user");
  assert.equal(controller.transcript[1]?.transient, true);
  assert.equal(controller.state?.turn_counter, 1);
  assert.equal(controller.lastError, null);
});

test("flag panel state comes verbatim from the server response", async () => {
  const { controller } = controllerWith();
  await controller.init();
  await controller.sendTurn("Something funny!");
  // stub's continuation response set the tone flag to humorous (0)
  assert.equal(controller.state?.nuance_flags.tone, 0);
});

test("input locks while a turn is in flight", async () => {
  const { controller } = controllerWith();
  await controller.init();
  assert.equal(controller.canSend(), true);
  const turn = controller.sendTurn("Hold the line");
  assert.equal(controller.inFlight, true);
  assert.equal(controller.canSend(), false);
  await assert.rejects(() => controller.sendTurn("Too eager"), /in flight/);
  await turn;
  assert.equal(controller.canSend(), true);
});

test("pinning sets the flag and travels in the next envelope", async () => {
  const { controller, captured } = controllerWith();
  await controller.init();
  controller.pinNuance("diversity", 0);
  assert.equal(controller.state?.nuance_flags.diversity, 0);
  assert.deepEqual(controller.state?.pinned, ["diversity"]);
  await controller.sendTurn("Pinned now.");
  const firstCall = captured.find((c) => c.url.endsWith("/first"));
  assert.ok(firstCall);
  assert.equal(firstCall.body.dialogue_state.nuance_flags.diversity, 0);
  assert.deepEqual(firstCall.body.dialogue_state.pinned, ["diversity"]);
});

test("pinning 'free' selects the unpaired slot; clearing resumes evolution", async () => {
  const { controller, captured } = controllerWith();
  await controller.init();
  controller.pinNuance("tone", "free");
  assert.equal(controller.state?.nuance_flags.tone, 8);
  controller.clearPin("tone");
  assert.deepEqual(controller.state?.pinned, []);
  await controller.sendTurn("Unpinned again.");
  const firstCall = captured.find((c) => c.url.endsWith("/first"));
  assert.deepEqual(firstCall?.body.dialogue_state.pinned, []);
});

test("pinning during a turn is rejected", async () => {
  const { controller } = controllerWith();
  await controller.init();
  const turn = controller.sendTurn("Busy now");
  assert.throws(() => controller.pinNuance("tone", 0), /in flight/);
  await turn;
});

test("failed first call rolls state back and re-enables input", async () => {
  const { controller } = controllerWith({ failFirst: true });
  await controller.init();
  const before = JSON.stringify(controller.state);
  await controller.sendTurn("Doomed turn");
  assert.equal(JSON.stringify(controller.state), before);
  assert.equal(controller.canSend(), true);
  const last = controller.transcript[controller.transcript.length - 1];
  assert.equal(last?.error, true);
  assert.match(last?.text ?? "", /timed? out|scripted/i);
});

test("failed continuation rolls back the phase-one state too", async () => {
  const { controller } = controllerWith({ failContinuation: true });
  await controller.init();
  const before = JSON.stringify(controller.state);
  await controller.sendTurn("Half a turn");
  assert.equal(JSON.stringify(controller.state), before);
  assert.equal(controller.state?.pending, null);
  assert.equal(controller.canSend(), true);
});

test("state is only replaced by responses, never edited (except pins)", async () => {
  const { controller, captured } = controllerWith();
  await controller.init();
  const sent = JSON.stringify(controller.state);
  await controller.sendTurn("Checking identity");
  const firstCall = captured.find((c) => c.url.endsWith("/first"));
  assert.equal(JSON.stringify(firstCall?.body.dialogue_state), sent);
});

test("every nuance kind is pinnable", async () => {
  const { controller } = controllerWith();
  await controller.init();
  for (const kind of NUANCE_KINDS) {
    controller.pinNuance(kind, 0);
  }
  assert.deepEqual([...(controller.state?.pinned ?? [])].sort(),
                   [...NUANCE_KINDS].sort());
});
