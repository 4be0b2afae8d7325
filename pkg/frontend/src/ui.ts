/** DOM layer: renders the SessionController one-to-one and forwards user
 * actions to it. All conversational logic lives in session.ts. */

import { NuanceKind } from "./api.js";
import { flagPanelModel, telemetryModel } from "./panel.js";
import { SessionController } from "./session.js";

export function mountChatUi(root: HTMLElement, controller: SessionController): void {
  root.innerHTML = `
    <div class="chat-layout">
      <section class="chat-main">
        <div class="transcript" id="transcript"></div>
        <form id="composer" class="composer">
          <input id="composer-input" type="text" autocomplete="off"
                 placeholder="Say something..." />
          <button id="composer-send" type="submit">Send</button>
        </form>
        <div id="status" class="status"></div>
      </section>
      <aside class="side">
        <h3>Nuance flags</h3>
        <div id="flag-panel"></div>
        <details id="telemetry">
          <summary>Telemetry</summary>
          <table id="telemetry-table"></table>
        </details>
      </aside>
    </div>`;

  const transcript = root.querySelector<HTMLDivElement>("#transcript")!;
  const form = root.querySelector<HTMLFormElement>("#composer")!;
  const input = root.querySelector<HTMLInputElement>("#composer-input")!;
  const send = root.querySelector<HTMLButtonElement>("#composer-send")!;
  const status = root.querySelector<HTMLDivElement>("#status")!;
  const flagPanel = root.querySelector<HTMLDivElement>("#flag-panel")!;
  const telemetryTable = root.querySelector<HTMLTableElement>("#telemetry-table")!;

  function renderTranscript(): void {
    transcript.innerHTML = "";
    for (const bubble of controller.transcript) {
      const el = document.createElement("div");
      el.className = `bubble ${bubble.speaker}`
        + (bubble.phase ? ` phase-${bubble.phase}` : "")
        + (bubble.transient ? " transient" : "")
        + (bubble.error ? " error" : "");
      if (bubble.phase) el.dataset.phase = bubble.phase;
      el.textContent = bubble.text;
      transcript.appendChild(el);
    }
    transcript.scrollTop = transcript.scrollHeight;
  }

  function renderFlags(): void {
    flagPanel.innerHTML = "";
    for (const row of flagPanelModel(controller.state)) {
      const wrap = document.createElement("div");
      wrap.className = "flag-row";
      const name = document.createElement("label");
      name.textContent = row.kind.replace("_", " ");
      const select = document.createElement("select");
      select.disabled = controller.inFlight;
      row.labels.forEach((label, i) => {
        const option = document.createElement("option");
        option.value = String(i);
        option.textContent = label;
        option.selected = i === row.activeIndex;
        select.appendChild(option);
      });
      select.addEventListener("change", () => {
        const index = Number(select.value);
        controller.pinNuance(row.kind as NuanceKind,
                             index === row.labels.length - 1 ? "free" : index);
      });
      const pin = document.createElement("button");
      pin.type = "button";
      pin.className = "pin" + (row.pinned ? " active" : "");
      pin.textContent = row.pinned ? "pinned" : "pin";
      pin.title = row.pinned ? "click to resume evolution" : "pin the selected value";
      pin.disabled = controller.inFlight;
      pin.addEventListener("click", () => {
        if (row.pinned) controller.clearPin(row.kind as NuanceKind);
        else controller.pinNuance(row.kind as NuanceKind,
                                  row.activeIndex === row.labels.length - 1
                                    ? "free" : row.activeIndex);
      });
      wrap.append(name, select, pin);
      flagPanel.appendChild(wrap);
    }
  }

  function renderTelemetry(): void {
    telemetryTable.innerHTML = "";
    for (const row of telemetryModel(controller.telemetry)) {
      const tr = document.createElement("tr");
      const k = document.createElement("td");
      k.textContent = row.label;
      const v = document.createElement("td");
      v.textContent = row.value;
      tr.append(k, v);
      telemetryTable.appendChild(tr);
    }
  }

  function render(): void {
    renderTranscript();
    renderFlags();
    renderTelemetry();
    const ready = controller.canSend();
    input.disabled = !ready;
    send.disabled = !ready;
    status.textContent = controller.inFlight
      ? "thinking..."
      : controller.lastError ? `last turn failed: ${controller.lastError}` : "";
  }

  controller.subscribe(render);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value;
    if (!text.trim() || !controller.canSend()) return;
    input.value = "";
    void controller.sendTurn(text);
  });
  render();
}
