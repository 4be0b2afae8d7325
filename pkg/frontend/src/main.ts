import { HubClient } from "./api.js";
import { SessionController } from "./session.js";
import { mountChatUi } from "./ui.js";

function baseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("hub");
  const url = fromQuery ?? localStorage.getItem("hub_base_url") ?? "http://127.0.0.1:8750";
  localStorage.setItem("hub_base_url", url);
  return url.replace(/\/$/, "");
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const controller = new SessionController(new HubClient(baseUrl()));
  mountChatUi(root, controller);
  try {
    await controller.init();
  } catch (error) {
    root.insertAdjacentHTML(
      "beforeend",
      `<p class="boot-error">Cannot reach the hub at ${baseUrl()} — start it with
       <code>dialogue-hub --backend mock</code> or pass <code>?hub=http://host:port</code>.</p>`,
    );
    console.error(error);
  }
}

void boot();
