import { ApiClient } from "./api.js";
import { ElicitationApp, ValidationApp } from "./app.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

window.addEventListener("load", () => {
  const base = param("base", "http://127.0.0.1:8765");
  const sessionId = param("session", "");
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app root");
  if (!sessionId) {
    root.textContent = "pass ?session=<id> (and optionally &base=<service url>)";
    return;
  }
  const api = new ApiClient(base);
  const app = sessionId.startsWith("v-")
    ? new ValidationApp(root, api, sessionId)
    : new ElicitationApp(root, api, sessionId, {
        blind: param("blind", "1") !== "0",
      });
  void app.start();
});
