import { GatewayClient } from "./api.js";
import { ConsoleApp } from "./app.js";

window.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("console");
  if (!root) {
    console.error("missing #console element");
    return;
  }
  const client = new GatewayClient(window.location.origin);
  const app = new ConsoleApp(root, client);
  void app.start();
});
