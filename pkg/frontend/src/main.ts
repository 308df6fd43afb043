import { GaitworksClient } from "./api.js";
import { initApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  const app = initApp(root, new GaitworksClient(""));
  void app.restoreFromHash();
}
