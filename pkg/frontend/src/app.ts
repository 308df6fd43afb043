/** Application wiring: basic upload-and-classify mode plus the advanced
 * layer/channel explorer. All state is derived from the service session;
 * reloading with #s=<session id> rebuilds the view from the API alone.
 */

import { ApiError, ClassifyResponse, GaitworksClient, LayerInfo } from "./api.js";
import { banner, clear, describeError, el, layerOption, resultCard } from "./ui.js";

const CHANNEL_PAGE_SIZE = 16;

export type Mode = "basic" | "advanced";

export interface UiSession {
  sessionId: string;
  result: ClassifyResponse;
  layers: LayerInfo[] | null;
  selectedLayer: number;
  selectedChannel: number;
  channelPage: number;
}

export interface AppHandle {
  state: () => UiSession | null;
  mode: () => Mode;
  setMode: (mode: Mode) => void;
  classifyFile: (file: Blob, filename: string) => Promise<void>;
  restoreFromHash: () => Promise<void>;
  root: HTMLElement;
}

export function initApp(root: HTMLElement, client: GaitworksClient): AppHandle {
  let session: UiSession | null = null;
  let mode: Mode = "basic";

  root.classList.add("gaitworks-app");
  const header = el("header");
  header.appendChild(el("h1", undefined, "gaitworks"));
  const modeSwitch = el("div", "mode-switch");
  const basicBtn = el("button", "mode-btn mode-active", "Basic");
  basicBtn.dataset.mode = "basic";
  const advancedBtn = el("button", "mode-btn", "Advanced");
  advancedBtn.dataset.mode = "advanced";
  modeSwitch.append(basicBtn, advancedBtn);
  header.appendChild(modeSwitch);

  const notices = el("div", "notices");
  const uploadCard = el("section", "card upload-card");
  const resultHost = el("div", "result-host");
  const explainHost = el("div", "explain-host");
  const reportHost = el("div", "report-host");
  const advancedHost = el("div", "advanced-host");
  root.append(header, notices, uploadCard, resultHost, explainHost, reportHost, advancedHost);

  // --- upload card -----------------------------------------------------------

  const uploadTitle = el("h2", undefined, "Upload a walk");
  const uploadHelp = el(
    "p",
    "help",
    "Basic mode: a ZIP of walking-person frames (green-screen or binary " +
      "silhouettes). Advanced mode also accepts a previously computed " +
      "224×224 GEI or SEI PNG directly.",
  );
  const fileInput = el("input") as HTMLInputElement;
  fileInput.type = "file";
  fileInput.id = "file-input";
  const reprSelect = el("select") as HTMLSelectElement;
  reprSelect.id = "representation";
  for (const kind of ["gei", "sei"]) {
    const option = el("option") as HTMLOptionElement;
    option.value = kind;
    option.textContent = kind.toUpperCase();
    reprSelect.appendChild(option);
  }
  const fpsInput = el("input") as HTMLInputElement;
  fpsInput.type = "number";
  fpsInput.id = "fps";
  fpsInput.value = "10";
  fpsInput.min = "1";
  const classifyBtn = el("button", "primary", "Classify") as HTMLButtonElement;
  classifyBtn.id = "classify-btn";
  const controls = el("div", "upload-controls");
  controls.append(fileInput, reprSelect, fpsInput, classifyBtn);
  uploadCard.append(uploadTitle, uploadHelp, controls);

  function notify(message: string, kind: "error" | "info" = "error"): void {
    clear(notices);
    notices.appendChild(banner(message, kind));
  }

  function clearNotices(): void {
    clear(notices);
  }

  function resetToUpload(message?: string): void {
    session = null;
    window.location.hash = "";
    clear(resultHost);
    clear(explainHost);
    clear(reportHost);
    clear(advancedHost);
    if (message) notify(message);
  }

  // --- basic mode: result + overlay toggle + report ----------------------------

  function renderResult(): void {
    if (!session) return;
    clear(resultHost);
    resultHost.appendChild(resultCard(session.result));
    renderOverlayControls();
    renderReportForm();
    if (mode === "advanced") renderAdvanced();
  }

  function renderOverlayControls(): void {
    if (!session) return;
    clear(explainHost);
    const card = el("section", "card overlay-card");
    card.appendChild(el("h3", undefined, "Where did the model look?"));
    const row = el("div", "overlay-buttons");
    const img = el("img", "overlay-img") as HTMLImageElement;
    img.id = "overlay-img";
    img.alt = "explanation overlay";
    const meta = el("p", "overlay-meta");
    for (const method of ["gradcam", "saliency"] as const) {
      const btn = el("button", "overlay-btn", method === "gradcam" ? "Grad-CAM" : "Saliency");
      btn.dataset.method = method;
      btn.addEventListener("click", async () => {
        if (!session) return;
        try {
          clearNotices();
          const result = await client.explain(session.sessionId, method);
          img.src = result.imageUrl;
          img.classList.add("visible");
          meta.textContent =
            `${result.method} for "${result.targetLabel}"` +
            (result.layer !== null ? ` (conv block ${result.layer + 1})` : "");
        } catch (err) {
          handleSessionError(err);
        }
      });
      row.appendChild(btn);
    }
    card.append(row, img, meta);
    explainHost.appendChild(card);
  }

  function renderReportForm(): void {
    if (!session) return;
    clear(reportHost);
    const card = el("section", "card report-card");
    card.appendChild(el("h3", undefined, "E-mail this result"));
    const form = el("form", "report-form") as HTMLFormElement;
    form.id = "report-form";
    const email = el("input") as HTMLInputElement;
    email.type = "email";
    email.id = "report-email";
    email.placeholder = "doctor@example.org";
    const send = el("button", "primary", "Send report") as HTMLButtonElement;
    const note = el("p", "report-note");
    form.append(email, send);
    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      if (!session) return;
      try {
        clearNotices();
        const res = await client.report(session.sessionId, email.value);
        note.textContent = `Report queued for ${res.to}.`;
      } catch (err) {
        if (err instanceof ApiError && err.status === 501) {
          // reports are disabled on this server: hide the whole section
          clear(reportHost);
          return;
        }
        if (err instanceof ApiError && err.code === "bad_email") {
          note.textContent = describeError(err);
          return;
        }
        handleSessionError(err);
      }
    });
    card.append(form, note);
    reportHost.appendChild(card);
  }

  // --- advanced mode: layer/channel explorer -------------------------------------

  async function ensureLayers(): Promise<LayerInfo[] | null> {
    if (!session) return null;
    if (session.layers) return session.layers;
    try {
      session.layers = await client.layers(session.sessionId);
      return session.layers;
    } catch (err) {
      handleSessionError(err);
      return null;
    }
  }

  function renderAdvanced(): void {
    void renderAdvancedAsync();
  }

  async function renderAdvancedAsync(): Promise<void> {
    if (!session || mode !== "advanced") {
      clear(advancedHost);
      return;
    }
    const layers = await ensureLayers();
    if (!layers || !session) return;
    clear(advancedHost);
    const card = el("section", "card advanced-card");
    card.appendChild(el("h3", undefined, "Feature-map explorer"));

    const layerSelect = el("select") as HTMLSelectElement;
    layerSelect.id = "layer-select";
    layers.forEach((layer) => layerSelect.appendChild(layerOption(layer)));
    layerSelect.value = String(session.selectedLayer);
    layerSelect.addEventListener("change", () => {
      if (!session) return;
      session.selectedLayer = Number(layerSelect.value);
      session.selectedChannel = 0;
      session.channelPage = 0;
      renderAdvanced();
    });
    card.appendChild(layerSelect);

    const layer = layers[session.selectedLayer];
    if (!layer) return;
    const grid = el("div", "channel-grid");
    grid.id = "channel-grid";
    const pageStart = session.channelPage * CHANNEL_PAGE_SIZE;
    for (let c = pageStart; c < Math.min(pageStart + CHANNEL_PAGE_SIZE, layer.channels); c++) {
      const cell = el("button", "channel-cell", String(c));
      cell.dataset.channel = String(c);
      if (c === session.selectedChannel) cell.classList.add("channel-active");
      cell.addEventListener("click", () => void selectChannel(c));
      grid.appendChild(cell);
    }
    card.appendChild(grid);

    const pager = el("div", "pager");
    const pages = Math.ceil(layer.channels / CHANNEL_PAGE_SIZE);
    const prev = el("button", "pager-btn", "‹ prev") as HTMLButtonElement;
    const next = el("button", "pager-btn", "next ›") as HTMLButtonElement;
    prev.disabled = session.channelPage === 0;
    next.disabled = session.channelPage >= pages - 1;
    prev.addEventListener("click", () => {
      if (!session || session.channelPage === 0) return;
      session.channelPage -= 1;
      renderAdvanced();
    });
    next.addEventListener("click", () => {
      if (!session || session.channelPage >= pages - 1) return;
      session.channelPage += 1;
      renderAdvanced();
    });
    pager.append(prev, el("span", "pager-info",
      `page ${session.channelPage + 1}/${pages}`), next);
    card.appendChild(pager);

    const fmImg = el("img", "feature-map-img") as HTMLImageElement;
    fmImg.id = "feature-map-img";
    fmImg.alt = `feature map, layer ${session.selectedLayer}, channel ${session.selectedChannel}`;
    card.appendChild(fmImg);

    // explanation panel with explicit layer choice
    const explainRow = el("div", "advanced-explain");
    const methodSelect = el("select") as HTMLSelectElement;
    methodSelect.id = "advanced-method";
    for (const m of ["gradcam", "saliency"]) {
      const option = el("option") as HTMLOptionElement;
      option.value = m;
      option.textContent = m;
      methodSelect.appendChild(option);
    }
    const runExplain = el("button", "primary", "Explain") as HTMLButtonElement;
    runExplain.id = "advanced-explain-btn";
    const exImg = el("img", "overlay-img") as HTMLImageElement;
    exImg.id = "advanced-overlay-img";
    runExplain.addEventListener("click", async () => {
      if (!session) return;
      try {
        clearNotices();
        const method = methodSelect.value as "gradcam" | "saliency";
        const result = await client.explain(
          session.sessionId,
          method,
          method === "gradcam" ? session.selectedLayer : undefined,
        );
        exImg.src = result.imageUrl;
        exImg.classList.add("visible");
      } catch (err) {
        handleSessionError(err);
      }
    });
    explainRow.append(methodSelect, runExplain);
    card.append(explainRow, exImg);

    advancedHost.appendChild(card);
    await selectChannel(session.selectedChannel, fmImg);
  }

  async function selectChannel(channel: number, imgNode?: HTMLImageElement): Promise<void> {
    if (!session) return;
    session.selectedChannel = channel;
    const img = imgNode ??
      (advancedHost.querySelector("#feature-map-img") as HTMLImageElement | null);
    if (!img) return;
    try {
      const blob = await client.featureMap(session.sessionId, session.selectedLayer, channel);
      img.src = URL.createObjectURL(blob);
      img.classList.add("visible");
      advancedHost.querySelectorAll(".channel-cell").forEach((cell) => {
        cell.classList.toggle("channel-active",
          (cell as HTMLElement).dataset.channel === String(channel));
      });
    } catch (err) {
      handleSessionError(err);
    }
  }

  // --- session lifecycle ------------------------------------------------------------

  function handleSessionError(err: unknown): void {
    if (err instanceof ApiError && err.status === 404) {
      resetToUpload(describeError(err));
      return;
    }
    notify(describeError(err));
  }

  async function classifyFile(file: Blob, filename: string): Promise<void> {
    clearNotices();
    classifyBtn.disabled = true;
    try {
      const result = await client.classify(
        file,
        filename,
        reprSelect.value as "gei" | "sei",
        Number(fpsInput.value) || 10,
      );
      session = {
        sessionId: result.session_id,
        result,
        layers: null,
        selectedLayer: 0,
        selectedChannel: 0,
        channelPage: 0,
      };
      window.location.hash = `s=${result.session_id}`;
      renderResult();
    } catch (err) {
      handleSessionError(err);
    } finally {
      classifyBtn.disabled = false;
    }
  }

  classifyBtn.addEventListener("click", () => {
    const file = fileInput.files?.[0];
    if (!file) {
      notify("Choose a frames archive or an energy-image PNG first.");
      return;
    }
    void classifyFile(file, file.name);
  });

  function setMode(next: Mode): void {
    mode = next;
    basicBtn.classList.toggle("mode-active", mode === "basic");
    advancedBtn.classList.toggle("mode-active", mode === "advanced");
    if (mode === "advanced" && session) {
      renderAdvanced();
    } else {
      clear(advancedHost);
    }
  }

  basicBtn.addEventListener("click", () => setMode("basic"));
  advancedBtn.addEventListener("click", () => setMode("advanced"));

  async function restoreFromHash(): Promise<void> {
    const match = window.location.hash.match(/s=([0-9a-f]{32})/);
    if (!match) return;
    try {
      const info = await client.session(match[1] as string);
      session = {
        sessionId: info.session_id,
        result: info,
        layers: null,
        selectedLayer: 0,
        selectedChannel: 0,
        channelPage: 0,
      };
      renderResult();
    } catch (err) {
      handleSessionError(err);
    }
  }

  return {
    state: () => session,
    mode: () => mode,
    setMode,
    classifyFile,
    restoreFromHash,
    root,
  };
}
