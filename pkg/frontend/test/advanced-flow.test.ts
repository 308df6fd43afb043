// @vitest-environment jsdom
/** Advanced mode: layer dropdown, paginated channel grid, session recovery. */

import { afterEach, describe, expect, it, vi } from "vitest";

import { GaitworksClient } from "../src/api.js";
import { initApp, AppHandle } from "../src/app.js";
import {
  classifyFixture,
  errorResponse,
  jsonResponse,
  layersFixture,
  pngResponse,
  SESSION_ID,
} from "./fixtures.js";
import { matchesDocumentedRoute } from "./schemas.js";

let handle: AppHandle;
let calls: string[];
let methods: string[];

function mountApp(router: (url: string, init?: RequestInit) => Response): void {
  calls = [];
  methods = [];
  vi.stubGlobal(
    "fetch",
    vi.fn(async (url: string, init?: RequestInit) => {
      calls.push(url);
      methods.push((init?.method ?? "GET").toUpperCase());
      return router(url, init);
    }),
  );
  (URL as unknown as { createObjectURL: () => string }).createObjectURL = () => "blob:stub";
  document.body.innerHTML = '<div id="app"></div>';
  handle = initApp(document.getElementById("app")!, new GaitworksClient(""));
}

afterEach(() => {
  // the UI must only ever issue documented API calls
  calls.forEach((url, i) => {
    expect(matchesDocumentedRoute(methods[i] ?? "GET", url), `undocumented: ${url}`).toBe(true);
  });
  vi.unstubAllGlobals();
  window.location.hash = "";
});

const advancedRouter = (url: string): Response => {
  if (url.endsWith("/api/classify")) return jsonResponse(classifyFixture);
  if (url.endsWith(`/api/session/${SESSION_ID}`)) return jsonResponse(classifyFixture);
  if (url.endsWith("/layers")) return jsonResponse(layersFixture);
  if (url.includes("/feature-map")) return pngResponse();
  if (url.endsWith("/explain")) {
    return pngResponse({ "X-Explain-Method": "gradcam", "X-Explain-Layer": "2",
                         "X-Explain-Target-Class": "1", "X-Explain-Target-Label": "hemiplegic" });
  }
  throw new Error(`unrouted: ${url}`);
};

async function classifiedAdvancedApp(): Promise<void> {
  mountApp(advancedRouter);
  await handle.classifyFile(new Blob([new Uint8Array(4)]), "walk.zip");
  handle.setMode("advanced");
  await vi.waitFor(() => {
    expect(document.querySelector("#layer-select")).toBeTruthy();
  });
}

describe("advanced mode", () => {
  it("populates the layer dropdown from /layers", async () => {
    await classifiedAdvancedApp();
    const select = document.querySelector<HTMLSelectElement>("#layer-select")!;
    expect(select.options.length).toBe(5);
    expect(select.options[0]?.textContent).toContain("32 channels");
    expect(select.options[4]?.textContent).toContain("7×7");
  });

  it("clicking a channel fetches exactly that feature map", async () => {
    await classifiedAdvancedApp();
    const cell = document.querySelector<HTMLButtonElement>('[data-channel="12"]')!;
    cell.click();
    await vi.waitFor(() => {
      expect(calls.some((u) => u.endsWith("/feature-map?layer=0&channel=12"))).toBe(true);
    });
    const img = document.querySelector<HTMLImageElement>("#feature-map-img")!;
    expect(img.src).toContain("blob:");
  });

  it("paginates the channel grid within bounds", async () => {
    await classifiedAdvancedApp();
    let cells = document.querySelectorAll(".channel-cell");
    expect(cells.length).toBe(16); // 32 channels, page size 16
    const prev = document.querySelector<HTMLButtonElement>(".pager-btn")!;
    expect(prev.disabled).toBe(true); // bounded controls: no page -1
    const next = document.querySelectorAll<HTMLButtonElement>(".pager-btn")[1]!;
    next.click();
    await vi.waitFor(() => {
      expect(document.querySelector(".pager-info")?.textContent).toBe("page 2/2");
    });
    cells = document.querySelectorAll(".channel-cell");
    expect(cells[0]?.textContent).toBe("16");
    expect([...document.querySelectorAll<HTMLButtonElement>(".pager-btn")][1]?.disabled).toBe(true);
  });

  it("switching to a 64-channel layer rebuilds the grid", async () => {
    await classifiedAdvancedApp();
    const select = document.querySelector<HTMLSelectElement>("#layer-select")!;
    select.value = "4";
    select.dispatchEvent(new Event("change"));
    await vi.waitFor(() => {
      expect(document.querySelector(".pager-info")?.textContent).toBe("page 1/4");
    });
    expect(calls.some((u) => u.endsWith("/feature-map?layer=4&channel=0"))).toBe(true);
  });

  it("grad-CAM explain sends the selected layer", async () => {
    await classifiedAdvancedApp();
    const select = document.querySelector<HTMLSelectElement>("#layer-select")!;
    select.value = "2";
    select.dispatchEvent(new Event("change"));
    await vi.waitFor(() => expect(document.querySelector("#advanced-explain-btn")).toBeTruthy());
    document.querySelector<HTMLButtonElement>("#advanced-explain-btn")!.click();
    await vi.waitFor(() => {
      const img = document.querySelector<HTMLImageElement>("#advanced-overlay-img");
      expect(img?.src).toContain("blob:");
    });
  });

  it("resets to the upload state when the session expires", async () => {
    await classifiedAdvancedApp();
    // subsequent session calls now 404
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => errorResponse(404, "unknown_session", "session expired")),
    );
    document.querySelector<HTMLButtonElement>('[data-channel="3"]')!.click();
    await vi.waitFor(() => {
      expect(document.querySelector(".banner-error")?.textContent).toContain("expired");
    });
    expect(handle.state()).toBeNull();
    expect(window.location.hash).toBe("");
    expect(document.querySelector(".result-card")).toBeNull();
  });
});

describe("session recovery", () => {
  it("rebuilds the result view from the session id in the URL hash", async () => {
    mountApp(advancedRouter);
    window.location.hash = `s=${SESSION_ID}`;
    await handle.restoreFromHash();
    expect(document.querySelector(".result-label")?.textContent).toBe("hemiplegic");
    expect(handle.state()?.sessionId).toBe(SESSION_ID);
  });

  it("clears a stale session id after a 404", async () => {
    mountApp(() => errorResponse(404, "unknown_session", "session expired"));
    window.location.hash = `s=${SESSION_ID}`;
    await handle.restoreFromHash();
    expect(handle.state()).toBeNull();
    expect(window.location.hash).toBe("");
  });
});
