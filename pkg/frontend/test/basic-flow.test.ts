// @vitest-environment jsdom
/** Basic mode: upload -> result card, overlay toggle, e-mail reporting. */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { GaitworksClient } from "../src/api.js";
import { initApp, AppHandle } from "../src/app.js";
import {
  classifyFixture,
  errorResponse,
  jsonResponse,
  pngResponse,
} from "./fixtures.js";
import { matchesDocumentedRoute } from "./schemas.js";

let handle: AppHandle;
let calls: { method: string; url: string }[];

function mountApp(router: (url: string, init?: RequestInit) => Response): void {
  calls = [];
  vi.stubGlobal(
    "fetch",
    vi.fn(async (url: string, init?: RequestInit) => {
      calls.push({ method: (init?.method ?? "GET").toUpperCase(), url });
      return router(url, init);
    }),
  );
  (URL as unknown as { createObjectURL: () => string }).createObjectURL = () => "blob:stub";
  document.body.innerHTML = '<div id="app"></div>';
  handle = initApp(document.getElementById("app")!, new GaitworksClient(""));
}

afterEach(() => {
  // the UI must only ever issue documented API calls
  for (const c of calls) {
    expect(matchesDocumentedRoute(c.method, c.url), `undocumented: ${c.method} ${c.url}`).toBe(true);
  }
  vi.unstubAllGlobals();
  window.location.hash = "";
});

const happyRouter = (url: string): Response => {
  if (url.endsWith("/api/classify")) return jsonResponse(classifyFixture);
  if (url.endsWith("/explain")) {
    return pngResponse({
      "X-Explain-Method": "gradcam",
      "X-Explain-Layer": "4",
      "X-Explain-Target-Class": "1",
      "X-Explain-Target-Label": "hemiplegic",
    });
  }
  if (url.endsWith("/report")) return errorResponse(501, "mail_disabled", "no gateway");
  throw new Error(`unrouted: ${url}`);
};

describe("basic mode", () => {
  beforeEach(() => mountApp(happyRouter));

  it("renders the result card with bars summing to 100%", async () => {
    await handle.classifyFile(new Blob([new Uint8Array(4)]), "walk.zip");
    expect(document.querySelector(".result-label")?.textContent).toBe("hemiplegic");
    const rows = document.querySelectorAll(".bar-row");
    expect(rows.length).toBe(5);
    const total = [...document.querySelectorAll<HTMLElement>(".bar-fill")]
      .map((n) => parseFloat(n.style.width))
      .reduce((a, b) => a + b, 0);
    expect(total).toBeCloseTo(100, 0);
    expect(window.location.hash).toContain(classifyFixture.session_id);
  });

  it("overlay toggle swaps the grad-CAM image without re-uploading", async () => {
    await handle.classifyFile(new Blob([new Uint8Array(4)]), "walk.zip");
    const before = calls.filter((c) => c.url.endsWith("/api/classify")).length;
    const btn = document.querySelector<HTMLButtonElement>('[data-method="gradcam"]')!;
    btn.click();
    await vi.waitFor(() => {
      expect(document.querySelector<HTMLImageElement>("#overlay-img")?.src).toContain("blob:");
    });
    expect(calls.filter((c) => c.url.endsWith("/api/classify")).length).toBe(before);
    expect(calls.some((c) => c.url.endsWith(`/api/session/${classifyFixture.session_id}/explain`))).toBe(true);
    expect(document.querySelector(".overlay-meta")?.textContent).toContain("hemiplegic");
  });

  it("hides the e-mail section when the service answers 501", async () => {
    await handle.classifyFile(new Blob([new Uint8Array(4)]), "walk.zip");
    expect(document.querySelector("#report-form")).toBeTruthy();
    const email = document.querySelector<HTMLInputElement>("#report-email")!;
    email.value = "doc@example.org";
    document
      .querySelector<HTMLFormElement>("#report-form")!
      .dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    await vi.waitFor(() => {
      expect(document.querySelector("#report-form")).toBeNull();
    });
  });
});

describe("basic mode error handling", () => {
  it("names the size limit on 413", async () => {
    mountApp(() => errorResponse(413, "payload_too_large",
      "upload exceeds the 8 MB limit"));
    await handle.classifyFile(new Blob([new Uint8Array(4)]), "big.zip");
    expect(document.querySelector(".banner-error")?.textContent).toContain("8 MB");
    expect(handle.state()).toBeNull();
  });

  it("turns no_gait_cycle into human guidance", async () => {
    mountApp(() => errorResponse(400, "no_gait_cycle", "no complete gait cycle found"));
    await handle.classifyFile(new Blob([new Uint8Array(4)]), "short.zip");
    expect(document.querySelector(".banner-error")?.textContent).toContain("longer walk");
  });

  it("reports an invalid e-mail inline without hiding the form", async () => {
    mountApp((url: string) => {
      if (url.endsWith("/api/classify")) return jsonResponse(classifyFixture);
      if (url.endsWith("/report")) return errorResponse(400, "bad_email", "invalid e-mail");
      throw new Error(`unrouted: ${url}`);
    });
    await handle.classifyFile(new Blob([new Uint8Array(4)]), "walk.zip");
    document.querySelector<HTMLInputElement>("#report-email")!.value = "x@@y";
    document
      .querySelector<HTMLFormElement>("#report-form")!
      .dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    await vi.waitFor(() => {
      expect(document.querySelector(".report-note")?.textContent).toContain("e-mail");
    });
    expect(document.querySelector("#report-form")).toBeTruthy();
  });
});
