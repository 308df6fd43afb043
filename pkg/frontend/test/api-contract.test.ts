/** Every request the client can issue must match the documented routes, and
 * every fixture must satisfy the response schemas. */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiError, GaitworksClient } from "../src/api.js";
import {
  classifyFixture,
  errorResponse,
  healthFixture,
  jsonResponse,
  layersFixture,
  pngResponse,
  SESSION_ID,
} from "./fixtures.js";
import {
  classifyResponseSchema,
  errorSchema,
  healthSchema,
  layersResponseSchema,
  matchesDocumentedRoute,
  reportAcceptedSchema,
  sessionInfoSchema,
} from "./schemas.js";

const requests: { method: string; url: string; body?: unknown }[] = [];

function route(url: string, init?: RequestInit): Response {
  const method = (init?.method ?? "GET").toUpperCase();
  requests.push({ method, url, body: init?.body });
  if (url.endsWith("/api/health")) return jsonResponse(healthFixture);
  if (url.endsWith("/api/classify")) return jsonResponse(classifyFixture);
  if (url.endsWith(`/api/session/${SESSION_ID}`)) return jsonResponse(classifyFixture);
  if (url.endsWith("/layers")) return jsonResponse(layersFixture);
  if (url.includes("/feature-map")) return pngResponse();
  if (url.endsWith("/explain")) {
    return pngResponse({
      "X-Explain-Method": "gradcam",
      "X-Explain-Layer": "4",
      "X-Explain-Target-Class": "1",
      "X-Explain-Target-Label": "hemiplegic",
    });
  }
  if (url.endsWith("/report")) return jsonResponse({ status: "queued", to: "a@b.org" }, 202);
  throw new Error(`unrouted request: ${method} ${url}`);
}

beforeEach(() => {
  requests.length = 0;
  vi.stubGlobal("fetch", vi.fn(async (url: string, init?: RequestInit) => route(url, init)));
  vi.stubGlobal("URL", Object.assign(URL, { createObjectURL: () => "blob:stub" }));
});

afterEach(() => vi.unstubAllGlobals());

describe("client requests match the documented API", () => {
  it("drives every endpoint and validates request shapes", async () => {
    const client = new GaitworksClient("");
    const health = await client.health();
    healthSchema.parse(health);

    const result = await client.classify(new Blob([new Uint8Array(8)]), "u.png", "gei", 10);
    classifyResponseSchema.parse(result);
    expect(result.probabilities.reduce((a, b) => a + b, 0)).toBeCloseTo(1, 6);

    sessionInfoSchema.parse(await client.session(SESSION_ID));
    layersResponseSchema.parse({ layers: await client.layers(SESSION_ID) });
    await client.featureMap(SESSION_ID, 0, 12);
    const explain = await client.explain(SESSION_ID, "gradcam", 4, 1);
    expect(explain.layer).toBe(4);
    expect(explain.targetLabel).toBe("hemiplegic");
    reportAcceptedSchema.parse(await client.report(SESSION_ID, "a@b.org"));

    for (const req of requests) {
      expect(
        matchesDocumentedRoute(req.method, req.url),
        `undocumented request: ${req.method} ${req.url}`,
      ).toBe(true);
    }
    // classify must be multipart with the documented fields
    const classifyReq = requests.find((r) => r.url.endsWith("/api/classify"));
    const form = classifyReq?.body as FormData;
    expect(form.get("representation")).toBe("gei");
    expect(form.get("fps")).toBe("10");
    expect(form.get("file")).toBeTruthy();
    // explain carries a JSON body with the documented keys
    const explainReq = requests.find((r) => r.url.endsWith("/explain"));
    expect(JSON.parse(String(explainReq?.body))).toEqual({
      method: "gradcam",
      layer: 4,
      target_class: 1,
    });
  });

  it("surfaces service errors as ApiError with code and message", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => errorResponse(400, "no_gait_cycle", "no complete gait cycle found")),
    );
    const client = new GaitworksClient("");
    const err = await client
      .classify(new Blob([1 as unknown as BlobPart]), "x.zip", "gei", 10)
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(400);
    expect(err.code).toBe("no_gait_cycle");
  });

  it("fixtures satisfy the wire schemas", () => {
    classifyResponseSchema.parse(classifyFixture);
    layersResponseSchema.parse(layersFixture);
    healthSchema.parse(healthFixture);
    errorSchema.parse({ error: { code: "x", message: "y" } });
  });
});
