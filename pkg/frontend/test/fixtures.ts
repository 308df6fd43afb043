/** Canned API payloads used by the mocked-fetch tests. */

export const SESSION_ID = "0123456789abcdef0123456789abcdef";

export const CLASS_NAMES = [
  "diplegic",
  "hemiplegic",
  "neuropathic",
  "normal",
  "parkinsonian",
];

export const classifyFixture = {
  session_id: SESSION_ID,
  label: "hemiplegic",
  label_index: 1,
  probabilities: [0.02, 0.9, 0.03, 0.03, 0.02],
  class_names: CLASS_NAMES,
  representation: "gei",
  source: "frames_archive",
  cycles: [
    {
      start: 3,
      end: 24,
      label: "hemiplegic",
      probabilities: [0.02, 0.9, 0.03, 0.03, 0.02],
    },
  ],
};

export const layersFixture = {
  layers: [
    { index: 0, kind: "conv2d", channels: 32, spatial: [112, 112] },
    { index: 1, kind: "conv2d", channels: 32, spatial: [56, 56] },
    { index: 2, kind: "conv2d", channels: 32, spatial: [28, 28] },
    { index: 3, kind: "conv2d", channels: 64, spatial: [14, 14] },
    { index: 4, kind: "conv2d", channels: 64, spatial: [7, 7] },
  ],
};

export const healthFixture = {
  status: "ok",
  model_loaded: true,
  representation_kinds: ["gei", "sei"],
};

// 1x1 transparent PNG
export const PNG_BYTES = Uint8Array.from(
  atob(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mNk+P+/HgAFhAJ/wlseKgAAAABJRU5ErkJggg==",
  ),
  (c) => c.charCodeAt(0),
);

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function errorResponse(status: number, code: string, message: string): Response {
  return jsonResponse({ error: { code, message } }, status);
}

export function pngResponse(headers: Record<string, string> = {}): Response {
  return new Response(PNG_BYTES, {
    status: 200,
    headers: { "Content-Type": "image/png", ...headers },
  });
}
