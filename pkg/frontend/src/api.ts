/** Typed client for the gaitworks REST API.
 *
 * Every request the UI makes goes through this module, so the contract
 * tests can replay and validate the exact surface the UI depends on.
 */

export interface CycleResult {
  start: number;
  end: number;
  label: string;
  probabilities: number[];
}

export interface ClassifyResponse {
  session_id: string;
  label: string;
  label_index: number;
  probabilities: number[];
  class_names: string[];
  representation: string;
  source: string;
  cycles: CycleResult[];
}

export type SessionInfo = ClassifyResponse;

export interface LayerInfo {
  index: number;
  kind: string;
  channels: number;
  spatial: [number, number];
}

export interface HealthResponse {
  status: string;
  model_loaded: boolean;
  representation_kinds: string[];
}

export interface ExplainResult {
  imageUrl: string;
  method: string;
  targetClass: number;
  targetLabel: string;
  layer: number | null;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function raiseFor(response: Response): Promise<never> {
  let code = "http_error";
  let message = `request failed with HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body && body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the generic message
  }
  throw new ApiError(response.status, code, message);
}

export class GaitworksClient {
  constructor(private base: string = "") {}

  url(path: string): string {
    return this.base + path;
  }

  async health(): Promise<HealthResponse> {
    const r = await fetch(this.url("/api/health"));
    if (!r.ok) await raiseFor(r);
    return r.json();
  }

  async classify(
    file: Blob,
    filename: string,
    representation: "gei" | "sei",
    fps: number,
  ): Promise<ClassifyResponse> {
    const form = new FormData();
    form.append("file", file, filename);
    form.append("representation", representation);
    form.append("fps", String(fps));
    const r = await fetch(this.url("/api/classify"), { method: "POST", body: form });
    if (!r.ok) await raiseFor(r);
    return r.json();
  }

  async session(id: string): Promise<SessionInfo> {
    const r = await fetch(this.url(`/api/session/${id}`));
    if (!r.ok) await raiseFor(r);
    return r.json();
  }

  async layers(id: string): Promise<LayerInfo[]> {
    const r = await fetch(this.url(`/api/session/${id}/layers`));
    if (!r.ok) await raiseFor(r);
    const body = await r.json();
    return body.layers;
  }

  featureMapUrl(id: string, layer: number, channel: number): string {
    return this.url(`/api/session/${id}/feature-map?layer=${layer}&channel=${channel}`);
  }

  async featureMap(id: string, layer: number, channel: number): Promise<Blob> {
    const r = await fetch(this.featureMapUrl(id, layer, channel));
    if (!r.ok) await raiseFor(r);
    return r.blob();
  }

  async explain(
    id: string,
    method: "saliency" | "gradcam",
    layer?: number,
    targetClass?: number,
  ): Promise<ExplainResult> {
    const body: Record<string, unknown> = { method };
    if (layer !== undefined) body.layer = layer;
    if (targetClass !== undefined) body.target_class = targetClass;
    const r = await fetch(this.url(`/api/session/${id}/explain`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!r.ok) await raiseFor(r);
    const blob = await r.blob();
    const layerHeader = r.headers.get("X-Explain-Layer");
    return {
      imageUrl: URL.createObjectURL(blob),
      method: r.headers.get("X-Explain-Method") ?? method,
      targetClass: Number(r.headers.get("X-Explain-Target-Class") ?? -1),
      targetLabel: r.headers.get("X-Explain-Target-Label") ?? "",
      layer: layerHeader === null ? null : Number(layerHeader),
    };
  }

  async report(id: string, email: string): Promise<{ status: string; to: string }> {
    const r = await fetch(this.url(`/api/session/${id}/report`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ email }),
    });
    if (!r.ok) await raiseFor(r);
    return r.json();
  }
}
