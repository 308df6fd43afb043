/** Small DOM builders for the result card, bars, grids and banners. */

import { ApiError, ClassifyResponse, LayerInfo } from "./api.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

/** Human guidance for API failures, keyed by the service's error codes. */
export function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    switch (err.code) {
      case "no_gait_cycle":
        return "No gait cycle detected — capture a longer walk with the whole body in view.";
      case "payload_too_large":
        return `Upload too large: ${err.message}`;
      case "unsupported_media_type":
        return "Unsupported file type — upload a PNG energy image or a ZIP of frame PNGs.";
      case "unknown_session":
        return "This session has expired — please upload again.";
      case "bad_email":
        return "That e-mail address does not look valid.";
      case "representation_unavailable":
        return "The server has no model for that representation.";
      default:
        return err.message;
    }
  }
  return err instanceof Error ? err.message : String(err);
}

export function probabilityBars(result: ClassifyResponse): HTMLElement {
  const wrap = el("div", "bars");
  result.class_names.forEach((name, i) => {
    const p = result.probabilities[i] ?? 0;
    const row = el("div", "bar-row");
    row.appendChild(el("span", "bar-label", name));
    const track = el("div", "bar-track");
    const fill = el("div", "bar-fill" + (name === result.label ? " bar-top" : ""));
    fill.style.width = `${(p * 100).toFixed(1)}%`;
    track.appendChild(fill);
    row.appendChild(track);
    row.appendChild(el("span", "bar-value", `${(p * 100).toFixed(1)}%`));
    wrap.appendChild(row);
  });
  return wrap;
}

export function resultCard(result: ClassifyResponse): HTMLElement {
  const card = el("section", "card result-card");
  card.appendChild(el("h2", "result-label", result.label));
  card.appendChild(
    el("p", "result-sub", `representation: ${result.representation.toUpperCase()}` +
      (result.cycles.length ? ` — ${result.cycles.length} gait cycle(s) analysed` : "")),
  );
  card.appendChild(probabilityBars(result));
  return card;
}

export function banner(message: string, kind: "error" | "info" = "error"): HTMLElement {
  return el("div", `banner banner-${kind}`, message);
}

export function layerOption(layer: LayerInfo): HTMLOptionElement {
  const option = el("option") as HTMLOptionElement;
  option.value = String(layer.index);
  option.textContent =
    `conv block ${layer.index + 1} — ${layer.channels} channels — ` +
    `${layer.spatial[0]}×${layer.spatial[1]}`;
  return option;
}
