/** zod schemas of the documented service API; the contract tests validate
 * every payload the UI sends or receives against these. */

import { z } from "zod";

export const probabilityVector = z
  .array(z.number().min(0).max(1))
  .length(5)
  .refine((p) => Math.abs(p.reduce((a, b) => a + b, 0) - 1) <= 1e-6, {
    message: "probabilities must sum to 1",
  });

export const cycleSchema = z.object({
  start: z.number().int().nonnegative(),
  end: z.number().int().nonnegative(),
  label: z.string().min(1),
  probabilities: probabilityVector,
});

export const classifyResponseSchema = z.object({
  session_id: z.string().regex(/^[0-9a-f]{32}$/),
  label: z.string().min(1),
  label_index: z.number().int().min(0).max(4),
  probabilities: probabilityVector,
  class_names: z.array(z.string()).length(5),
  representation: z.enum(["gei", "sei"]),
  source: z.enum(["energy_image", "frames_archive"]),
  cycles: z.array(cycleSchema),
});

export const sessionInfoSchema = classifyResponseSchema;

export const layerSchema = z.object({
  index: z.number().int().nonnegative(),
  kind: z.literal("conv2d"),
  channels: z.number().int().positive(),
  spatial: z.tuple([z.number().int().positive(), z.number().int().positive()]),
});

export const layersResponseSchema = z.object({
  layers: z.array(layerSchema).length(5),
});

export const healthSchema = z.object({
  status: z.literal("ok"),
  model_loaded: z.literal(true),
  representation_kinds: z.array(z.enum(["gei", "sei"])).min(1),
});

export const errorSchema = z.object({
  error: z.object({
    code: z.string().min(1),
    message: z.string().min(1),
  }),
});

export const reportAcceptedSchema = z.object({
  status: z.literal("queued"),
  to: z.string().email(),
});

/** The documented request surface: every UI call must match one row. */
export const ROUTES: { method: string; pattern: RegExp }[] = [
  { method: "GET", pattern: /^\/api\/health$/ },
  { method: "POST", pattern: /^\/api\/classify$/ },
  { method: "GET", pattern: /^\/api\/session\/[0-9a-f]{32}$/ },
  { method: "GET", pattern: /^\/api\/session\/[0-9a-f]{32}\/layers$/ },
  {
    method: "GET",
    pattern: /^\/api\/session\/[0-9a-f]{32}\/feature-map\?layer=\d+&channel=\d+$/,
  },
  { method: "POST", pattern: /^\/api\/session\/[0-9a-f]{32}\/explain$/ },
  { method: "POST", pattern: /^\/api\/session\/[0-9a-f]{32}\/report$/ },
];

export function matchesDocumentedRoute(method: string, url: string): boolean {
  const path = url.replace(/^https?:\/\/[^/]+/, "");
  return ROUTES.some((r) => r.method === method && r.pattern.test(path));
}
