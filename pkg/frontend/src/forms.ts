/**
 * Auto-generated call forms: one input per declared parameter, values
 * parsed back into wire values. A field accepts a number, a quoted or
 * bare string, or any JSON literal (lists/maps), so gradient(x, y) gets
 * two numeric boxes while echo(value) still accepts ["lists", 1].
 */
import type { FunctionDescriptor, ParamDescriptor } from "./api.js";

export interface FieldSpec {
  name: string;
  kind: "positional" | "keyword";
  required: boolean;
  placeholder: string;
  initial: string;
}

export function fieldSpecs(descriptor: FunctionDescriptor): FieldSpec[] {
  return descriptor.params.map((p: ParamDescriptor) => ({
    name: p.name,
    kind: p.kind,
    required: !("default" in p),
    placeholder: p.annotation ?? (p.kind === "keyword" ? "keyword" : "value"),
    initial: "default" in p ? JSON.stringify(p.default) : "",
  }));
}

/** Parse one field's text: JSON if it parses, otherwise a bare string. */
export function parseFieldValue(text: string): unknown {
  const trimmed = text.trim();
  if (trimmed === "") return null;
  try {
    return JSON.parse(trimmed);
  } catch {
    return trimmed; // students type B, not "B"
  }
}

export interface CallShape {
  args: unknown[];
  kwargs: Record<string, unknown>;
}

/**
 * Turn filled fields into (args, kwargs): positional params go in order,
 * keyword params by name; optional fields left blank are omitted.
 */
export function buildCall(
  specs: FieldSpec[],
  values: Record<string, string>,
): CallShape {
  const args: unknown[] = [];
  const kwargs: Record<string, unknown> = {};
  let positionalDone = false;
  for (const spec of specs) {
    const raw = (values[spec.name] ?? "").trim();
    if (raw === "") {
      if (spec.required) throw new Error(`parameter ${spec.name} is required`);
      positionalDone = true; // later positionals must become keywords
      continue;
    }
    const value = parseFieldValue(raw);
    if (spec.kind === "positional" && !positionalDone) args.push(value);
    else kwargs[spec.name] = value;
  }
  return { args, kwargs };
}

/** True when every ok-trajectory point is a 2-number position. */
export function argsArePlanar(points: { args: unknown[] }[]): boolean {
  return points.every(
    (p) =>
      Array.isArray(p.args) &&
      p.args.length === 2 &&
      p.args.every((v) => typeof v === "number"),
  );
}
