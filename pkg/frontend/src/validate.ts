/** Per-field validation for the batch table's edit buffers. */

export type FieldCheck = { ok: true; value: number } | { ok: false; error: string };

export function parseNumeric(raw: string): FieldCheck {
  const s = raw.trim();
  if (s === "") return { ok: false, error: "required" };
  const v = Number(s);
  if (Number.isNaN(v)) return { ok: false, error: "not a number" };
  if (!Number.isFinite(v)) return { ok: false, error: "must be finite" };
  return { ok: true, value: v };
}
