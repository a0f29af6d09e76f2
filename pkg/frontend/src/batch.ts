/**
 * View model for one proposed batch.
 *
 * Each record carries string edit buffers for its features and label(s),
 * a mark-clean toggle, and a free-form error-class tag. A record is
 * "resolved" once the analyst either marked it clean or made at least one
 * valid edit; submission stays disabled until every record is resolved
 * and no buffer fails validation. Repairs are built from the buffers
 * (or, for marked-clean records, from the service's own values untouched)
 * and flow out through submit_cleaned; there is no other write path.
 */

import type { BatchDoc, BatchRecord, RepairEntry } from "./api.js";
import { TagRegistry } from "./tags.js";
import { parseNumeric } from "./validate.js";

/** "f3" addresses feature 3, "y0" the first label slot. */
export type FieldKey = string;

export interface BatchRow {
  record: BatchRecord;
  featureBuf: string[];
  labelBuf: string[];
  tagBuf: string;
  markedClean: boolean;
}

function bufferFor(key: FieldKey, row: BatchRow): { buf: string[]; idx: number } {
  const idx = Number(key.slice(1));
  if (key.startsWith("f")) return { buf: row.featureBuf, idx };
  if (key.startsWith("y")) return { buf: row.labelBuf, idx };
  throw new Error(`bad field key ${key}`);
}

function originalFor(key: FieldKey, rec: BatchRecord): number {
  const idx = Number(key.slice(1));
  const v = key.startsWith("f") ? rec.x[idx] : rec.y[idx];
  if (v === undefined) throw new Error(`bad field key ${key}`);
  return v;
}

export class BatchViewModel {
  rows: BatchRow[];

  constructor(readonly doc: BatchDoc, readonly tags: TagRegistry) {
    this.rows = doc.records.map((record) => ({
      record,
      featureBuf: record.x.map((v) => String(v)),
      labelBuf: record.y.map((v) => String(v)),
      tagBuf: "",
      markedClean: false,
    }));
  }

  fieldKeys(): FieldKey[] {
    const first = this.doc.records[0];
    if (!first) return [];
    return [
      ...first.x.map((_, i) => `f${i}`),
      ...first.y.map((_, i) => `y${i}`),
    ];
  }

  row(id: number): BatchRow {
    const row = this.rows.find((r) => r.record.id === id);
    if (!row) throw new Error(`record ${id} is not in this batch`);
    return row;
  }

  setField(id: number, key: FieldKey, raw: string): void {
    const { buf, idx } = bufferFor(key, this.row(id));
    buf[idx] = raw;
  }

  setTag(id: number, raw: string): void {
    this.row(id).tagBuf = raw;
  }

  markClean(id: number, on: boolean): void {
    this.row(id).markedClean = on;
  }

  edited(id: number, key: FieldKey): boolean {
    const row = this.row(id);
    const { buf, idx } = bufferFor(key, row);
    return buf[idx] !== String(originalFor(key, row.record));
  }

  anyEdited(id: number): boolean {
    return this.fieldKeys().some((k) => this.edited(id, k));
  }

  /** Validation message for one buffer, or null. Ignored once marked clean. */
  fieldError(id: number, key: FieldKey): string | null {
    const row = this.row(id);
    if (row.markedClean) return null;
    const { buf, idx } = bufferFor(key, row);
    const check = parseNumeric(buf[idx] ?? "");
    return check.ok ? null : check.error;
  }

  resolved(id: number): boolean {
    const row = this.row(id);
    if (row.markedClean) return true;
    if (!this.anyEdited(id)) return false;
    return this.fieldKeys().every((k) => this.fieldError(id, k) === null);
  }

  unresolvedIds(): number[] {
    return this.rows.filter((r) => !this.resolved(r.record.id)).map((r) => r.record.id);
  }

  canSubmit(): boolean {
    return this.rows.length > 0 && this.unresolvedIds().length === 0;
  }

  /**
   * Set-of-records action: push the source row's valid edits (and its tag)
   * onto every other record whose original value matches the source's
   * original value in that field, i.e. records sharing the inconsistency.
   * Returns how many other records were touched.
   */
  applyEditToMatching(sourceId: number): number {
    const source = this.row(sourceId);
    const touched = new Set<number>();
    for (const key of this.fieldKeys()) {
      if (!this.edited(sourceId, key)) continue;
      const { buf, idx } = bufferFor(key, source);
      const raw = buf[idx] ?? "";
      if (!parseNumeric(raw).ok) continue;
      const origin = originalFor(key, source.record);
      for (const other of this.rows) {
        if (other.record.id === sourceId || other.markedClean) continue;
        if (originalFor(key, other.record) !== origin) continue;
        const target = bufferFor(key, other);
        target.buf[target.idx] = raw;
        touched.add(other.record.id);
      }
    }
    for (const id of touched) {
      this.row(id).tagBuf = source.tagBuf;
    }
    return touched.size;
  }

  /** Repairs for submit_cleaned; throws while any record is unresolved. */
  toRepairs(): RepairEntry[] {
    if (!this.canSubmit()) {
      throw new Error(`unresolved records: ${this.unresolvedIds().join(", ")}`);
    }
    return this.rows.map((row) => {
      if (row.markedClean) {
        return {
          id: row.record.id,
          x: [...row.record.x],
          y: [...row.record.y],
          error_class: 0,
        };
      }
      const num = (raw: string): number => {
        const check = parseNumeric(raw);
        if (!check.ok) throw new Error(check.error);
        return check.value;
      };
      return {
        id: row.record.id,
        x: row.featureBuf.map(num),
        y: row.labelBuf.map(num),
        error_class: this.tags.toInt(row.tagBuf),
      };
    });
  }
}
