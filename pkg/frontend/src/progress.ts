/**
 * View model for the progress screen. Wraps the latest progress document
 * and accumulates the partition/detector readings seen at each refresh so
 * they can be charted too. Every number here is lifted verbatim from a
 * service response; nothing is recomputed client-side.
 */

import type { ProgressDoc, ThetaWire } from "./api.js";

export interface SeriesPoint {
  x: number;
  y: number;
}

export interface PartitionSample {
  t: number;
  n_dirty: number;
  n_clean: number;
  detector_accuracy: number | null;
}

export class ProgressViewModel {
  doc: ProgressDoc | null = null;
  samples: PartitionSample[] = [];

  absorb(doc: ProgressDoc): void {
    this.doc = doc;
    const sample: PartitionSample = {
      t: doc.t,
      n_dirty: doc.n_dirty,
      n_clean: doc.n_clean,
      detector_accuracy: doc.detector_accuracy,
    };
    const at = this.samples.findIndex((s) => s.t === doc.t);
    if (at >= 0) this.samples[at] = sample;
    else this.samples.push(sample);
  }

  history(): ProgressDoc["history"] {
    return this.doc?.history ?? [];
  }

  /** Training loss per history point, x = step counter. */
  lossSeries(): SeriesPoint[] {
    return this.history().map((h) => ({ x: h.t, y: h.training_loss }));
  }

  /** Cumulative records cleaned per history point. */
  cleanedSeries(): SeriesPoint[] {
    return this.history().map((h) => ({ x: h.t, y: h.records_cleaned }));
  }

  dirtySizeSeries(): SeriesPoint[] {
    return this.samples.map((s) => ({ x: s.t, y: s.n_dirty }));
  }

  cleanSizeSeries(): SeriesPoint[] {
    return this.samples.map((s) => ({ x: s.t, y: s.n_clean }));
  }

  /** Chart series must stay in lockstep with the history; see invariants. */
  assertSeriesInvariant(): void {
    const n = this.history().length;
    if (this.lossSeries().length !== n || this.cleanedSeries().length !== n) {
      throw new Error("series length diverged from history length");
    }
  }

  /** Current model as served, repr strings untouched, for download. */
  thetaDownload(): { filename: string; mime: string; text: string } | null {
    if (!this.doc) return null;
    const body: { session_id: string; t: number; theta: ThetaWire } = {
      session_id: this.doc.session_id,
      t: this.doc.t,
      theta: this.doc.theta,
    };
    return {
      filename: `theta_${this.doc.session_id.slice(0, 8)}.json`,
      mime: "application/json",
      text: JSON.stringify(body, null, 2),
    };
  }
}
