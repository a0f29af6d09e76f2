/**
 * Progress screen: convergence charts, session stats, history table, and
 * the live controls (batch size, margin threshold, stop + model download).
 * Displayed numbers are the service's values rendered with String(); no
 * rounding, so what you read is what the API returned.
 */

import type { ProgressViewModel } from "./progress.js";
import { renderLineChart } from "./chart.js";
import { el, clear } from "./dom.js";

export interface ProgressHandlers {
  onApplyConfig: (batchSize: number | null, margin: number | null) => void;
  onStop: () => void;
  onRefresh: () => void;
}

function stat(label: string, role: string, value: string): HTMLElement {
  return el("div", { class: "stat" }, [
    el("span", { class: "stat-label", text: label }),
    el("span", { class: "stat-value", "data-role": role, text: value }),
  ]);
}

export function renderProgressScreen(root: Element, pvm: ProgressViewModel, handlers: ProgressHandlers): void {
  clear(root);
  const head = el("div", { class: "pane-head" });
  head.append(el("h2", { text: "Progress" }));
  const refresh = el("button", { "data-role": "refresh", text: "refresh" });
  refresh.addEventListener("click", handlers.onRefresh);
  head.append(refresh);
  root.append(head);

  const doc = pvm.doc;
  if (!doc) {
    root.append(el("p", { class: "muted", text: "No session yet." }));
    return;
  }
  pvm.assertSeriesInvariant();

  const stats = el("div", { class: "stats" });
  stats.append(stat("status", "stat-status", doc.status));
  stats.append(stat("step", "stat-t", String(doc.t)));
  stats.append(stat("records", "stat-n", String(doc.n)));
  stats.append(stat("dirty", "stat-dirty", String(doc.n_dirty)));
  stats.append(stat("clean", "stat-clean", String(doc.n_clean)));
  stats.append(stat("cleaned", "stat-cleaned", String(doc.records_cleaned)));
  stats.append(stat("budget left", "stat-budget", `${doc.budget_remaining} / ${doc.budget}`));
  stats.append(stat("plan", "stat-plan", doc.plan_kind));
  stats.append(stat("detector", "stat-detector", doc.detector_mode));
  stats.append(
    stat("detector acc", "stat-detector-acc",
         doc.detector_accuracy === null ? "n/a" : String(doc.detector_accuracy)),
  );
  root.append(stats);

  root.append(el("div", { class: "loss-now" }, [
    el("span", { class: "stat-label", text: "training loss" }),
    el("span", { class: "loss-value", "data-role": "current-loss", text: String(doc.training_loss) }),
  ]));

  const charts = el("div", { class: "charts" });
  const lossBox = el("div", { class: "chart", "data-role": "chart-loss" });
  const cleanedBox = el("div", { class: "chart", "data-role": "chart-cleaned" });
  const partsBox = el("div", { class: "chart", "data-role": "chart-partitions" });
  renderLineChart(lossBox, "training loss", pvm.lossSeries());
  renderLineChart(cleanedBox, "records cleaned", pvm.cleanedSeries());
  renderLineChart(partsBox, "dirty partition size", pvm.dirtySizeSeries());
  charts.append(lossBox, cleanedBox, partsBox);
  root.append(charts);

  const hist = el("table", { class: "history-table", "data-role": "history-table" });
  hist.append(el("thead", {}, [el("tr", {}, [
    el("th", { text: "t" }),
    el("th", { text: "cleaned" }),
    el("th", { text: "training loss" }),
    el("th", { text: "test acc" }),
    el("th", { text: "rel err" }),
    el("th", { text: "ms" }),
  ])]));
  const body = el("tbody");
  for (const h of pvm.history()) {
    body.append(el("tr", { "data-role": "history-row" }, [
      el("td", { text: String(h.t) }),
      el("td", { text: String(h.records_cleaned) }),
      el("td", { "data-role": "loss-cell", text: String(h.training_loss) }),
      el("td", { text: h.test_accuracy === null ? "n/a" : String(h.test_accuracy) }),
      el("td", { text: h.rel_model_error === null ? "n/a" : String(h.rel_model_error) }),
      el("td", { text: String(h.wall_ms) }),
    ]));
  }
  hist.append(body);
  root.append(el("div", { class: "table-scroll" }, [hist]));

  const controls = el("div", { class: "controls" });
  const batchIn = el("input", {
    type: "number", min: "1", "data-role": "batch-size-input", value: String(doc.batch_size),
  });
  const marginIn = el("input", {
    type: "number", min: "0", step: "0.05", "data-role": "margin-input", value: "",
    placeholder: "margin threshold",
  });
  const apply = el("button", { "data-role": "apply-config", text: "apply from next batch" });
  apply.addEventListener("click", () => {
    const b = batchIn.value.trim() === "" ? null : Number(batchIn.value);
    const m = marginIn.value.trim() === "" ? null : Number(marginIn.value);
    handlers.onApplyConfig(b, m);
  });
  controls.append(
    el("label", { text: "batch size " }, [batchIn]),
    el("label", { text: "margin " }, [marginIn]),
    apply,
  );
  const stop = el("button", { class: "danger", "data-role": "stop-session", text: "stop session" });
  stop.disabled = doc.status === "done";
  stop.addEventListener("click", handlers.onStop);
  controls.append(stop);
  root.append(controls);

  if (doc.status === "done") {
    const dl = pvm.thetaDownload();
    if (dl) {
      const href = `data:${dl.mime};charset=utf-8,${encodeURIComponent(dl.text)}`;
      root.append(el("p", {}, [
        el("a", { "data-role": "theta-download", href, download: dl.filename, text: "download final model" }),
      ]));
    }
  }
}
