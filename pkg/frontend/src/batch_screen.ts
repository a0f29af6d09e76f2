/**
 * Spreadsheet-style batch table. One row per proposed record: detector
 * hint, draw probability, an input per feature/label, a free-form error
 * tag, a mark-clean toggle, and the set-of-records "apply to matching"
 * action. Submit stays disabled until every record is resolved.
 */

import type { BatchViewModel, FieldKey } from "./batch.js";
import type { DetectionHint } from "./api.js";
import { el, clear } from "./dom.js";

export interface BatchHandlers {
  onSubmit: () => void;
  onNextBatch: () => void;
}

export function hintText(hint: DetectionHint): string {
  if (!hint.is_dirty) return "looks clean";
  const parts: string[] = [];
  if (hint.corrupted_features.length) parts.push(`features ${hint.corrupted_features.map((i) => `f${i}`).join(",")}`);
  if (hint.corrupted_labels.length) parts.push("label");
  const what = parts.length ? parts.join(" + ") : "unspecified";
  return `dirty: ${what} (class ${hint.error_class})`;
}

function updateGate(root: Element, vm: BatchViewModel): void {
  const submit = root.querySelector<HTMLButtonElement>('[data-role="submit-batch"]');
  const count = root.querySelector<HTMLElement>('[data-role="unresolved-count"]');
  if (!submit || !count) return;
  const unresolved = vm.unresolvedIds().length;
  submit.disabled = !vm.canSubmit();
  count.textContent = unresolved === 0 ? "all records resolved" : `${unresolved} unresolved`;
}

function refreshRowErrors(row: HTMLTableRowElement, vm: BatchViewModel, id: number): void {
  for (const input of row.querySelectorAll<HTMLInputElement>('[data-role="field-input"]')) {
    const key = input.dataset.field as FieldKey;
    const err = vm.fieldError(id, key);
    const span = input.parentElement?.querySelector<HTMLElement>('[data-role="field-error"]');
    input.classList.toggle("invalid", err !== null);
    if (span) span.textContent = err ?? "";
  }
}

export function renderBatchScreen(root: Element, vm: BatchViewModel | null, handlers: BatchHandlers): void {
  clear(root);
  const head = el("div", { class: "pane-head" });
  head.append(el("h2", { text: "Batch review" }));
  const next = el("button", { "data-role": "next-batch", text: "fetch next batch" });
  next.addEventListener("click", handlers.onNextBatch);
  head.append(next);
  root.append(head);

  if (!vm) {
    root.append(el("p", { class: "muted", "data-role": "no-batch", text: "No batch outstanding." }));
    return;
  }

  const meta = vm.doc.census
    ? `step ${vm.doc.t} — census batch: every remaining dirty record`
    : `step ${vm.doc.t} — ${vm.doc.records.length} records drawn`;
  root.append(el("p", { class: "muted", text: meta }));

  const table = el("table", { class: "batch-table", "data-role": "batch-table" });
  const headerRow = el("tr", {}, [
    el("th", { text: "id" }),
    el("th", { text: "hint" }),
    el("th", { text: "p(draw)" }),
  ]);
  for (const key of vm.fieldKeys()) {
    headerRow.append(el("th", { text: key.startsWith("y") ? `label ${key}` : key }));
  }
  headerRow.append(el("th", { text: "error tag" }), el("th", { text: "clean?" }), el("th", { text: "" }));
  table.append(el("thead", {}, [headerRow]));

  const datalist = el("datalist", { id: "known-tags" });
  for (const label of vm.tags.known()) {
    datalist.append(el("option", { value: label }));
  }
  root.append(datalist);

  const body = el("tbody");
  for (const row of vm.rows) {
    const id = row.record.id;
    const tr = el("tr", { "data-role": "batch-row", "data-id": String(id) });
    tr.append(el("td", { text: String(id) }));
    tr.append(el("td", { class: "hint", "data-role": "hint", text: hintText(row.record.hint) }));
    tr.append(el("td", { "data-role": "probability", text: String(row.record.probability) }));

    for (const key of vm.fieldKeys()) {
      const { value, error } = cellState(vm, id, key);
      const input = el("input", {
        "data-role": "field-input",
        "data-field": key,
        value,
        spellcheck: "false",
      });
      if (row.markedClean) input.disabled = true;
      if (error) input.classList.add("invalid");
      input.addEventListener("input", () => {
        vm.setField(id, key, input.value);
        refreshRowErrors(tr, vm, id);
        updateGate(root, vm);
      });
      const errSpan = el("span", { class: "field-error", "data-role": "field-error", text: error ?? "" });
      tr.append(el("td", {}, [input, errSpan]));
    }

    const tag = el("input", {
      "data-role": "tag-input",
      list: "known-tags",
      placeholder: "e.g. unit mismatch",
      value: row.tagBuf,
    });
    if (row.markedClean) tag.disabled = true;
    tag.addEventListener("input", () => {
      vm.setTag(id, tag.value);
    });
    tr.append(el("td", {}, [tag]));

    const clean = el("input", { type: "checkbox", "data-role": "mark-clean" });
    (clean as HTMLInputElement).checked = row.markedClean;
    clean.addEventListener("change", () => {
      vm.markClean(id, (clean as HTMLInputElement).checked);
      renderBatchScreen(root, vm, handlers); // toggles disable whole row
    });
    tr.append(el("td", {}, [clean]));

    const apply = el("button", {
      "data-role": "apply-matching",
      title: "apply this row's edits to all records sharing the same original value",
      text: "apply to matching",
    });
    apply.addEventListener("click", () => {
      const n = vm.applyEditToMatching(id);
      renderBatchScreen(root, vm, handlers);
      const note = root.querySelector<HTMLElement>('[data-role="apply-note"]');
      if (note) note.textContent = `applied to ${n} matching record${n === 1 ? "" : "s"}`;
    });
    tr.append(el("td", {}, [apply]));
    body.append(tr);
  }
  table.append(body);
  root.append(el("div", { class: "table-scroll" }, [table]));

  const foot = el("div", { class: "pane-foot" });
  const submit = el("button", { class: "primary", "data-role": "submit-batch", text: "submit cleaned batch" });
  submit.disabled = !vm.canSubmit();
  submit.addEventListener("click", handlers.onSubmit);
  foot.append(submit);
  foot.append(el("span", { class: "muted", "data-role": "unresolved-count", text: "" }));
  foot.append(el("span", { class: "muted", "data-role": "apply-note", text: "" }));
  root.append(foot);
  updateGate(root, vm);
}

function cellState(vm: BatchViewModel, id: number, key: FieldKey): { value: string; error: string | null } {
  const row = vm.row(id);
  const idx = Number(key.slice(1));
  const value = (key.startsWith("f") ? row.featureBuf[idx] : row.labelBuf[idx]) ?? "";
  return { value, error: vm.fieldError(id, key) };
}
