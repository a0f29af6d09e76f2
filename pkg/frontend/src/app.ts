/**
 * Top-level application: session setup bar, batch pane on the left,
 * progress pane on the right, and a shared banner strip for conflicts
 * and connection loss. One session per tab; every action awaits the
 * service before the screen changes.
 */

import { Api, ApiError } from "./api.js";
import { BatchViewModel } from "./batch.js";
import { renderBatchScreen } from "./batch_screen.js";
import { ProgressViewModel } from "./progress.js";
import { renderProgressScreen } from "./progress_screen.js";
import { TagRegistry } from "./tags.js";
import { el, clear } from "./dom.js";

const LOSSES = ["linear_regression", "logistic_regression", "svm_binary", "svm_multiclass", "mean", "median"];
const STRATEGIES = ["AC", "AC_O", "AC_D", "AC_D_I", "AC_C", "AL"];

export interface AppOptions {
  retryDelayMs?: number;
}

export class App {
  api: Api | null = null;
  sessionId: string | null = null;
  tags = new TagRegistry();
  pvm = new ProgressViewModel();
  bvm: BatchViewModel | null = null;

  private bannerBox!: HTMLElement;
  private batchPane!: HTMLElement;
  private progressPane!: HTMLElement;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private readonly retryDelayMs: number;

  constructor(readonly root: HTMLElement, opts: AppOptions = {}) {
    this.retryDelayMs = opts.retryDelayMs ?? 2000;
  }

  mount(): void {
    clear(this.root);
    this.root.append(this.buildSetupBar());
    this.bannerBox = el("div", { class: "banner-box", "data-role": "banner-box" });
    this.root.append(this.bannerBox);
    const main = el("div", { class: "panes" });
    this.batchPane = el("section", { class: "pane", "data-role": "batch-pane" });
    this.progressPane = el("section", { class: "pane", "data-role": "progress-pane" });
    main.append(this.batchPane, this.progressPane);
    this.root.append(main);
    this.renderBatch();
    this.renderProgress();
  }

  private buildSetupBar(): HTMLElement {
    const bar = el("form", { class: "setup", "data-role": "setup" });
    bar.addEventListener("submit", (e) => e.preventDefault());
    const base = el("input", { "data-role": "base-url", value: "http://127.0.0.1:8000", size: "28" });
    const path = el("input", { "data-role": "dataset-path", placeholder: "dataset CSV path on the server", size: "34" });
    const loss = el("select", { "data-role": "loss" });
    for (const name of LOSSES) loss.append(el("option", { value: name, text: name }));
    const strategy = el("select", { "data-role": "strategy" });
    for (const name of STRATEGIES) strategy.append(el("option", { value: name, text: name }));
    const batch = el("input", { "data-role": "create-batch-size", type: "number", value: "50", min: "1", size: "5" });
    const budget = el("input", { "data-role": "create-budget", type: "number", value: "500", min: "1", size: "6" });
    const create = el("button", { "data-role": "create-session", text: "start session" });
    create.addEventListener("click", () => {
      void this.startSession({
        dataset_path: path.value.trim(),
        config: {
          loss: loss.value,
          strategy: strategy.value,
          batch_size: Number(batch.value),
          budget: Number(budget.value),
        },
      });
    });
    const attachId = el("input", { "data-role": "attach-id", placeholder: "existing session id", size: "26" });
    const attach = el("button", { "data-role": "attach-session", text: "attach" });
    attach.addEventListener("click", () => {
      void this.attach(attachId.value.trim());
    });
    bar.append(
      el("label", { text: "service " }, [base]),
      el("label", { text: "dataset " }, [path]),
      el("label", { text: "loss " }, [loss]),
      el("label", { text: "strategy " }, [strategy]),
      el("label", { text: "b " }, [batch]),
      el("label", { text: "k " }, [budget]),
      create,
      el("span", { class: "sep" }),
      attachId,
      attach,
      el("span", { class: "session-id", "data-role": "session-id", text: "" }),
    );
    this.baseInput = base;
    return bar;
  }

  private baseInput!: HTMLInputElement;

  private ensureApi(): Api {
    const url = this.baseInput.value.trim();
    if (!this.api || this.api.baseUrl !== url) this.api = new Api(url);
    return this.api;
  }

  private ensureSession(): { api: Api; sessionId: string } {
    const api = this.ensureApi();
    if (!this.sessionId) throw new Error("no session");
    return { api, sessionId: this.sessionId };
  }

  async startSession(payload: { dataset_path?: string; dataset_csv?: string; config: Record<string, unknown> }): Promise<void> {
    const api = this.ensureApi();
    try {
      const doc = await api.createSession(payload);
      this.adoptSession(doc.session_id);
      await this.refresh();
    } catch (err) {
      this.fail(err, () => void this.startSession(payload));
    }
  }

  async attach(sessionId: string): Promise<void> {
    this.ensureApi();
    this.adoptSession(sessionId);
    await this.refresh();
  }

  private adoptSession(sessionId: string): void {
    this.sessionId = sessionId;
    this.tags = new TagRegistry();
    this.pvm = new ProgressViewModel();
    this.bvm = null;
    this.clearBanner();
    const label = this.root.querySelector<HTMLElement>('[data-role="session-id"]');
    if (label) label.textContent = sessionId;
    this.renderBatch();
  }

  async refresh(): Promise<void> {
    if (!this.sessionId) {
      this.renderProgress();
      return;
    }
    try {
      const { api, sessionId } = this.ensureSession();
      const doc = await api.progress(sessionId);
      this.pvm.absorb(doc);
      this.clearBanner();
      this.renderProgress();
    } catch (err) {
      this.fail(err, () => void this.refresh());
    }
  }

  async loadBatch(): Promise<void> {
    try {
      const { api, sessionId } = this.ensureSession();
      const doc = await api.nextBatch(sessionId);
      this.bvm = new BatchViewModel(doc, this.tags);
      this.clearBanner();
      this.renderBatch();
    } catch (err) {
      if (err instanceof ApiError && err.status === 410) {
        this.bvm = null;
        this.renderBatch();
        this.showBanner("info", "session is done; no more batches");
        await this.refresh();
        return;
      }
      this.fail(err, () => void this.loadBatch());
    }
  }

  async submitBatch(): Promise<void> {
    if (!this.bvm || !this.bvm.canSubmit()) return;
    const repairs = this.bvm.toRepairs();
    try {
      const { api, sessionId } = this.ensureSession();
      await api.submitRepairs(sessionId, repairs);
      this.bvm = null;
      this.renderBatch();
      await this.refresh();
    } catch (err) {
      this.fail(err, () => void this.submitBatch());
    }
  }

  async applyConfig(batchSize: number | null, margin: number | null): Promise<void> {
    const changes: { batch_size?: number; margin_threshold?: number } = {};
    if (batchSize !== null) changes.batch_size = batchSize;
    if (margin !== null) changes.margin_threshold = margin;
    if (!Object.keys(changes).length) return;
    try {
      const { api, sessionId } = this.ensureSession();
      await api.updateConfig(sessionId, changes);
      await this.refresh();
    } catch (err) {
      this.fail(err, () => void this.applyConfig(batchSize, margin));
    }
  }

  async stopSession(): Promise<void> {
    try {
      const { api, sessionId } = this.ensureSession();
      await api.stop(sessionId);
      this.bvm = null;
      this.renderBatch();
      await this.refresh();
    } catch (err) {
      this.fail(err, () => void this.stopSession());
    }
  }

  private renderBatch(): void {
    renderBatchScreen(this.batchPane, this.bvm, {
      onSubmit: () => void this.submitBatch(),
      onNextBatch: () => void this.loadBatch(),
    });
  }

  private renderProgress(): void {
    renderProgressScreen(this.progressPane, this.pvm, {
      onApplyConfig: (b, m) => void this.applyConfig(b, m),
      onStop: () => void this.stopSession(),
      onRefresh: () => void this.refresh(),
    });
  }

  /**
   * Error routing: HTTP conflicts get a banner with a retry button and
   * leave state alone (the service rejected atomically); network failures
   * get a stale banner plus an automatic retry.
   */
  private fail(err: unknown, retry: () => void): void {
    if (err instanceof ApiError) {
      this.showBanner("conflict", `${err.status}: ${err.message}`, retry);
      return;
    }
    this.showBanner("stale", "connection lost — retrying…");
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      retry();
    }, this.retryDelayMs);
  }

  showBanner(kind: "conflict" | "stale" | "info", message: string, retry?: () => void): void {
    clear(this.bannerBox);
    const banner = el("div", { class: `banner ${kind}`, "data-role": "banner", "data-kind": kind });
    banner.append(el("span", { text: message }));
    if (retry) {
      const btn = el("button", { "data-role": "banner-retry", text: "retry" });
      btn.addEventListener("click", () => {
        this.clearBanner();
        retry();
      });
      banner.append(btn);
    }
    this.bannerBox.append(banner);
  }

  clearBanner(): void {
    clear(this.bannerBox);
  }
}
