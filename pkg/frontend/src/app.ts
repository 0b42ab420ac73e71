// Controllers wiring the API client to the views. One in-flight mutation at
// a time; every user action funnels through choose(), which is retry-safe
// because the service acks repeated (query_id, choice) pairs idempotently.

import { ApiClient, Choice, QueryPayload, StaleQueryError } from "./api.js";
import {
  el,
  renderCompletionView,
  renderQueryView,
  renderValidationSummary,
  renderWaiting,
} from "./views.js";

export interface AppOptions {
  blind?: boolean;
  allowNoPreference?: boolean;
  pollMs?: number;
}

export class ElicitationApp {
  readonly doc: Document;
  blind: boolean;
  allowNoPreference: boolean;
  pollMs: number;
  inFlight = false;
  currentQuery: QueryPayload | null = null;
  finished = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    readonly root: HTMLElement,
    readonly api: ApiClient,
    readonly sessionId: string,
    opts: AppOptions = {},
  ) {
    this.doc = root.ownerDocument;
    this.blind = opts.blind ?? true;
    this.allowNoPreference = opts.allowNoPreference ?? true;
    this.pollMs = opts.pollMs ?? 1000;
  }

  async start(): Promise<void> {
    await this.refresh();
  }

  /** Fetch the pending query or the completion state and render it. */
  async refresh(): Promise<void> {
    const query = await this.api.getQuery(this.sessionId);
    if (query) {
      this.currentQuery = query;
      this.renderQuery(query);
      return;
    }
    this.currentQuery = null;
    const record = await this.api.getSession(this.sessionId);
    if (record.status === "optimization_done" || record.status === "closed") {
      const estimate = await this.api.getEstimate(this.sessionId);
      this.finished = true;
      this.stopPolling();
      this.root.replaceChildren(
        renderCompletionView(
          this.doc,
          (record.stop_reason as string) ?? estimate?.stop_reason ?? "none_yet",
          estimate?.recommendation ?? null,
          estimate?.history ?? [],
        ),
      );
      return;
    }
    this.root.replaceChildren(renderWaiting(this.doc, "waiting for the next pair..."));
    this.schedulePoll();
  }

  private renderQuery(query: QueryPayload): void {
    const { root: view, buttons } = renderQueryView(
      this.doc,
      query,
      this.blind,
      this.allowNoPreference,
    );
    for (const [choice, button] of Object.entries(buttons)) {
      button.addEventListener("click", () => {
        void this.choose(choice as Choice);
      });
    }
    const toggle = el(this.doc, "button", "toggle-values", this.blind ? "Show values" : "Hide values");
    toggle.setAttribute("data-role", "toggle-values");
    toggle.addEventListener("click", () => {
      this.blind = !this.blind;
      if (this.currentQuery) this.renderQuery(this.currentQuery);
    });
    view.appendChild(toggle);
    this.root.replaceChildren(view);
  }

  /** Submit a choice exactly once; stale queries trigger a silent refetch. */
  async choose(choice: Choice): Promise<void> {
    if (this.inFlight || !this.currentQuery) return;
    this.inFlight = true;
    this.setButtonsDisabled(true);
    const queryId = this.currentQuery.query_id;
    try {
      await this.api.postResponse(this.sessionId, queryId, choice);
    } catch (err) {
      if (!(err instanceof StaleQueryError)) {
        this.setButtonsDisabled(false);
        this.inFlight = false;
        throw err;
      }
    }
    this.inFlight = false;
    await this.refresh();
  }

  private setButtonsDisabled(disabled: boolean): void {
    for (const node of Array.from(this.root.querySelectorAll("button"))) {
      (node as HTMLButtonElement).disabled = disabled;
    }
  }

  private schedulePoll(): void {
    if (this.timer !== null || this.pollMs <= 0) return;
    this.timer = setTimeout(() => {
      this.timer = null;
      if (!this.finished) void this.refresh();
    }, this.pollMs);
  }

  private stopPolling(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }
}

export class ValidationApp {
  readonly doc: Document;
  inFlight = false;
  currentQuery: QueryPayload | null = null;

  constructor(
    readonly root: HTMLElement,
    readonly api: ApiClient,
    readonly roundId: string,
  ) {
    this.doc = root.ownerDocument;
  }

  async start(): Promise<void> {
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const query = await this.api.getQuery(this.roundId);
    if (query) {
      this.currentQuery = query;
      const { root: view, buttons } = renderQueryView(this.doc, query, true, true);
      for (const [choice, button] of Object.entries(buttons)) {
        button.addEventListener("click", () => {
          void this.choose(choice as Choice);
        });
      }
      this.root.replaceChildren(view);
      return;
    }
    await this.showSummary();
  }

  async showSummary(): Promise<void> {
    const record = await this.api.getValidation(this.roundId);
    this.currentQuery = null;
    this.root.replaceChildren(
      renderValidationSummary(
        this.doc,
        (record.recognition_rate as number | null) ?? null,
        (record.pairs_answered as number) ?? 0,
        (record.pairs_total as number) ?? 0,
        Boolean(record.complete),
      ),
    );
  }

  async choose(choice: Choice): Promise<void> {
    if (this.inFlight || !this.currentQuery) return;
    this.inFlight = true;
    try {
      await this.api.postResponse(this.roundId, this.currentQuery.query_id, choice);
    } catch (err) {
      if (!(err instanceof StaleQueryError)) {
        this.inFlight = false;
        throw err;
      }
    }
    this.inFlight = false;
    await this.refresh();
  }
}
