// Plain-DOM rendering. Both option cards are built by the same function from
// the service payload alone, so nothing in the document can distinguish the
// incumbent from the challenger.

import type { EstimateEntry, OptionView, Progress, QueryPayload } from "./api.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function formatValue(value: number): string {
  return value.toFixed(2);
}

function renderParamRow(doc: Document, p: OptionView["params"][number]): HTMLElement {
  const row = el(doc, "div", "param-row");
  row.appendChild(el(doc, "span", "param-name", p.name));
  const value = el(doc, "span", "param-value", `${formatValue(p.value)} ${p.unit_label}`);
  row.appendChild(value);
  const track = el(doc, "div", "param-track");
  const marker = el(doc, "div", "param-marker");
  const frac = (p.value - p.lower) / (p.upper - p.lower);
  marker.style.left = `${Math.max(0, Math.min(100, frac * 100)).toFixed(1)}%`;
  track.appendChild(marker);
  row.appendChild(track);
  return row;
}

export function renderOptionCard(
  doc: Document,
  label: "A" | "B",
  option: OptionView,
  blind: boolean,
): HTMLElement {
  const card = el(doc, "div", "option-card");
  card.setAttribute("data-option", label);
  card.appendChild(el(doc, "div", "option-label", label));
  const details = el(doc, "div", "option-details");
  if (!blind) {
    for (const p of option.params) details.appendChild(renderParamRow(doc, p));
  } else {
    details.appendChild(el(doc, "div", "blind-note", "values hidden"));
  }
  card.appendChild(details);
  return card;
}

export function renderProgress(doc: Document, progress: Progress): HTMLElement {
  const bar = el(doc, "div", "progress");
  const label =
    progress.phase === "init"
      ? `familiarization pair ${(progress.init_pairs_done ?? 0) + 1} of ${progress.n_init_pairs ?? "?"}`
      : progress.phase === "validation"
        ? `validation pair ${progress.iteration + 1} of ${progress.budget}`
        : `iteration ${progress.iteration + 1} of ${progress.budget}`;
    bar.textContent = label;
  return bar;
}

export interface QueryViewHandles {
  root: HTMLElement;
  buttons: Record<string, HTMLButtonElement>;
}

export function renderQueryView(
  doc: Document,
  query: QueryPayload,
  blind: boolean,
  allowNoPreference: boolean,
): QueryViewHandles {
  const root = el(doc, "div", "query-view");
  root.setAttribute("data-query-id", query.query_id);
  root.appendChild(renderProgress(doc, query.progress));
  const cards = el(doc, "div", "option-cards");
  cards.appendChild(renderOptionCard(doc, "A", query.option_A, blind));
  cards.appendChild(renderOptionCard(doc, "B", query.option_B, blind));
  root.appendChild(cards);
  const controls = el(doc, "div", "controls");
  const buttons: Record<string, HTMLButtonElement> = {};
  const plans: Array<[string, string]> = [
    ["A", "Prefer A"],
    ["B", "Prefer B"],
  ];
  if (allowNoPreference) plans.push(["no_preference", "No preference"]);
  for (const [choice, text] of plans) {
    const button = el(doc, "button", "choice-button", text);
    button.setAttribute("data-choice", choice);
    controls.appendChild(button);
    buttons[choice] = button;
  }
  root.appendChild(controls);
  return { root, buttons };
}

export function renderConvergenceChart(
  doc: Document,
  history: EstimateEntry[],
): SVGSVGElement {
  const ns = "http://www.w3.org/2000/svg";
  const width = 560;
  const height = 240;
  const pad = 30;
  const svg = doc.createElementNS(ns, "svg") as SVGSVGElement;
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "convergence-chart");
  if (history.length === 0) return svg;
  const dims = history[0].params.length;
  const colors = ["#3b82f6", "#22c55e", "#eab308", "#a855f7", "#ef4444", "#14b8a6"];
  const n = history.length;
  for (let d = 0; d < dims; d++) {
    const spec = history[0].params[d];
    const points = history
      .map((entry, i) => {
        const x = pad + (n === 1 ? 0 : (i / (n - 1)) * (width - 2 * pad));
        const frac = (entry.params[d].value - spec.lower) / (spec.upper - spec.lower);
        const y = height - pad - frac * (height - 2 * pad);
        return `${x.toFixed(1)},${y.toFixed(1)}`;
      })
      .join(" ");
    const line = doc.createElementNS(ns, "polyline");
    line.setAttribute("points", points);
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", colors[d % colors.length]);
    line.setAttribute("stroke-width", "2");
    line.setAttribute("data-dimension", spec.name);
    svg.appendChild(line);
  }
  return svg;
}

export function renderCompletionView(
  doc: Document,
  stopReason: string,
  recommendation: EstimateEntry | null,
  history: EstimateEntry[],
): HTMLElement {
  const root = el(doc, "div", "completion-view");
  const banner = el(
    doc,
    "div",
    "stop-banner",
    stopReason === "stability"
      ? "Converged: preferences stabilized"
      : "Finished: query budget exhausted",
  );
  banner.setAttribute("data-stop-reason", stopReason);
  root.appendChild(banner);
  if (recommendation) {
    const summary = el(doc, "div", "recommendation");
    summary.appendChild(el(doc, "h3", undefined, "Preferred configuration"));
    for (const p of recommendation.params) {
      summary.appendChild(
        el(doc, "div", "rec-param", `${p.name}: ${formatValue(p.value)} ${p.unit_label}`),
      );
    }
    root.appendChild(summary);
  }
  root.appendChild(renderConvergenceChart(doc, history));
  return root;
}

export function renderValidationSummary(
  doc: Document,
  rate: number | null,
  answered: number,
  total: number,
  complete: boolean,
): HTMLElement {
  const root = el(doc, "div", "validation-summary");
  const pct = rate === null ? "n/a" : `${Math.round(rate * 100)}%`;
  root.appendChild(el(doc, "h3", undefined, "Validation result"));
  const rateNode = el(doc, "div", "recognition-rate", pct);
  rateNode.setAttribute("data-rate", rate === null ? "" : String(rate));
  root.appendChild(rateNode);
  root.appendChild(
    el(doc, "div", "validation-progress", `${answered} of ${total} pairs answered`),
  );
  if (!complete) {
    const flag = el(doc, "div", "incomplete-flag", "round incomplete");
    root.appendChild(flag);
  }
  return root;
}

export function renderWaiting(doc: Document, message: string): HTMLElement {
  return el(doc, "div", "waiting", message);
}
