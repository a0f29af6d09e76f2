/**
 * Minimal SVG line chart. The values plotted are exactly the series values
 * given; only their pixel positions are computed here.
 */

import type { SeriesPoint } from "./progress.js";

const NS = "http://www.w3.org/2000/svg";
const W = 320;
const H = 140;
const PAD = 28;

function svgEl(tag: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(NS, tag) as SVGElement;
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

function scale(points: SeriesPoint[], pick: (p: SeriesPoint) => number, lo: number, hi: number) {
  const vals = points.map(pick);
  const min = Math.min(...vals);
  const max = Math.max(...vals);
  const span = max - min || 1;
  return (v: number) => lo + ((v - min) / span) * (hi - lo);
}

export function renderLineChart(container: Element, title: string, points: SeriesPoint[]): void {
  container.textContent = "";
  const svg = svgEl("svg", {
    viewBox: `0 0 ${W} ${H}`,
    width: String(W),
    height: String(H),
    role: "img",
    "data-chart": title,
    "data-points": String(points.length),
  });
  svg.append(svgEl("rect", { x: "0", y: "0", width: String(W), height: String(H), class: "chart-bg" }));
  const caption = svgEl("text", { x: String(PAD), y: "14", class: "chart-title" });
  caption.textContent = title;
  svg.append(caption);

  if (points.length === 0) {
    const empty = svgEl("text", { x: String(W / 2), y: String(H / 2), class: "chart-empty", "text-anchor": "middle" });
    empty.textContent = "no data yet";
    svg.append(empty);
    container.append(svg);
    return;
  }

  const sx = scale(points, (p) => p.x, PAD, W - 8);
  const sy = scale(points, (p) => p.y, H - 16, 22);
  const path = points.map((p) => `${sx(p.x).toFixed(1)},${sy(p.y).toFixed(1)}`).join(" ");
  svg.append(svgEl("polyline", { points: path, class: "chart-line", fill: "none" }));
  for (const p of points) {
    svg.append(svgEl("circle", { cx: sx(p.x).toFixed(1), cy: sy(p.y).toFixed(1), r: "2.5", class: "chart-dot" }));
  }
  const last = points[points.length - 1]!;
  const label = svgEl("text", { x: String(W - 8), y: "14", class: "chart-last", "text-anchor": "end" });
  label.textContent = String(last.y);
  svg.append(label);
  container.append(svg);
}
