/** DOM shell wiring the review session, canvas overlays, and dashboard. */

import { ReviewApi } from "./api.js";
import {
  falseCountPoints,
  proportionSeries,
  segmentPaths,
  segments,
  type ChartScale,
  type Pt,
} from "./charts.js";
import { ROLE_COLORS, drawPolygons, fitImage, overlayDrawOps } from "./overlay.js";
import { ReviewSession } from "./queue.js";
import type { OverlayData, StatsRow, Verdict } from "./types.js";

const OPERATOR_KEY = "refinery.operator";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const api = new ReviewApi();
const session = new ReviewSession(api, { onChange: render });

const operatorInput = el<HTMLInputElement>("operator");
const startButton = el<HTMLButtonElement>("start");
const reviewPanel = el<HTMLElement>("review");
const completePanel = el<HTMLElement>("complete");
const summaryList = el<HTMLElement>("summary");
const canvas = el<HTMLCanvasElement>("scene");
const itemMeta = el<HTMLElement>("item-meta");
const queueMeta = el<HTMLElement>("queue-meta");
const countdown = el<HTMLElement>("countdown");
const noticeLine = el<HTMLElement>("notice");
const conflictLine = el<HTMLElement>("conflict");
const expiredPrompt = el<HTMLElement>("expired");
const reloadButton = el<HTMLButtonElement>("reload");
const buttons: Record<Verdict, HTMLButtonElement> = {
  true_negative: el<HTMLButtonElement>("verdict-tn"),
  fn_missing_label: el<HTMLButtonElement>("verdict-add"),
  fn_annotation_error: el<HTMLButtonElement>("verdict-remove"),
};
const skipButton = el<HTMLButtonElement>("verdict-skip");
const chartFalse = el<HTMLElement>("chart-false");
const chartProportion = el<HTMLElement>("chart-proportion");

operatorInput.value = localStorage.getItem(OPERATOR_KEY) ?? "";

let overlayCache: { id: string; data: OverlayData } | null = null;
let imageCache: { url: string; bitmap: HTMLImageElement } | null = null;

function render(): void {
  const reviewing = session.screen === "reviewing" && session.current !== null;
  reviewPanel.hidden = session.screen !== "reviewing";
  completePanel.hidden = session.screen !== "complete";
  conflictLine.textContent = session.conflict ? `conflict: ${session.conflict}` : "";
  conflictLine.hidden = !session.conflict;
  noticeLine.textContent = session.notice ?? "";
  noticeLine.hidden = !session.notice;

  if (reviewing && session.current) {
    const { item, queue } = session.current;
    itemMeta.textContent =
      `${item.image_id} — iteration ${item.iteration}, ${item.gt_count} label` +
      `${item.gt_count === 1 ? "" : "s"}` +
      (item.candidate
        ? `, candidate ${item.candidate.prediction_id}` +
          (item.candidate.confidence !== null
            ? ` (confidence ${item.candidate.confidence.toFixed(3)})`
            : "")
        : ", no candidate");
    queueMeta.textContent =
      `${queue.pending} pending / ${queue.decided} decided of ${queue.total}` +
      ` — you: ${session.decided} decided, ${session.skipped} skipped`;
    const expired = session.expired();
    expiredPrompt.hidden = !expired;
    for (const [verdict, button] of Object.entries(buttons) as [Verdict, HTMLButtonElement][]) {
      button.disabled = !session.canSubmit(verdict);
    }
    skipButton.disabled = session.busy || expired;
    void paintScene();
  }
  if (session.screen === "complete") {
    void paintSummary();
    void paintDashboard();
  }
}

async function paintScene(): Promise<void> {
  if (!session.current) return;
  const item = session.current.item;
  if (!overlayCache || overlayCache.id !== item.item_id) {
    overlayCache = { id: item.item_id, data: await api.overlay(item.overlay_url) };
  }
  const data = overlayCache.data;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const t = fitImage(data.width, data.height, canvas.width, canvas.height);
  ctx.fillStyle = "#202830";
  ctx.fillRect(t.offsetX, t.offsetY, data.width * t.scale, data.height * t.scale);
  if (data.image_url) {
    const bitmap = await loadImage(data.image_url);
    ctx.drawImage(bitmap, t.offsetX, t.offsetY, data.width * t.scale, data.height * t.scale);
  }
  drawPolygons(ctx, overlayDrawOps(data, canvas.width, canvas.height));
  ctx.globalAlpha = session.expired() ? 0.35 : 1.0;
}

function loadImage(url: string): Promise<HTMLImageElement> {
  if (imageCache && imageCache.url === url) return Promise.resolve(imageCache.bitmap);
  return new Promise((resolve, reject) => {
    const bitmap = new Image();
    bitmap.onload = () => {
      imageCache = { url, bitmap };
      resolve(bitmap);
    };
    bitmap.onerror = () => reject(new Error(`image load failed: ${url}`));
    bitmap.src = url;
  });
}

async function paintSummary(): Promise<void> {
  const info = await api.iterations();
  const rows = info.iterations
    .map(
      (s) =>
        `<li>iteration ${s.iteration}: ${s.labels_added} labels added, ` +
        `${s.images_removed} images removed, ${s.tn_count} spurious flags</li>`,
    )
    .join("");
  summaryList.innerHTML =
    rows || "<li>no decisions recorded yet</li>";
}

function chartSvg(paths: string[], pointSets: Pt[][], colors: string[], scale: ChartScale): string {
  const body: string[] = [];
  paths.forEach((d, i) => {
    body.push(
      `<path d="${d}" fill="none" stroke="${colors[i] ?? "#888"}" stroke-width="2"/>`,
    );
  });
  pointSets.forEach((pts, i) => {
    for (const pt of pts) {
      const [cx, cy] = scalePointFor(scale, pt);
      body.push(`<circle cx="${cx}" cy="${cy}" r="3" fill="${colors[i] ?? "#888"}"/>`);
    }
  });
  return (
    `<svg viewBox="0 0 ${scale.width} ${scale.height}" ` +
    `xmlns="http://www.w3.org/2000/svg">${body.join("")}</svg>`
  );
}

function scalePointFor(scale: ChartScale, pt: Pt): [number, number] {
  const spanX = scale.xMax - scale.xMin || 1;
  const spanY = scale.yMax - scale.yMin || 1;
  return [
    scale.pad + ((pt.x - scale.xMin) / spanX) * (scale.width - 2 * scale.pad),
    scale.height - scale.pad - ((pt.y - scale.yMin) / spanY) * (scale.height - 2 * scale.pad),
  ];
}

async function paintDashboard(): Promise<void> {
  let rows: StatsRow[] = [];
  try {
    rows = await api.stats();
  } catch {
    rows = [];
  }
  if (rows.length === 0) {
    chartFalse.innerHTML = "<p class='placeholder'>no iterations recorded yet</p>";
    chartProportion.innerHTML = "<p class='placeholder'>no iterations recorded yet</p>";
    return;
  }
  const iterations = rows.map((row) => row.iteration);
  const xMin = Math.min(...iterations);
  const xMax = Math.max(...iterations);

  const falsePts = falseCountPoints(rows);
  const falseScale: ChartScale = {
    xMin,
    xMax,
    yMin: 0,
    yMax: Math.max(1, ...falsePts.map((pt) => pt.y)),
    width: 360,
    height: 180,
    pad: 18,
  };
  const falseSegs = [falsePts];
  chartFalse.innerHTML = chartSvg(
    segmentPaths(falseSegs, falseScale),
    falseSegs,
    ["#4ea1d3"],
    falseScale,
  );

  const props = proportionSeries(rows);
  const propScale: ChartScale = { xMin, xMax, yMin: 0, yMax: 1, width: 360, height: 180, pad: 18 };
  const fnSegs = segments(props.iterations, props.fn);
  const tnSegs = segments(props.iterations, props.tn);
  chartProportion.innerHTML = chartSvg(
    [...segmentPaths(fnSegs, propScale), ...segmentPaths(tnSegs, propScale)],
    [...fnSegs, ...tnSegs],
    [
      ...fnSegs.map(() => ROLE_COLORS.prediction),
      ...tnSegs.map(() => ROLE_COLORS.ground_truth),
    ],
    propScale,
  );
}

startButton.addEventListener("click", () => {
  const operator = operatorInput.value.trim();
  if (!operator) {
    operatorInput.focus();
    return;
  }
  localStorage.setItem(OPERATOR_KEY, operator);
  void session.start(operator);
});

reloadButton.addEventListener("click", () => void session.reload());

for (const [verdict, button] of Object.entries(buttons) as [Verdict, HTMLButtonElement][]) {
  button.addEventListener("click", () => void session.submit(verdict));
}
skipButton.addEventListener("click", () => void session.skip());

document.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement) return;
  const action = session.keyVerdict(event.key);
  if (action === null) return;
  event.preventDefault();
  if (action === "skip") void session.skip();
  else void session.submit(action);
});

window.setInterval(() => {
  if (session.screen !== "reviewing" || !session.current) {
    countdown.textContent = "";
    return;
  }
  const remaining = Math.max(0, session.leaseRemaining());
  const minutes = Math.floor(remaining / 60);
  const seconds = Math.floor(remaining % 60);
  countdown.textContent = `lease ${minutes}:${String(seconds).padStart(2, "0")}`;
  if (session.expired()) render();
}, 1000);

void paintDashboard();
render();
