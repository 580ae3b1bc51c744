/** Pure overlay geometry: fit an image into the canvas and build draw ops. */

import type { OverlayData, Role } from "./types.js";

// Fixed convention: dataset labels are green, model predictions are red.
export const ROLE_COLORS: Record<Role, string> = {
  ground_truth: "green",
  prediction: "red",
};

export interface FitTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

/** Letterbox imgW x imgH into canvasW x canvasH, preserving aspect. */
export function fitImage(
  imgW: number,
  imgH: number,
  canvasW: number,
  canvasH: number,
): FitTransform {
  const scale = Math.min(canvasW / imgW, canvasH / imgH);
  return {
    scale,
    offsetX: (canvasW - imgW * scale) / 2,
    offsetY: (canvasH - imgH * scale) / 2,
  };
}

export function toCanvas(t: FitTransform, point: [number, number]): [number, number] {
  return [t.offsetX + point[0] * t.scale, t.offsetY + point[1] * t.scale];
}

export interface DrawOp {
  role: Role;
  color: string;
  points: [number, number][];
}

/**
 * Polygon draw list in canvas coordinates. Ground truth comes first so the
 * prediction is always painted on top of it.
 */
export function overlayDrawOps(
  data: OverlayData,
  canvasW: number,
  canvasH: number,
): DrawOp[] {
  const t = fitImage(data.width, data.height, canvasW, canvasH);
  const ordered = [...data.polygons].sort((a, b) =>
    a.role === b.role ? 0 : a.role === "ground_truth" ? -1 : 1,
  );
  return ordered.map((polygon) => ({
    role: polygon.role,
    color: ROLE_COLORS[polygon.role],
    points: polygon.corners.map((corner) => toCanvas(t, corner)),
  }));
}

/** The subset of CanvasRenderingContext2D the renderer needs. */
export interface CanvasLike {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
}

export function drawPolygons(ctx: CanvasLike, ops: DrawOp[]): void {
  for (const op of ops) {
    const [first, ...rest] = op.points;
    if (!first) continue;
    ctx.strokeStyle = op.color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(first[0], first[1]);
    for (const point of rest) ctx.lineTo(point[0], point[1]);
    ctx.closePath();
    ctx.stroke();
  }
}
